//! Coupled simulation of decoration-reproduction processes.
//!
//! A Lévy driver with a truncated jump measure is turned into a decoration
//! path by the Lamperti time change. Paths started from other values are
//! coupled to such a reference path by pushing each of its relative jumps
//! through the growing family, while an Euler scheme for the jump SDE
//! provides an independent cross-check of the same coupling.
//!
//! Between two knots the driver is linear, so `X^α` is linear in real time
//! with slope `α` times the driver slope; the time change is integrated in
//! closed form on every segment.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::growing::{FamilyKind, GrowingFamily};
use crate::measures::quadruplet::log_followed_integral;
use crate::measures::{CharacteristicQuadruplet, Cutoffs, MeasureKind, TruncatedSampler};
use crate::numerics::ks::{ks_two_sample, KsResult};
use crate::numerics::rng::{substream, Stream};
use crate::sequence::{DecorationSequence, MAX_LEN};
use crate::svg::{color, Canvas};

/// Default grid step for Brownian increments and the Euler scheme.
pub const DEFAULT_STEP: f64 = 1e-4;
/// A path is a candidate for absorption once it falls below this fraction of
/// its starting value.
pub const ABSORPTION_RATIO: f64 = 1e-6;
/// Relative order violation tolerated during construction before a
/// consistency error is raised.
pub const CONSTRUCTION_SLACK: f64 = 1e-9;
/// Default relative slack of [`monotonicity_audit`].
pub const AUDIT_SLACK: f64 = 1e-12;

const INV_E: f64 = 0.367_879_441_171_442_33;
/// Largest relative change of the reference `X^α` over one piece of a derived
/// drift segment.
const PIECE_CHANGE: f64 = 0.05;
const MAX_PIECES: usize = 1000;
const TABLE_NODES: usize = 361;
const TABLE_LOG_RANGE: (f64, f64) = (-27.0, 9.0);

/// Which construction produces the coupled paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Lamperti top path, lower paths derived by transforming its jumps.
    PureJump,
    /// Euler scheme for the SDE on a uniform real-time grid, driven by the
    /// same Poisson atoms.
    Euler,
}

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub cutoffs: Cutoffs,
    /// Grid step of the Brownian part (Lévy time) and of the Euler scheme
    /// (real time).
    pub step: f64,
    /// Initial Lévy-time length of a trace; traces grow by this amount when a
    /// path needs more.
    pub horizon: f64,
    /// Traces are never extended beyond this Lévy time.
    pub max_levy_time: f64,
    pub absorption_ratio: f64,
    /// Whether traces may be extended on demand.
    pub extend: bool,
    pub backend: Backend,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            cutoffs: Cutoffs::default(),
            step: DEFAULT_STEP,
            horizon: 10.0,
            max_levy_time: 1e4,
            absorption_ratio: ABSORPTION_RATIO,
            extend: true,
            backend: Backend::PureJump,
        }
    }
}

impl SimOptions {
    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.horizon > 0.0) || !(self.max_levy_time >= self.horizon) {
            return Err(Error::Validation(format!(
                "need step > 0 and 0 < horizon <= max_levy_time, got {}, {}, {}",
                self.step, self.horizon, self.max_levy_time
            )));
        }
        if !(self.absorption_ratio > 0.0 && self.absorption_ratio < 1.0) {
            return Err(Error::Validation(format!("absorption ratio must lie in (0, 1), got {}", self.absorption_ratio)));
        }
        Ok(())
    }
}

/// Lévy process `ξ` with the small jumps of the followed coordinate folded
/// into the drift.
#[derive(Debug, Clone)]
pub struct LevyDriver {
    /// Drift of `ξ` once the retained jumps are simulated uncompensated.
    pub drift: f64,
    pub sigma: f64,
    /// `∫ log y₀ dΞ₀` over the discarded small jumps.
    pub compensation: f64,
    pub alpha: f64,
    /// `ψ(α)`, the Laplace exponent of `ξ` at `α`.
    pub psi_alpha: f64,
    sampler: TruncatedSampler,
}

impl LevyDriver {
    pub fn new(quad: &CharacteristicQuadruplet, cutoffs: Cutoffs) -> Result<Self> {
        let sampler = quad.measure.sampler(cutoffs)?;
        let gap = cutoffs.followed_gap();
        let drift = quad.truncated_drift(&cutoffs)?;
        let compensation = log_followed_integral(&quad.measure, 1.0 - gap, 1.0)?;
        Ok(LevyDriver {
            drift,
            sigma: quad.sigma2.sqrt(),
            compensation,
            alpha: quad.alpha,
            psi_alpha: quad.levy_exponent(quad.alpha),
            sampler,
        })
    }

    pub fn sampler(&self) -> &TruncatedSampler {
        &self.sampler
    }

    /// `E ∫₀^∞ e^{αξ_s} ds = −1/ψ(α)` when `ψ(α) < 0`, else `0`.
    pub fn remainder(&self) -> f64 {
        if self.psi_alpha < 0.0 && self.psi_alpha.is_finite() {
            -1.0 / self.psi_alpha
        } else {
            0.0
        }
    }
}

/// A retained jump of the driver.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceJump {
    pub time: f64,
    /// Index of the post-jump knot; the pre-jump knot precedes it.
    pub knot: usize,
    pub mark: DecorationSequence,
}

/// Sampled driver: knots `(time, ξ)` with `ξ` linear between consecutive
/// knots; a jump appears as two knots with the same time.
#[derive(Debug, Clone)]
pub struct LevyTrace {
    pub step: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub jumps: Vec<TraceJump>,
    drift: f64,
    sigma: f64,
    jump_rng: Stream,
    noise_rng: Stream,
    pending: f64,
    jump_sum: f64,
    cell: u64,
    w_lo: f64,
    w_hi: f64,
}

impl LevyTrace {
    /// Lévy time covered so far.
    pub fn length(&self) -> f64 {
        *self.times.last().expect("a trace always has its initial knot")
    }

    fn w_at(&self, t: f64) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let t0 = self.cell as f64 * self.step;
        self.w_lo + (self.w_hi - self.w_lo) * ((t - t0) / self.step)
    }

    fn xi_cont(&self, t: f64) -> f64 {
        self.drift * t + self.sigma * self.w_at(t) + self.jump_sum
    }

    /// Samples the driver up to Lévy time `until`.
    pub fn extend_to(&mut self, driver: &LevyDriver, until: f64) {
        let scale = self.step.sqrt();
        loop {
            let next_grid = if self.sigma > 0.0 { (self.cell + 1) as f64 * self.step } else { f64::INFINITY };
            if self.pending.min(next_grid) > until {
                if until > self.length() {
                    let v = self.xi_cont(until);
                    self.times.push(until);
                    self.values.push(v);
                }
                return;
            }
            if self.pending <= next_grid {
                let t = self.pending;
                if let Some(mark) = driver.sampler.try_draw(&mut self.jump_rng) {
                    let pre = self.xi_cont(t);
                    self.jump_sum += mark.followed().ln();
                    let post = self.xi_cont(t);
                    self.times.extend([t, t]);
                    self.values.extend([pre, post]);
                    self.jumps.push(TraceJump { time: t, knot: self.times.len() - 1, mark });
                }
                self.pending += driver.sampler.next_gap(&mut self.jump_rng);
            } else {
                let z: f64 = self.noise_rng.sample(StandardNormal);
                self.cell += 1;
                self.w_lo = self.w_hi;
                self.w_hi += scale * z;
                let v = self.xi_cont(next_grid);
                self.times.push(next_grid);
                self.values.push(v);
            }
        }
    }

    /// `ξ(t)` (right-continuous) for `t` within the sampled range.
    pub fn xi_at(&self, t: f64) -> Option<f64> {
        if !(t >= 0.0) || t > self.length() {
            return None;
        }
        let i = self.times.partition_point(|s| *s <= t) - 1;
        if i + 1 == self.times.len() || self.times[i] == t {
            return Some(self.values[i]);
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        Some(self.values[i] + (self.values[i + 1] - self.values[i]) * (t - t0) / (t1 - t0))
    }
}

/// Samples the driver on `[0, horizon]`; deterministic per seed.
pub fn simulate_levy(driver: &LevyDriver, horizon: f64, step: f64, seed: u64) -> LevyTrace {
    let mut jump_rng = substream(seed, 0);
    let mut noise_rng = substream(seed, 1);
    let pending = driver.sampler.next_gap(&mut jump_rng);
    let w_hi = if driver.sigma > 0.0 { step.sqrt() * noise_rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
    let mut trace = LevyTrace {
        step,
        times: vec![0.0],
        values: vec![0.0],
        jumps: Vec::new(),
        drift: driver.drift,
        sigma: driver.sigma,
        jump_rng,
        noise_rng,
        pending,
        jump_sum: 0.0,
        cell: 0,
        w_lo: 0.0,
        w_hi,
    };
    trace.extend_to(driver, horizon);
    trace
}

/// A jump of a decoration path: the pre-jump value and the relative split.
#[derive(Debug, Clone, PartialEq)]
pub struct PathJump {
    pub time: f64,
    pub pre: f64,
    pub seq: DecorationSequence,
}

/// A child mark `(time, initial decoration)`; `rank` is the offspring index
/// within its jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub time: f64,
    pub value: f64,
    pub jump: usize,
    pub rank: usize,
}

/// Post-jump value and absolute offspring of a split of `pre`.
///
/// For a conservative binary split the smaller part is computed as a
/// difference, so that `post + child == pre` holds exactly in floating point.
pub fn split_values(pre: f64, seq: &DecorationSequence) -> (f64, Vec<f64>) {
    let y0 = seq.followed();
    let off = seq.offspring();
    if off.len() == 1 && (y0 + off[0] - 1.0).abs() <= 1e-12 {
        if y0 >= off[0] {
            let post = pre * y0;
            (post, vec![pre - post])
        } else {
            let child = pre * off[0];
            (pre - child, vec![child])
        }
    } else {
        (pre * y0, off.iter().map(|v| pre * v).collect())
    }
}

/// A decoration path `X` with its reproduction marks.
///
/// Knots `(times, values)` are right-continuous; a jump is a pair of knots
/// with equal times. Between knots `X^α` is linear in time. A path that ends
/// alive (a prefix) has `absorption = ∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecorationPath {
    pub x0: f64,
    pub alpha: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub jumps: Vec<PathJump>,
    pub absorption: f64,
    /// Set when the driver hit its length cap before absorption.
    pub truncated: bool,
}

impl DecorationPath {
    fn start(x0: f64, alpha: f64) -> Self {
        DecorationPath {
            x0,
            alpha,
            times: vec![0.0],
            values: vec![x0],
            jumps: Vec::new(),
            absorption: f64::INFINITY,
            truncated: false,
        }
    }

    fn push(&mut self, t: f64, v: f64) {
        self.times.push(t);
        self.values.push(v);
    }

    fn absorb(&mut self, z: f64) {
        self.push(z, 0.0);
        self.absorption = z;
    }

    /// Whether the path ends alive at its last knot.
    pub fn is_prefix(&self) -> bool {
        self.absorption.is_infinite()
    }

    /// Time of the last knot.
    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("paths always have a first knot")
    }

    /// Value at the last knot.
    pub fn end_value(&self) -> f64 {
        *self.values.last().expect("paths always have a first knot")
    }

    /// `X_t`, right-continuous; `0` from absorption on and `None` beyond the
    /// end of a prefix.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        if t >= self.absorption {
            return Some(0.0);
        }
        if !(t >= 0.0) || t > self.end_time() {
            return None;
        }
        let i = self.times.partition_point(|s| *s <= t) - 1;
        Some(self.interpolate(i, t))
    }

    /// Left limit `X_{t−}`.
    pub fn value_before(&self, t: f64) -> Option<f64> {
        if t > self.absorption {
            return Some(0.0);
        }
        if !(t > 0.0) || t > self.end_time() {
            return if t == 0.0 { Some(self.x0) } else { None };
        }
        let i = self.times.partition_point(|s| *s < t) - 1;
        Some(self.interpolate(i, t))
    }

    fn interpolate(&self, i: usize, t: f64) -> f64 {
        if i + 1 == self.times.len() || self.times[i] == t {
            return self.values[i];
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let a0 = self.values[i].powf(self.alpha);
        let a1 = self.values[i + 1].powf(self.alpha);
        let a = a0 + (a1 - a0) * ((t - t0) / (t1 - t0));
        a.max(0.0).powf(1.0 / self.alpha)
    }

    /// Child marks, in jump order and by rank within each jump.
    pub fn atoms(&self) -> Vec<Atom> {
        let mut out = Vec::new();
        for (j, jump) in self.jumps.iter().enumerate() {
            let (_, kids) = split_values(jump.pre, &jump.seq);
            out.extend(kids.into_iter().enumerate().map(|(rank, value)| Atom { time: jump.time, value, jump: j, rank }));
        }
        out
    }

    /// Number of knots.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Lamperti transform of a trace started from `x0`; the trace is extended as
/// needed when `extend` is set.
///
/// Absorption is declared at a knot where `X < ratio·x0` and the expected
/// remaining time change `X^α/(−ψ(α))` is below `step`; that expected
/// remainder is added to the absorption time and the path decays linearly in
/// `X^α` to zero over it.
pub fn lamperti(driver: &LevyDriver, trace: &mut LevyTrace, x0: f64, opts: &SimOptions) -> Result<DecorationPath> {
    if !(x0 > 0.0) || !x0.is_finite() {
        return Err(Error::Validation(format!("starting decoration must be positive, got {x0}")));
    }
    let alpha = driver.alpha;
    let rem = driver.remainder();
    let mut path = DecorationPath::start(x0, alpha);
    let (mut x, mut t) = (x0, 0.0);
    let mut clock = Neumaier::default();
    let mut next_jump = 0;
    let mut i = 0;
    loop {
        if path.absorbed_by(x, t, x0, rem, opts) {
            return Ok(path);
        }
        if i + 1 >= trace.times.len() {
            let len = trace.length();
            if !opts.extend || len >= opts.max_levy_time {
                path.truncated = true;
                path.absorb(t + x.powf(alpha) * rem);
                return Ok(path);
            }
            trace.extend_to(driver, (len + opts.horizon).min(opts.max_levy_time));
            continue;
        }
        let (s0, s1) = (trace.times[i], trace.times[i + 1]);
        if s1 == s0 {
            let jump = &trace.jumps[next_jump];
            debug_assert_eq!(jump.knot, i + 1);
            let (post, _) = split_values(x, &jump.mark);
            path.jumps.push(PathJump { time: t, pre: x, seq: jump.mark.clone() });
            path.push(t, post);
            x = post;
            next_jump += 1;
        } else {
            // Values come from `x0·e^ξ` at every knot and times from a
            // compensated sum, so rounding does not accumulate along the path.
            let ds = s1 - s0;
            let k = (trace.values[i + 1] - trace.values[i]) / ds;
            let xa = x0.powf(alpha) * (alpha * trace.values[i]).exp();
            let ak = alpha * k * ds;
            let dt = if ak == 0.0 { xa * ds } else { xa * ak.exp_m1() / (alpha * k) };
            clock.add(dt);
            t = clock.value();
            x = x0 * trace.values[i + 1].exp();
            path.push(t, x);
        }
        i += 1;
    }
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    carry: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl DecorationPath {
    fn absorbed_by(&mut self, x: f64, t: f64, x0: f64, rem: f64, opts: &SimOptions) -> bool {
        let xa = x.powf(self.alpha);
        if x < opts.absorption_ratio * x0 && xa * rem.max(1.0) < opts.step {
            self.absorb(t + xa * rem);
            return true;
        }
        false
    }
}

/// Drift of a derived path as a function of its ratio to the reference path.
///
/// A path at ratio `r` sees the reference's relative jumps pushed through
/// `G_r`, so its discarded set is the image of the reference's discarded set;
/// for families whose followed coordinate depends on `y₀` alone that image is
/// `{y₀ > G_r(1 − c')₀}` and the drift is `a − ∫_{y₀ ≤ G_r(1−c')₀} log y₀ 𝟙 dΞ₀`.
#[derive(Debug, Clone)]
struct DriftTable {
    log_r: Vec<f64>,
    drift: Vec<f64>,
    top: f64,
}

impl DriftTable {
    fn build(quad: &CharacteristicQuadruplet, family: &GrowingFamily, cutoffs: &Cutoffs) -> Result<Self> {
        let top = quad.truncated_drift(cutoffs)?;
        let (lo, hi) = TABLE_LOG_RANGE;
        let log_r: Vec<f64> = (0..TABLE_NODES).map(|i| lo + (hi - lo) * i as f64 / (TABLE_NODES - 1) as f64).collect();
        if matches!(quad.measure.kind, MeasureKind::Height(_)) {
            return Ok(DriftTable { drift: vec![top; log_r.len()], log_r, top });
        }
        if family.kind() == FamilyKind::GeneratorOde {
            return Err(Error::Config(
                "coupled paths need a family whose followed coordinate depends on y0 alone; generator flows are simulated one path at a time"
                    .into(),
            ));
        }
        let gap = cutoffs.followed_gap();
        let threshold = DecorationSequence::binary(1.0 - gap, gap)?;
        let drift = log_r
            .iter()
            .map(|lr| {
                let t = family.evaluate(lr.exp(), &threshold)?.followed();
                let j = if t <= INV_E { 0.0 } else { log_followed_integral(&quad.measure, 0.0, t)? };
                Ok(quad.drift_a - j)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(DriftTable { log_r, drift, top })
    }

    fn eval(&self, r: f64) -> f64 {
        if r == 1.0 {
            return self.top;
        }
        let lr = r.ln();
        let n = self.log_r.len();
        let v = if lr <= self.log_r[0] {
            self.drift[0]
        } else if lr >= self.log_r[n - 1] {
            self.drift[n - 1]
        } else {
            let h = self.log_r[1] - self.log_r[0];
            let i = (((lr - self.log_r[0]) / h) as usize).min(n - 2);
            let w = (lr - self.log_r[i]) / h;
            self.drift[i] + w * (self.drift[i + 1] - self.drift[i])
        };
        if r < 1.0 {
            v.min(self.top)
        } else {
            v.max(self.top)
        }
    }
}

/// Everything needed to simulate one quadruplet with one growing family.
#[derive(Debug)]
pub struct Simulator {
    quad: CharacteristicQuadruplet,
    family: GrowingFamily,
    driver: LevyDriver,
    opts: SimOptions,
    table: OnceLock<std::result::Result<DriftTable, Error>>,
}

impl Simulator {
    pub fn new(quad: CharacteristicQuadruplet, family: GrowingFamily, opts: SimOptions) -> Result<Self> {
        opts.validate()?;
        let driver = LevyDriver::new(&quad, opts.cutoffs)?;
        Ok(Simulator { quad, family, driver, opts, table: OnceLock::new() })
    }

    pub fn quadruplet(&self) -> &CharacteristicQuadruplet {
        &self.quad
    }

    pub fn family(&self) -> &GrowingFamily {
        &self.family
    }

    pub fn driver(&self) -> &LevyDriver {
        &self.driver
    }

    pub fn options(&self) -> &SimOptions {
        &self.opts
    }

    fn table(&self) -> Result<&DriftTable> {
        self.table
            .get_or_init(|| DriftTable::build(&self.quad, &self.family, &self.opts.cutoffs))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Drift of `log X` per unit Lévy time for a path at ratio `r` to its
    /// reference.
    pub fn derived_drift(&self, r: f64) -> Result<f64> {
        Ok(self.table()?.eval(r))
    }

    /// Driver trace on the initial horizon.
    pub fn trace(&self, seed: u64) -> LevyTrace {
        simulate_levy(&self.driver, self.opts.horizon, self.opts.step, seed)
    }

    /// Single decoration path from `x0` by the Lamperti transform.
    pub fn path(&self, x0: f64, seed: u64) -> Result<DecorationPath> {
        let mut trace = self.trace(seed);
        lamperti(&self.driver, &mut trace, x0, &self.opts)
    }

    /// Path from `x` coupled to `reference` by transforming its jumps.
    ///
    /// For `x` below the reference start the result is a complete path
    /// dominated by the reference. For `x` above it the result is the prefix
    /// on `[0, z_ref]`, which may end alive.
    pub fn derive(&self, reference: &DecorationPath, x: f64) -> Result<DecorationPath> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::Validation(format!("starting decoration must be positive, got {x}")));
        }
        if x == reference.x0 {
            return Ok(reference.clone());
        }
        let upward = x > reference.x0;
        let table = self.table()?;
        let alpha = reference.alpha;
        let mut out = DecorationPath::start(x, alpha);
        let mut cur = x;
        let (rt, rv) = (&reference.times, &reference.values);
        let last = if reference.is_prefix() { rt.len() - 1 } else { rt.len() - 2 };
        let mut ji = 0;
        for i in 0..last {
            let (t0, t1) = (rt[i], rt[i + 1]);
            if t1 == t0 {
                let jump = &reference.jumps[ji];
                ji += 1;
                let r = ordered_ratio(cur, jump.pre, upward, t0)?;
                let seq = transform(&self.family, r, &jump.seq)?;
                let (post, _) = split_values(cur, &seq);
                out.jumps.push(PathJump { time: t0, pre: cur, seq });
                out.push(t0, post);
                cur = post;
                check_order(cur, rv[i + 1], upward, t0)?;
                continue;
            }
            let (a0, a1) = (rv[i].powf(alpha), rv[i + 1].powf(alpha));
            let change = (a0 / a1).ln().abs();
            let pieces = ((change / PIECE_CHANGE).ceil() as usize).clamp(1, MAX_PIECES);
            for p in 0..pieces {
                let ta = t0 + (t1 - t0) * p as f64 / pieces as f64;
                let tb = if p + 1 == pieces { t1 } else { t0 + (t1 - t0) * (p + 1) as f64 / pieces as f64 };
                let ref_a = a0 + (a1 - a0) * ((ta - t0) / (t1 - t0));
                let r = cur / ref_a.powf(1.0 / alpha);
                let b = table.eval(r);
                let ca = cur.powf(alpha);
                let next = ca + alpha * b * (tb - ta);
                if next <= 0.0 {
                    out.absorb(ta + ca / (-alpha * b));
                    return Ok(out);
                }
                cur = next.powf(1.0 / alpha);
                out.push(tb, cur);
            }
            check_order(cur, rv[i + 1], upward, t1)?;
        }
        let tf = rt[last];
        if reference.is_prefix() {
            return Ok(out);
        }
        if upward {
            // Follow the drift over the reference's final decay segment.
            let r = cur / rv[last];
            let b = table.eval(r);
            let z_ref = reference.absorption;
            let ca = cur.powf(alpha);
            let next = ca + alpha * b * (z_ref - tf);
            if next <= 0.0 {
                out.absorb(tf + ca / (-alpha * b));
            } else if z_ref > tf {
                out.push(z_ref, next.powf(1.0 / alpha));
            }
            return Ok(out);
        }
        let z = (tf + cur.powf(alpha) * self.driver.remainder()).min(reference.absorption);
        out.absorb(z);
        Ok(out)
    }

    /// Euler path from `x` driven by the atoms of `reference` on the uniform
    /// grid `k·step`; `noise` holds the shared Brownian values at grid nodes.
    pub fn euler(&self, reference: &DecorationPath, x: f64, noise: &[f64]) -> Result<DecorationPath> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::Validation(format!("starting decoration must be positive, got {x}")));
        }
        let table = self.table()?;
        let alpha = reference.alpha;
        let sigma = self.driver.sigma;
        let h = self.opts.step;
        let mut out = DecorationPath::start(x, alpha);
        let mut cur = x;
        let mut t = 0.0;
        let w_at = |s: f64| -> f64 {
            if sigma == 0.0 || noise.is_empty() {
                return 0.0;
            }
            let k = ((s / h) as usize).min(noise.len() - 1);
            let k1 = (k + 1).min(noise.len() - 1);
            noise[k] + (noise[k1] - noise[k]) * (s / h - k as f64)
        };
        let end = reference.end_time();
        let stops: Vec<(f64, Option<usize>)> = reference
            .jumps
            .iter()
            .enumerate()
            .map(|(j, jp)| (jp.time, Some(j)))
            .chain(std::iter::once((end, None)))
            .collect();
        for (stop, jump) in stops {
            while t < stop {
                let k = (t / h).floor() as u64 + 1;
                let tb = (k as f64 * h).min(stop);
                let tb = if tb <= t { stop } else { tb };
                let xr = reference.value_at(t).unwrap_or(0.0);
                let b = if xr > 0.0 { table.eval(cur / xr) } else { table.eval(1.0) };
                let dt = tb - t;
                let mut next = cur + cur.powf(1.0 - alpha) * (b + 0.5 * sigma * sigma) * dt;
                if sigma > 0.0 {
                    next += sigma * cur.powf(1.0 - 0.5 * alpha) * (w_at(tb) - w_at(t));
                }
                if next <= 0.0 {
                    out.absorb(t + dt * cur / (cur - next));
                    return Ok(out);
                }
                cur = next;
                t = tb;
                out.push(t, cur);
            }
            if let Some(j) = jump {
                let jp = &reference.jumps[j];
                let r = cur / jp.pre;
                let seq = transform(&self.family, r, &jp.seq)?;
                let (post, _) = split_values(cur, &seq);
                out.jumps.push(PathJump { time: t, pre: cur, seq });
                out.push(t, post);
                cur = post;
            }
        }
        if reference.is_prefix() {
            return Ok(out);
        }
        let z = t + cur.powf(alpha) * self.driver.remainder();
        out.absorb(z);
        Ok(out)
    }

    /// Coupled paths from every value of an ascending grid.
    pub fn coupled(&self, x_grid: &[f64], seed: u64) -> Result<CoupledFlow> {
        if x_grid.is_empty() || x_grid.windows(2).any(|w| !(w[0] <= w[1])) || !(x_grid[0] > 0.0) {
            return Err(Error::Validation(format!("x grid must be non-empty, positive and ascending, got {x_grid:?}")));
        }
        let top_x = *x_grid.last().expect("grid is non-empty");
        let reference = self.path(top_x, seed)?;
        let paths = match self.opts.backend {
            Backend::PureJump => {
                x_grid.par_iter().map(|x| self.derive(&reference, *x)).collect::<Result<Vec<_>>>()?
            }
            Backend::Euler => {
                let noise = if self.driver.sigma > 0.0 {
                    let n = (reference.end_time() / self.opts.step).ceil() as usize + 2;
                    let mut rng = substream(seed, 2);
                    let scale = self.opts.step.sqrt();
                    let mut w = Vec::with_capacity(n);
                    w.push(0.0);
                    for _ in 1..n {
                        let z: f64 = rng.sample(StandardNormal);
                        w.push(w.last().copied().unwrap_or(0.0) + scale * z);
                    }
                    w
                } else {
                    Vec::new()
                };
                x_grid.par_iter().map(|x| self.euler(&reference, *x, &noise)).collect::<Result<Vec<_>>>()?
            }
        };
        Ok(CoupledFlow { seed, backend: self.opts.backend, x_grid: x_grid.to_vec(), paths, reference })
    }
}

fn ordered_ratio(cur: f64, pre: f64, upward: bool, t: f64) -> Result<f64> {
    let r = cur / pre;
    if upward {
        if r < 1.0 - CONSTRUCTION_SLACK {
            return Err(Error::Consistency(format!("upper path below its reference at t = {t}: ratio {r}")));
        }
        Ok(r.max(1.0))
    } else {
        if r > 1.0 + CONSTRUCTION_SLACK {
            return Err(Error::Consistency(format!("lower path above its reference at t = {t}: ratio {r}")));
        }
        Ok(r.min(1.0))
    }
}

fn check_order(cur: f64, reference: f64, upward: bool, t: f64) -> Result<()> {
    let bad = if upward {
        cur < reference * (1.0 - CONSTRUCTION_SLACK)
    } else {
        cur > reference * (1.0 + CONSTRUCTION_SLACK)
    };
    if bad {
        return Err(Error::Consistency(format!(
            "coupled paths out of order at t = {t}: {cur} vs reference {reference}"
        )));
    }
    Ok(())
}

/// `G_r(seq)`, keeping only as many offspring as the reference split carries.
fn transform(family: &GrowingFamily, r: f64, seq: &DecorationSequence) -> Result<DecorationSequence> {
    if r == 1.0 {
        return Ok(seq.clone());
    }
    let out = family.evaluate(r, seq)?;
    let n = seq.offspring().len();
    if out.offspring().len() <= n {
        return Ok(out);
    }
    DecorationSequence::new(out.followed(), out.offspring()[..n].to_vec(), 0.0, MAX_LEN)
}

/// Paths from every value of a grid, all driven by the same randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledFlow {
    pub seed: u64,
    pub backend: Backend,
    pub x_grid: Vec<f64>,
    pub paths: Vec<DecorationPath>,
    /// Lamperti path from the largest grid value supplying the atoms.
    pub reference: DecorationPath,
}

/// Runs the coupled simulation for one seed.
pub fn simulate_coupled(
    quad: &CharacteristicQuadruplet,
    family: &GrowingFamily,
    x_grid: &[f64],
    opts: &SimOptions,
    seed: u64,
) -> Result<CoupledFlow> {
    Simulator::new(quad.clone(), family.clone(), *opts)?.coupled(x_grid, seed)
}

/// Outcome of [`monotonicity_audit`].
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub pairs: usize,
    pub checks: usize,
    pub violations: usize,
    /// Largest value of `lower − upper` seen (relative to the upper start);
    /// non-positive when the flow is ordered.
    pub worst_margin: f64,
    pub first_violation: Option<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks pointwise order, ordered absorption, synchronized jumps and
/// coordinate-wise domination of atoms for every pair of grid values.
pub fn monotonicity_audit(flow: &CoupledFlow, slack: f64) -> AuditReport {
    let mut rep = AuditReport { pairs: 0, checks: 0, violations: 0, worst_margin: f64::NEG_INFINITY, first_violation: None };
    let n = flow.paths.len();
    for i in 0..n {
        for j in i + 1..n {
            audit_pair(&flow.paths[i], &flow.paths[j], slack, &mut rep);
        }
    }
    rep
}

fn audit_pair(lo: &DecorationPath, hi: &DecorationPath, slack: f64, rep: &mut AuditReport) {
    rep.pairs += 1;
    let tol = slack * hi.x0;
    let note = |rep: &mut AuditReport, margin: f64, what: String| {
        rep.checks += 1;
        rep.worst_margin = rep.worst_margin.max(margin / hi.x0);
        if margin > tol {
            rep.violations += 1;
            if rep.first_violation.is_none() {
                rep.first_violation = Some(what);
            }
        }
    };
    note(rep, lo.x0 - hi.x0, format!("start {} above {}", lo.x0, hi.x0));
    note(rep, lo.absorption - hi.absorption, format!("absorption {} after {} (x = {} vs {})", lo.absorption, hi.absorption, lo.x0, hi.x0));
    let z = lo.absorption.min(lo.end_time()).min(hi.end_time());
    for path in [lo, hi] {
        for (k, &t) in path.times.iter().enumerate() {
            if t >= z {
                break;
            }
            let (a, b) = (lo.value_at(t), hi.value_at(t));
            if let (Some(a), Some(b)) = (a, b) {
                note(rep, a - b, format!("value at t = {t}: {a} above {b} (knot {k} of x = {})", path.x0));
            }
            let (a, b) = (lo.value_before(t), hi.value_before(t));
            if let (Some(a), Some(b)) = (a, b) {
                note(rep, a - b, format!("left limit at t = {t}: {a} above {b}"));
            }
        }
    }
    let lo_times: Vec<f64> = lo.jumps.iter().map(|j| j.time).filter(|t| *t < z).collect();
    let hi_jumps: Vec<&PathJump> = hi.jumps.iter().filter(|j| j.time < z).collect();
    rep.checks += 1;
    if lo_times.len() != hi_jumps.len() || lo_times.iter().zip(&hi_jumps).any(|(a, b)| *a != b.time) {
        rep.violations += 1;
        rep.first_violation.get_or_insert_with(|| {
            format!("jump times differ before z = {z}: {} vs {} jumps (x = {} vs {})", lo_times.len(), hi_jumps.len(), lo.x0, hi.x0)
        });
        return;
    }
    for (jl, jh) in lo.jumps.iter().zip(&hi_jumps) {
        let (_, kl) = split_values(jl.pre, &jl.seq);
        let (_, kh) = split_values(jh.pre, &jh.seq);
        for (r, a) in kl.iter().enumerate() {
            let b = kh.get(r).copied().unwrap_or(0.0);
            note(rep, a - b, format!("atom rank {r} at t = {}: {a} above {b}", jl.time));
        }
    }
}

/// Two-sample KS test between absorption times from `x` and `x^exponent`
/// times absorption times from `1`.
///
/// Samples from `x` are the lower paths of flows on `{x, 1}` (seeds
/// `seed + 2i`); samples from `1` come from independent flows (seeds
/// `seed + 2i + 1`). Pass the quadruplet's `α` as `exponent` for the scaling
/// test.
pub fn ks_self_similarity(sim: &Simulator, x: f64, n_paths: usize, seed: u64, exponent: f64) -> Result<KsResult> {
    if n_paths < 100 {
        return Err(Error::Validation(format!("self-similarity test needs at least 100 paths, got {n_paths}")));
    }
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::Validation(format!("x must lie in (0, 1], got {x}")));
    }
    let pairs: Vec<(f64, f64)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(2 * i);
            let lower = if x == 1.0 {
                sim.path(1.0, s)?
            } else {
                let flow = sim.coupled(&[x, 1.0], s)?;
                flow.paths[0].clone()
            };
            let top = sim.path(1.0, seed.wrapping_add(2 * i + 1))?;
            Ok((lower.absorption, x.powf(exponent) * top.absorption))
        })
        .collect::<Result<Vec<_>>>()?;
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(ks_two_sample(&a, &b))
}

/// Largest `|X_pure(t) − X_euler(t)|` over the knots of the pure-jump paths
/// before the earlier absorption, and whether the jump times agree there.
pub fn backend_deviation(pure: &CoupledFlow, euler: &CoupledFlow) -> (bool, f64) {
    let mut same = true;
    let mut worst: f64 = 0.0;
    for (p, e) in pure.paths.iter().zip(&euler.paths) {
        let z = p.absorption.min(e.absorption);
        let tp: Vec<f64> = p.jumps.iter().map(|j| j.time).filter(|t| *t < z).collect();
        let te: Vec<f64> = e.jumps.iter().map(|j| j.time).filter(|t| *t < z).collect();
        same &= tp == te;
        for &t in p.times.iter().filter(|t| **t < z) {
            if let (Some(a), Some(b)) = (p.value_at(t), e.value_at(t)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    (same, worst)
}

/// SVG of the coupled paths against time.
pub fn coupled_svg(flow: &CoupledFlow) -> String {
    let t_max = flow.paths.iter().map(|p| p.end_time()).fold(0.0, f64::max);
    let x_max = flow.paths.iter().map(|p| p.x0).fold(0.0, f64::max);
    let mut c = Canvas::new(720.0, 420.0, (0.0, t_max), (0.0, x_max));
    c.axes("time", "decoration");
    c.title(&format!("coupled decoration paths, seed {}", flow.seed));
    for (k, p) in flow.paths.iter().enumerate() {
        let stride = (p.len() / 4000).max(1);
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(p.len() / stride + 2);
        for (i, (t, v)) in p.times.iter().zip(&p.values).enumerate() {
            let is_jump = i + 1 < p.len() && p.times[i + 1] == *t || i > 0 && p.times[i - 1] == *t;
            if i % stride == 0 || is_jump || i + 1 == p.len() {
                pts.push((*t, *v));
            }
        }
        c.polyline(&pts, color(k), 1.0);
        c.label((p.end_time().min(t_max), p.x0), &format!("x = {}", p.x0), color(k));
    }
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::catalog::quadruplet;

    fn sim(key: &str, family: &str) -> Simulator {
        let q = quadruplet(key).unwrap();
        let f = GrowingFamily::from_key(family, Some(&q.measure), Some(q.alpha)).unwrap();
        Simulator::new(q, f, SimOptions::default()).unwrap()
    }

    #[test]
    fn compensation_matches_quadrature() {
        let q = quadruplet("brownian-mass-ll").unwrap();
        let c = Cutoffs::default();
        let d = LevyDriver::new(&q, c).unwrap();
        let all = log_followed_integral(&q.measure, 0.0, 1.0).unwrap();
        assert!((d.drift - (q.drift_a - all + d.compensation)).abs() < 1e-8);
        assert!(d.compensation < 0.0);
    }

    #[test]
    fn pure_drift_trace_is_exact() {
        let q = quadruplet("brownian-height-ll").unwrap();
        let d = LevyDriver::new(&q, Cutoffs::default()).unwrap();
        let tr = simulate_levy(&d, 3.0, 1e-4, 5);
        for (t, v) in tr.times.iter().zip(&tr.values) {
            assert_eq!(*v, -t);
        }
        assert_eq!(tr.xi_at(1.5), Some(-1.5));
    }

    #[test]
    fn traces_are_deterministic_and_marks_retained() {
        let q = quadruplet("brownian-mass-ll").unwrap();
        let c = Cutoffs::default();
        let d = LevyDriver::new(&q, c).unwrap();
        let a = simulate_levy(&d, 5.0, 1e-4, 9);
        let b = simulate_levy(&d, 5.0, 1e-4, 9);
        assert_eq!(a.times, b.times);
        assert_eq!(a.values, b.values);
        assert!(!a.jumps.is_empty());
        for j in &a.jumps {
            assert!(1.0 - j.mark.followed() >= c.followed_gap() - 1e-15);
        }
    }

    #[test]
    fn extension_matches_one_shot_sampling() {
        let q = quadruplet("brownian-mass-ll").unwrap();
        let d = LevyDriver::new(&q, Cutoffs::default()).unwrap();
        let mut a = simulate_levy(&d, 2.0, 1e-4, 4);
        a.extend_to(&d, 6.0);
        let b = simulate_levy(&d, 6.0, 1e-4, 4);
        let ja: Vec<f64> = a.jumps.iter().map(|j| j.time).collect();
        let jb: Vec<f64> = b.jumps.iter().map(|j| j.time).collect();
        assert_eq!(ja, jb);
        assert!((a.xi_at(5.0).unwrap() - b.xi_at(5.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn brownian_height_spine() {
        let s = sim("brownian-height-ll", "magic-height");
        for x in [0.3, 1.0, 2.5] {
            let p = s.path(x, 11).unwrap();
            for (t, v) in p.times.iter().zip(&p.values) {
                if *t < p.absorption {
                    assert!((v - (x - t)).abs() <= 4.0 * f64::EPSILON * x, "{v} vs {}", x - t);
                }
            }
            assert!((p.absorption - x).abs() <= 1e-4);
        }
    }

    #[test]
    fn lamperti_scaling_on_a_shared_trace() {
        let s = sim("brownian-mass-ll", "brownian");
        let mut tr = s.trace(3);
        let one = lamperti(s.driver(), &mut tr, 1.0, s.options()).unwrap();
        let x: f64 = 0.37;
        let other = lamperti(s.driver(), &mut tr, x, s.options()).unwrap();
        let a = 0.5;
        let n = one.jumps.len().min(other.jumps.len());
        assert!(n > 10);
        for k in 0..n {
            let (j1, jx) = (&one.jumps[k], &other.jumps[k]);
            assert!((jx.time - x.powf(a) * j1.time).abs() <= 1e-12 * (1.0 + j1.time));
            assert!((jx.pre - x * j1.pre).abs() <= 1e-12 * x);
        }
    }

    #[test]
    fn coupled_flow_is_ordered() {
        let s = sim("brownian-mass-ll", "brownian");
        for seed in 0..20 {
            let f = s.coupled(&[0.25, 0.5, 1.0], seed).unwrap();
            assert!(f.paths[0].absorption <= f.paths[1].absorption);
            assert!(f.paths[1].absorption <= f.paths[2].absorption);
            let rep = monotonicity_audit(&f, AUDIT_SLACK);
            assert!(rep.passed(), "{rep:?}");
            assert_eq!(f.paths[2], f.reference);
        }
    }

    #[test]
    fn equal_grid_values_give_identical_paths() {
        let s = sim("brownian-mass-sb", "magic-mass");
        let f = s.coupled(&[0.6, 0.6], 8).unwrap();
        assert_eq!(f.paths[0], f.paths[1]);
    }

    #[test]
    fn audit_locates_a_corrupted_value() {
        let s = sim("brownian-mass-ll", "brownian");
        let mut f = s.coupled(&[0.5, 1.0], 2).unwrap();
        let k = f.paths[0].len() / 3;
        f.paths[0].values[k] = f.paths[1].value_at(f.paths[0].times[k]).unwrap() * 1.5;
        let rep = monotonicity_audit(&f, AUDIT_SLACK);
        assert!(rep.violations >= 1);
        assert!(rep.first_violation.is_some());
    }

    #[test]
    fn derived_drift_is_monotone_in_the_ratio() {
        let s = sim("brownian-mass-ll", "brownian");
        let mut prev = f64::NEG_INFINITY;
        for r in [1e-6, 1e-3, 0.1, 0.5, 1.0, 2.0, 10.0] {
            let b = s.derived_drift(r).unwrap();
            assert!(b >= prev);
            prev = b;
        }
        assert_eq!(s.derived_drift(1.0).unwrap(), s.driver().drift);
    }

    #[test]
    fn upward_derivation_dominates_its_reference() {
        let s = sim("brownian-mass-ll", "brownian");
        let lower = s.path(0.5, 21).unwrap();
        let upper = s.derive(&lower, 1.0).unwrap();
        assert_eq!(upper.jumps.len(), lower.jumps.len().min(upper.jumps.len()));
        for (t, v) in lower.times.iter().zip(&lower.values) {
            if let Some(u) = upper.value_at(*t) {
                if *t < lower.absorption {
                    assert!(u >= *v * (1.0 - 1e-9));
                }
            }
        }
    }

    #[test]
    fn euler_agrees_with_pure_jump() {
        let q = quadruplet("brownian-mass-ll").unwrap();
        let f = GrowingFamily::BrownianClosedForm;
        let pj = Simulator::new(q.clone(), f.clone(), SimOptions::default()).unwrap();
        let eu = Simulator::new(q, f, SimOptions { backend: Backend::Euler, ..SimOptions::default() }).unwrap();
        for seed in 0..5 {
            let a = pj.coupled(&[0.25, 0.5, 1.0], seed).unwrap();
            let b = eu.coupled(&[0.25, 0.5, 1.0], seed).unwrap();
            let (same, dev) = backend_deviation(&a, &b);
            assert!(same);
            assert!(dev < 1e-2, "{dev}");
        }
    }

    #[test]
    fn conservative_splits_are_exact() {
        let s = sim("brownian-mass-ll", "brownian");
        let p = s.path(1.0, 6).unwrap();
        for j in &p.jumps {
            let (post, kids) = split_values(j.pre, &j.seq);
            if let [c] = kids.as_slice() {
                assert_eq!(post + c, j.pre);
            }
        }
    }

    #[test]
    fn svg_lists_every_path() {
        let s = sim("brownian-mass-ll", "brownian");
        let f = s.coupled(&[0.5, 1.0], 1).unwrap();
        let svg = coupled_svg(&f);
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
