//! Generators of growing families, the monotonicity predicate, the weak-form
//! divergence residual and the critical self-similarity exponent.
//!
//! Stored generators use the convention in which the followed coordinate
//! decreases: `V(y) = -∂_x G_x(y)` at `x = 1`. The scalar `v_γ` is the
//! symmetrized, non-negative view on `(0, 1/2]`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::growing::checks::sample_support_point;
use crate::growing::GrowingFamily;
use crate::measures::{BifurcatorWeights, BinaryDensity, BinaryMeasure, MeasureKind, SplittingMeasure};
use crate::numerics::quad::{integrate, integrate_unit, QuadOptions};
use crate::numerics::rng::{stream, Stream};
use crate::numerics::roots::scan_max;
use crate::sequence::DecorationSequence;

/// Vector field on coordinate vectors `[y₀, y₁, …]`.
pub type Field = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Domain predicate on coordinate vectors.
pub type DomainPredicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Sign convention carried by a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignConvention {
    /// `V = -∂_x G_x` at `x = 1`: the followed coordinate decreases.
    FollowedDecreases,
}

/// A vector field `V` on decoration sequences with a declared domain.
#[derive(Clone)]
pub struct Generator {
    name: String,
    field: Field,
    domain: DomainPredicate,
    convention: SignConvention,
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generator").field("name", &self.name).field("convention", &self.convention).finish()
    }
}

fn nonneg_domain(y: &[f64]) -> bool {
    !y.is_empty() && y[0] > 0.0 && y.iter().all(|v| v.is_finite() && *v >= 0.0)
}

impl Generator {
    pub fn new(name: impl Into<String>, field: Field, domain: DomainPredicate) -> Self {
        Generator { name: name.into(), field, domain, convention: SignConvention::FollowedDecreases }
    }

    /// `Vᵢ(y) = -yᵢ (yᵢ - Σⱼ yⱼ²)`, the locally-largest stable field.
    pub fn stable_ll() -> Self {
        Self::new(
            "stable-ll",
            Arc::new(|y: &[f64], out: &mut [f64]| {
                let q: f64 = y.iter().map(|v| v * v).sum();
                for (o, v) in out.iter_mut().zip(y) {
                    *o = -v * (v - q);
                }
            }),
            Arc::new(nonneg_domain),
        )
    }

    /// `V^M(y) = (-y₀(1 - y₀), y₀ y₁, y₀ y₂, …)`, the generator of [`GrowingFamily::MagicMass`].
    pub fn magic_mass() -> Self {
        Self::new(
            "magic-mass",
            Arc::new(|y: &[f64], out: &mut [f64]| {
                let y0 = y[0];
                out[0] = -y0 * (1.0 - y0);
                for (o, v) in out.iter_mut().zip(y).skip(1) {
                    *o = y0 * v;
                }
            }),
            Arc::new(|y: &[f64]| nonneg_domain(y) && y[0] <= 1.0),
        )
    }

    /// Generator of [`GrowingFamily::MagicHeight`]:
    /// `(0, y₁(1 - y₁), (1 - y₁) y₂, …)`.
    pub fn magic_height() -> Self {
        Self::new(
            "magic-height",
            Arc::new(|y: &[f64], out: &mut [f64]| {
                out[0] = 0.0;
                if y.len() > 1 {
                    let y1 = y[1];
                    out[1] = y1 * (1.0 - y1);
                    for (o, v) in out.iter_mut().zip(y).skip(2) {
                        *o = (1.0 - y1) * v;
                    }
                }
            }),
            Arc::new(|y: &[f64]| nonneg_domain(y) && y[0] == 1.0),
        )
    }

    /// Binary field `α · (v(s), -v(s))` with `v = -I/λ` from a scalar generator.
    pub fn from_scalar(scalar: ScalarGenerator, alpha: f64) -> Self {
        let lo = scalar.measure.lo;
        let sc = scalar.clone();
        Self::new(
            format!("scalar(alpha={alpha})"),
            Arc::new(move |y: &[f64], out: &mut [f64]| {
                let s = y[0];
                let u = y.get(1).copied().unwrap_or(1.0 - s);
                let v = alpha * sc.followed(s, u).unwrap_or(f64::NAN);
                out[0] = v;
                if out.len() > 1 {
                    out[1] = -v;
                }
                for o in out.iter_mut().skip(2) {
                    *o = 0.0;
                }
            }),
            Arc::new(move |y: &[f64]| y.len() <= 2 && nonneg_domain(y) && y[0] >= lo && y[0] < 1.0),
        )
    }

    /// Generator obtained by differentiating a family at `x = 1`.
    pub fn from_family(family: GrowingFamily) -> Self {
        let fam = family.clone();
        Self::new(
            format!("d/dx {}", family.kind()),
            Arc::new(move |y: &[f64], out: &mut [f64]| {
                let v = DecorationSequence::exact(y[0], y[1..].to_vec())
                    .and_then(|s| generator_from_family(&fam, &s));
                match v {
                    Ok(v) => {
                        for (i, o) in out.iter_mut().enumerate() {
                            *o = v.get(i).copied().unwrap_or(0.0);
                        }
                    }
                    Err(_) => out.iter_mut().for_each(|o| *o = f64::NAN),
                }
            }),
            Arc::new(move |y: &[f64]| {
                DecorationSequence::exact(y[0], y[1..].to_vec()).is_ok_and(|s| family.contains(&s))
            }),
        )
    }

    /// The field multiplied by a constant.
    pub fn scaled(&self, c: f64) -> Self {
        let f = self.field.clone();
        Self::new(
            format!("{c}·{}", self.name),
            Arc::new(move |y: &[f64], out: &mut [f64]| {
                f(y, out);
                out.iter_mut().for_each(|o| *o *= c);
            }),
            self.domain.clone(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn convention(&self) -> SignConvention {
        self.convention
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        (self.domain)(y)
    }

    /// Evaluates the field into `out` (same length as `y`) without domain checks.
    pub fn eval_into(&self, y: &[f64], out: &mut [f64]) {
        (self.field)(y, out)
    }

    /// Evaluates the field at a point of its domain.
    pub fn eval(&self, y: &[f64]) -> Result<Vec<f64>> {
        if !self.contains(y) {
            return Err(Error::Domain(format!("{y:?} is outside the domain of generator {}", self.name)));
        }
        let mut out = vec![0.0; y.len()];
        self.eval_into(y, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("generator {} is not finite at {y:?}", self.name)));
        }
        Ok(out)
    }

    /// Largest finite-difference slope `|V(a) - V(b)| / |a - b|` (sup norms)
    /// over consecutive pairs of points, a crude Lipschitz estimate.
    pub fn lipschitz_estimate(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut best: f64 = 0.0;
        for w in points.windows(2) {
            let n = w[0].len().max(w[1].len());
            let pad = |v: &Vec<f64>| {
                let mut p = v.clone();
                p.resize(n, 0.0);
                p
            };
            let (a, b) = (pad(&w[0]), pad(&w[1]));
            let (va, vb) = (self.eval(&a)?, self.eval(&b)?);
            let dx = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            let dv = va.iter().zip(&vb).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            if dx > 0.0 {
                best = best.max(dv / dx);
            }
        }
        Ok(best)
    }
}

/// `V(y) = -∂_x G_x(y)` at `x = 1` by central differences with steps `10⁻⁵`
/// and `10⁻⁶`, combined by Richardson extrapolation.
pub fn generator_from_family(family: &GrowingFamily, seq: &DecorationSequence) -> Result<Vec<f64>> {
    let (h1, h2) = (1e-5, 1e-6);
    let n = seq.offspring().len() + 1;
    let diff = |h: f64| -> Result<Vec<f64>> {
        let mut a = family.evaluate(1.0 + h, seq)?.to_vec();
        let mut b = family.evaluate(1.0 - h, seq)?.to_vec();
        let m = n.max(a.len()).max(b.len());
        a.resize(m, 0.0);
        b.resize(m, 0.0);
        Ok(a.iter().zip(&b).map(|(p, q)| (p - q) / (2.0 * h)).collect())
    };
    let (d1, d2) = (diff(h1)?, diff(h2)?);
    let ratio = (h1 / h2) * (h1 / h2);
    let mut out = Vec::with_capacity(d1.len());
    for (a, b) in d1.iter().zip(&d2) {
        if (a - b).abs() > 1e-3 * (1.0 + b.abs()) {
            return Err(Error::Numerical(format!("finite differences do not agree ({a} vs {b})")));
        }
        out.push(-(b + (b - a) / (ratio - 1.0)));
    }
    Ok(out)
}

/// `V^{ll}(y) = Σᵢ pᵢ(y) σᵢ⁻¹ V(σᵢ y)`, where `σᵢ` moves coordinate `i` to the
/// followed position and keeps the others in order.
pub fn symmetrize_ll(generator: &Generator, weights: &BifurcatorWeights) -> Generator {
    let g = generator.clone();
    let w = weights.clone();
    Generator::new(
        format!("ll({}, {weights:?})", generator.name()),
        Arc::new(move |y: &[f64], out: &mut [f64]| {
            out.iter_mut().for_each(|o| *o = 0.0);
            let p = match w.weights(y) {
                Ok(p) => p,
                Err(_) => {
                    out.iter_mut().for_each(|o| *o = f64::NAN);
                    return;
                }
            };
            let n = y.len();
            let mut perm = vec![0.0; n];
            let mut val = vec![0.0; n];
            for (i, &pi) in p.iter().enumerate() {
                if pi == 0.0 {
                    continue;
                }
                perm[0] = y[i];
                let mut k = 1;
                for (j, &v) in y.iter().enumerate() {
                    if j != i {
                        perm[k] = v;
                        k += 1;
                    }
                }
                g.eval_into(&perm, &mut val);
                out[i] += pi * val[0];
                let mut k = 1;
                for (j, o) in out.iter_mut().enumerate().take(n) {
                    if j != i {
                        *o += pi * val[k];
                        k += 1;
                    }
                }
            }
        }),
        Arc::new(nonneg_domain),
    )
}

fn quad_opts() -> QuadOptions {
    QuadOptions { abs_tol: 0.0, rel_tol: 1e-13, max_panels: 2000 }
}

/// Half-integer exponents with a closed-form `v_γ`.
const CLOSED_FORMS: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 2.5];

fn closed_form(gamma: f64, s: f64) -> Option<f64> {
    let u = 1.0 - s;
    let su = s * u;
    let v = match gamma {
        0.5 => su.sqrt() * (std::f64::consts::PI - 4.0 * s.sqrt().asin()) / 2.0,
        1.0 => su * (u / s).ln(),
        1.5 => su * 2.0 * (u - s),
        2.0 => su * ((u - s) + 4.0 * su * (u - s).atanh()),
        2.5 => su * (2.0 / 3.0) * (1.0 + 2.0 * s * (3.0 + 4.0 * s * (2.0 * s - 3.0))),
        _ => return None,
    };
    Some(v)
}

/// `v_γ(s) = (s(1 - s))^γ ∫_s^{1/2} (t(1 - t))^{-γ} dt`, non-negative on
/// `(0, 1/2]` and odd about `1/2`. Closed forms are used for
/// `γ ∈ {1/2, 1, 3/2, 2, 5/2}`, quadrature otherwise.
pub fn v_gamma(gamma: f64, s: f64) -> f64 {
    if let Some(v) = closed_form(gamma, s) {
        return v;
    }
    v_gamma_quadrature(gamma, s)
}

/// [`v_gamma`] by quadrature only.
pub fn v_gamma_quadrature(gamma: f64, s: f64) -> f64 {
    if s == 0.5 {
        return 0.0;
    }
    if s > 0.5 {
        return -v_gamma_quadrature(gamma, 1.0 - s);
    }
    let u = 1.0 - s;
    // ∫_s^{1/2} (t(1-t))^{-γ} (s(1-s))^γ dt in t = e^w, scaled for accuracy.
    let f = |w: f64| {
        let t = w.exp();
        ((s * u) / (t * (1.0 - t))).powf(gamma) * t
    };
    integrate(f, s.ln(), 0.5f64.ln(), quad_opts()).unwrap_or(f64::NAN)
}

/// Scalar generator of a binary conservative measure, `v(s) = -I(s)/λ(s)`
/// with `I(s) = ∫_{lo}^s λ`, without the factor `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGenerator {
    measure: BinaryMeasure,
    /// `γ` when the measure is the locally-largest `(s(1-s))^{-γ}` family.
    power: Option<f64>,
}

impl ScalarGenerator {
    pub fn from_measure(measure: &SplittingMeasure) -> Result<Self> {
        match &measure.kind {
            MeasureKind::Binary(b) => {
                let power = match (&b.density, &b.weight) {
                    (BinaryDensity::Power { gamma }, None) if b.lo == 0.5 => Some(*gamma),
                    _ => None,
                };
                Ok(ScalarGenerator { measure: b.clone(), power })
            }
            _ => Err(Error::Validation(format!(
                "{} is not binary conservative; no scalar generator is available",
                measure.id
            ))),
        }
    }

    /// Closed-form tag: `γ` of a half-integer locally-largest power family.
    pub fn closed_form(&self) -> Option<f64> {
        self.power.filter(|g| CLOSED_FORMS.contains(g))
    }

    pub fn measure(&self) -> &BinaryMeasure {
        &self.measure
    }

    /// `I(s) = ∫_{lo}^s λ` with `u = 1 - s`.
    pub fn primitive(&self, s: f64, u: f64) -> Result<f64> {
        let m = &self.measure;
        if s <= 0.5 {
            return integrate_unit(|a, b| m.lambda(a, b), m.lo, s, quad_opts());
        }
        let head = if m.lo < 0.5 { integrate_unit(|a, b| m.lambda(a, b), m.lo, 0.5, quad_opts())? } else { 0.0 };
        let tail = integrate(
            |w| {
                let v = w.exp();
                m.lambda(1.0 - v, v) * v
            },
            u.ln(),
            0.5f64.ln(),
            quad_opts(),
        )?;
        Ok(head + tail)
    }

    /// `-I(s)/λ(s)`, the followed component at unit `α`.
    pub fn followed(&self, s: f64, u: f64) -> Result<f64> {
        if self.measure.lo == 0.5 && s >= 0.5 {
            return Ok(-self.symmetric(u));
        }
        Ok(-self.primitive(s, u)? / self.measure.lambda(s, u))
    }

    /// The symmetrized non-negative view `v(t)`, `t ∈ (0, 1/2]`, of a
    /// locally-largest measure: `v(t) = I(1 - t)/λ(1 - t)`.
    pub fn symmetric(&self, t: f64) -> f64 {
        if let Some(g) = self.closed_form() {
            return v_gamma(g, t);
        }
        if let Some(g) = self.power {
            return v_gamma_quadrature(g, t);
        }
        let m = &self.measure;
        let s = 1.0 - t;
        self.primitive(s, t).map_or(f64::NAN, |i| i / m.lambda(s, t))
    }
}

/// Result of [`alpha_critical`].
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaCritical {
    pub alpha_c: f64,
    /// `sup_{t ∈ (0, 1/2]} v(t)/t`.
    pub sup_ratio: f64,
    /// Location of the supremum in the symmetrized coordinate (`0` when it
    /// is the limit at the boundary).
    pub argmax: f64,
    /// Whether the supremum is the boundary limit `t → 0`.
    pub boundary: bool,
    pub diagnostic: Option<String>,
}

/// Lower end of the interior scan, in the symmetrized coordinate.
const SCAN_FLOOR: f64 = 1e-12;

/// `α_c = 1 / sup_{t ∈ (0, 1/2]} v(t)/t` for a locally-largest binary
/// conservative measure.
pub fn alpha_critical(measure: &SplittingMeasure) -> Result<AlphaCritical> {
    let sg = ScalarGenerator::from_measure(measure)?;
    if !measure.locally_largest() {
        return Err(Error::Validation(format!("{} is not in locally-largest form", measure.id)));
    }
    let p = sg.measure.exponent_at_one();
    Ok(critical_from(|t| sg.symmetric(t), p))
}

/// [`alpha_critical`] for the family `(s(1-s))^{-γ}` on `[1/2, 1)`.
pub fn alpha_critical_gamma(gamma: f64) -> AlphaCritical {
    critical_from(|t| v_gamma(gamma, t), -gamma)
}

/// `(γ, α_c, argmax)` over a grid of exponents, evaluated in parallel.
pub fn alpha_curve(gammas: &[f64]) -> Vec<(f64, AlphaCritical)> {
    gammas.par_iter().map(|&g| (g, alpha_critical_gamma(g))).collect()
}

fn critical_from<V: Fn(f64) -> f64>(v: V, exponent_at_one: f64) -> AlphaCritical {
    // λ ~ t^p at the divergent end gives v(t)/t → 1/(-1-p).
    let q = -1.0 - exponent_at_one;
    if !(q > 0.0) {
        return AlphaCritical {
            alpha_c: 0.0,
            sup_ratio: f64::INFINITY,
            argmax: 0.0,
            boundary: true,
            diagnostic: Some(format!("v(t)/t is unbounded near 0 (density exponent {exponent_at_one})")),
        };
    }
    let limit = 1.0 / q;
    let ratio = |w: f64| {
        let t = w.exp();
        v(t) / t
    };
    let (w, r) = scan_max(ratio, SCAN_FLOOR.ln(), 0.5f64.ln(), 400, 1e-12);
    if !r.is_finite() {
        return AlphaCritical {
            alpha_c: 0.0,
            sup_ratio: f64::INFINITY,
            argmax: w.exp(),
            boundary: false,
            diagnostic: Some("v(t)/t is not finite on the scan".into()),
        };
    }
    if r > limit {
        AlphaCritical { alpha_c: 1.0 / r, sup_ratio: r, argmax: w.exp(), boundary: false, diagnostic: None }
    } else {
        AlphaCritical { alpha_c: 1.0 / limit, sup_ratio: limit, argmax: 0.0, boundary: true, diagnostic: None }
    }
}

/// Result of [`monotone_predicate`].
#[derive(Debug, Clone, PartialEq)]
pub struct PredicateReport {
    pub samples: usize,
    /// `min (yᵢ - α Vᵢ(y))` over samples and coordinates.
    pub worst_margin: f64,
    pub worst_point: Option<Vec<f64>>,
    pub pass: bool,
}

/// Checks `α · V(y) ≤ y` coordinate-wise on sampled support points.
pub fn monotone_predicate(
    generator: &Generator,
    measure: &SplittingMeasure,
    alpha: f64,
    sample_count: usize,
    rng: &mut Stream,
) -> Result<PredicateReport> {
    let mut worst = f64::INFINITY;
    let mut worst_point = None;
    for _ in 0..sample_count {
        let y = sample_support_point(measure, rng)?.to_vec();
        let v = generator.eval(&y)?;
        for (yi, vi) in y.iter().zip(&v) {
            let m = yi - alpha * vi;
            if m < worst {
                worst = m;
                worst_point = Some(y.clone());
            }
        }
    }
    Ok(PredicateReport { samples: sample_count, worst_margin: worst, worst_point, pass: worst >= -1e-12 })
}

/// Real-valued function of a sequence.
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Smooth cylindrical test function `F` with its gradient.
#[derive(Clone)]
pub enum TestFunction {
    /// `F(y) = Σ_{i≥1} yᵢ^p`.
    OffspringPower(f64),
    /// `F(y) = Σ_{i≥0} yᵢ^p - 1`, symmetric in all coordinates.
    PowerSum(f64),
    /// User-supplied function and gradient.
    Custom { name: String, f: ScalarField, grad: Field },
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::OffspringPower(p) => write!(f, "OffspringPower({p})"),
            TestFunction::PowerSum(p) => write!(f, "PowerSum({p})"),
            TestFunction::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl TestFunction {
    pub fn value(&self, y: &[f64]) -> f64 {
        match self {
            TestFunction::OffspringPower(p) => y.iter().skip(1).map(|v| v.powf(*p)).sum(),
            TestFunction::PowerSum(p) => {
                // Σ yᵢ^p - 1 = (y₀^p - 1) + Σ_{i≥1} yᵢ^p, with the first term
                // written through ln(y₀) to avoid cancellation near y₀ = 1.
                let head = (p * y[0].ln()).exp_m1();
                head + y.iter().skip(1).map(|v| v.powf(*p)).sum::<f64>()
            }
            TestFunction::Custom { f, .. } => f(y),
        }
    }

    pub fn gradient(&self, y: &[f64], out: &mut [f64]) {
        match self {
            TestFunction::OffspringPower(p) => {
                out[0] = 0.0;
                for (o, v) in out.iter_mut().zip(y).skip(1) {
                    *o = p * v.powf(p - 1.0);
                }
            }
            TestFunction::PowerSum(p) => {
                for (o, v) in out.iter_mut().zip(y) {
                    *o = p * v.powf(p - 1.0);
                }
            }
            TestFunction::Custom { grad, .. } => grad(y, out),
        }
    }
}

/// Options of [`divergence_residual`].
#[derive(Debug, Clone, Copy)]
pub struct DivergenceOptions {
    /// Shape draws averaged for mass- and height-form measures.
    pub panel: usize,
    pub seed: u64,
}

impl Default for DivergenceOptions {
    fn default() -> Self {
        DivergenceOptions { panel: 2048, seed: 0x0d1f_f00d }
    }
}

/// One test function of a divergence check.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceRow {
    pub test: String,
    /// `∫ ⟨V, ∇F⟩ dΞ`.
    pub lhs: f64,
    /// `α ∫ F dΞ`.
    pub rhs: f64,
    pub rel_residual: f64,
    /// Standard error of `lhs - rhs` relative to `|rhs|` from the shape
    /// panel (`0` for binary measures).
    pub std_error: f64,
}

/// Result of [`divergence_residual`].
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub rows: Vec<DivergenceRow>,
    pub max_residual: f64,
}

/// Weak form of `div(V Ξ) = -α Ξ`: compares `∫ ⟨V, ∇F⟩ dΞ` with
/// `α ∫ F dΞ` for each test function and reports the largest relative
/// residual. Binary measures are integrated by quadrature; mass- and
/// height-form measures by quadrature in the first coordinate and an average
/// over a panel of shape draws.
pub fn divergence_residual(
    generator: &Generator,
    measure: &SplittingMeasure,
    alpha: f64,
    tests: &[TestFunction],
    opts: DivergenceOptions,
) -> Result<DivergenceReport> {
    let qo = QuadOptions { abs_tol: 0.0, rel_tol: 1e-11, max_panels: 4000 };
    let integrand = |test: &TestFunction, y: &[f64]| -> (f64, f64) {
        let mut v = vec![0.0; y.len()];
        let mut g = vec![0.0; y.len()];
        generator.eval_into(y, &mut v);
        test.gradient(y, &mut g);
        let lhs: f64 = v.iter().zip(&g).map(|(a, b)| a * b).sum();
        (lhs, alpha * test.value(y))
    };
    let mut rows = Vec::with_capacity(tests.len());
    for test in tests {
        let (lhs, rhs, se) = match &measure.kind {
            MeasureKind::Binary(b) => {
                let l = integrate_unit(|s, u| b.lambda(s, u) * integrand(test, &[s, u]).0, b.lo, 1.0, qo)?;
                let r = integrate_unit(|s, u| b.lambda(s, u) * integrand(test, &[s, u]).1, b.lo, 1.0, qo)?;
                (l, r, 0.0)
            }
            MeasureKind::Mass(m) => {
                let mut rng = stream(opts.seed);
                let shapes: Vec<Vec<f64>> = (0..opts.panel).map(|_| m.theta.sample(&mut rng, 1e-12)).collect();
                let per: Vec<(f64, f64)> = shapes
                    .par_iter()
                    .map(|theta| -> Result<(f64, f64)> {
                        let point = |y: f64, u: f64| -> Vec<f64> {
                            let mut z: Vec<f64> = Vec::with_capacity(theta.len() + 1);
                            z.push(y);
                            z.extend(theta.iter().map(|t| u * t));
                            if m.ordered && z.len() > 1 && z[1] > z[0] {
                                let y0 = z.remove(0);
                                let pos = z.iter().position(|v| *v < y0).unwrap_or(z.len());
                                z.insert(pos, y0);
                            }
                            z
                        };
                        // The ordering switches at y = θ₁/(1 + θ₁).
                        let cut = theta.first().map_or(0.5, |t| t / (1.0 + t));
                        let part = |k: usize, lo: f64, hi: f64| {
                            integrate_unit(
                                |y, u| {
                                    let z = point(y, u);
                                    let (a, b) = integrand(test, &z);
                                    m.lambda(y, u) * if k == 0 { a } else { b }
                                },
                                lo,
                                hi,
                                qo,
                            )
                        };
                        let l = part(0, 0.0, cut)? + part(0, cut, 1.0)?;
                        let r = part(1, 0.0, cut)? + part(1, cut, 1.0)?;
                        Ok((l, r))
                    })
                    .collect::<Result<_>>()?;
                mean_and_se(&per)
            }
            MeasureKind::Height(h) => {
                let mut rng = stream(opts.seed);
                let n = if h.shape.is_some() { opts.panel } else { 1 };
                let shapes: Vec<Vec<f64>> = (0..n)
                    .map(|_| h.shape.as_ref().map_or_else(Vec::new, |s| s.sample(&mut rng, 1e-12)))
                    .collect();
                let per: Vec<(f64, f64)> = shapes
                    .par_iter()
                    .map(|shape| -> Result<(f64, f64)> {
                        let point = |v: f64| -> Vec<f64> {
                            let mut z = vec![1.0, v];
                            z.extend(shape.iter().map(|s| v * s));
                            z
                        };
                        let l = integrate_unit(|v, _| h.lambda(v) * integrand(test, &point(v)).0, 0.0, 1.0, qo)?;
                        let r = integrate_unit(|v, _| h.lambda(v) * integrand(test, &point(v)).1, 0.0, 1.0, qo)?;
                        Ok((l, r))
                    })
                    .collect::<Result<_>>()?;
                mean_and_se(&per)
            }
        };
        let scale = rhs.abs().max(1e-300);
        rows.push(DivergenceRow { test: format!("{test:?}"), lhs, rhs, rel_residual: (lhs - rhs).abs() / scale, std_error: se / scale });
    }
    let max_residual = rows.iter().map(|r| r.rel_residual).fold(0.0, f64::max);
    Ok(DivergenceReport { rows, max_residual })
}

fn mean_and_se(per: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = per.len() as f64;
    let l = per.iter().map(|p| p.0).sum::<f64>() / n;
    let r = per.iter().map(|p| p.1).sum::<f64>() / n;
    let d_mean = l - r;
    let var = if per.len() > 1 {
        per.iter().map(|p| (p.0 - p.1 - d_mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (l, r, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growing::f_brownian_pair;
    use crate::measures::catalog::measure;

    #[test]
    fn closed_forms_match_quadrature() {
        for &g in &CLOSED_FORMS {
            for i in 1..50 {
                let s = i as f64 / 100.0;
                let a = closed_form(g, s).unwrap();
                let b = v_gamma_quadrature(g, s);
                assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "γ={g} s={s}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn v_gamma_examples() {
        assert!((v_gamma(1.5, 0.25) - 0.1875).abs() < 1e-15);
        assert!((v_gamma_quadrature(1.5, 0.25) - 0.1875).abs() < 1e-10);
        assert_eq!(v_gamma(1.5, 0.5), 0.0);
        let s = 1e-7;
        assert!((v_gamma(2.5, s) / s - 2.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn alpha_c_boundary_regime() {
        for &g in &[1.1, 1.25, 1.5] {
            let a = alpha_critical_gamma(g);
            assert!((a.alpha_c - (g - 1.0)).abs() < 1e-9, "{g}: {a:?}");
            assert!(a.boundary);
        }
    }

    #[test]
    fn alpha_c_interior_regime() {
        let a = alpha_critical_gamma(2.5);
        let r = 256.0 - 162.0 * a.alpha_c - 42.0 * a.alpha_c.powi(2) + a.alpha_c.powi(3);
        assert!(r.abs() < 1e-6, "{a:?} residual {r}");
        assert!(!a.boundary);
        let b = alpha_critical(&measure("aidekon-minus").unwrap()).unwrap();
        let x = b.alpha_c;
        let t = (x - 3.0) * ((x - 3.0) * (9.0 + x) / (16.0 * x)).tanh() - (x + 1.0);
        assert!(t.abs() < 1e-6, "{b:?} residual {t}");
    }

    #[test]
    fn tangency_at_alpha_c() {
        for &g in &[1.3, 1.8, 2.2, 2.5] {
            let a = alpha_critical_gamma(g);
            let m = (1..=4000)
                .map(|i| {
                    let t = 0.5 * i as f64 / 4000.0;
                    t - a.alpha_c * v_gamma(g, t)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(m > -1e-8, "γ={g}: {m}");
        }
    }

    #[test]
    fn magic_mass_generator_from_family() {
        let seq = DecorationSequence::binary(0.3, 0.7).unwrap();
        let v = generator_from_family(&GrowingFamily::MagicMass, &seq).unwrap();
        assert!((v[0] + 0.3 * 0.7).abs() < 1e-9);
        assert!((v[1] - 0.3 * 0.7).abs() < 1e-9);
    }

    #[test]
    fn brownian_generator_matches_scalar() {
        let s: f64 = 0.75;
        let v = generator_from_family(&GrowingFamily::BrownianClosedForm, &DecorationSequence::binary(s, 1.0 - s).unwrap()).unwrap();
        // α = 1/2: followed component -(1/2) v_{3/2}(1 - s).
        assert!((v[0] + 0.5 * v_gamma(1.5, 1.0 - s)).abs() < 1e-9, "{v:?}");
        let _ = f_brownian_pair(0.5, s, 1.0 - s);
    }

    #[test]
    fn symmetrized_magic_is_stable_ll_on_pairs() {
        let sym = symmetrize_ll(&Generator::magic_mass(), &BifurcatorWeights::SizeBiased);
        let st = Generator::stable_ll();
        for &y0 in &[0.5, 0.6, 0.9, 0.999] {
            let y = [y0, 1.0 - y0];
            let a = sym.eval(&y).unwrap();
            let b = st.eval(&y).unwrap();
            let q = y0 * y0 + (1.0 - y0) * (1.0 - y0);
            assert!((a[0] + y0 * (y0 - q)).abs() < 1e-15);
            assert!((a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15);
        }
        let same = symmetrize_ll(&Generator::magic_mass(), &BifurcatorWeights::LocallyLargest);
        assert_eq!(same.eval(&[0.7, 0.2, 0.1]).unwrap(), Generator::magic_mass().eval(&[0.7, 0.2, 0.1]).unwrap());
    }

    #[test]
    fn monotone_predicate_examples() {
        let m = measure("gamma-binary:1.5").unwrap();
        let g = Generator::from_scalar(ScalarGenerator::from_measure(&m).unwrap(), 1.0);
        assert!(monotone_predicate(&g, &m, 0.5, 500, &mut stream(1)).unwrap().pass);
        let m = measure("gamma-binary:2.5").unwrap();
        let g = Generator::from_scalar(ScalarGenerator::from_measure(&m).unwrap(), 1.0);
        assert!(!monotone_predicate(&g, &m, 1.5, 500, &mut stream(2)).unwrap().pass);
        assert!(monotone_predicate(&g, &m, 0.5, 500, &mut stream(3)).unwrap().pass);
    }

    #[test]
    fn scalar_divergence_identity() {
        let m = measure("brownian-mass-ll").unwrap();
        let g = Generator::from_scalar(ScalarGenerator::from_measure(&m).unwrap(), 0.5);
        let tests = [TestFunction::OffspringPower(1.0), TestFunction::OffspringPower(2.0), TestFunction::PowerSum(2.0)];
        let r = divergence_residual(&g, &m, 0.5, &tests, DivergenceOptions::default()).unwrap();
        assert!(r.max_residual < 1e-6, "{r:?}");
        let r = divergence_residual(&g.scaled(1.1), &m, 0.5, &tests, DivergenceOptions::default()).unwrap();
        assert!((r.max_residual - 0.1).abs() < 1e-3, "{r:?}");
    }

    #[test]
    fn symmetrized_field_passes_against_ll_measure() {
        let sb = measure("brownian-mass-sb").unwrap();
        let ll = measure("brownian-mass-ll").unwrap();
        let tests = [TestFunction::OffspringPower(1.0), TestFunction::PowerSum(3.0)];
        let base = divergence_residual(&Generator::magic_mass(), &sb, 0.5, &tests, DivergenceOptions::default()).unwrap();
        assert!(base.max_residual < 1e-6, "{base:?}");
        let sym = symmetrize_ll(&Generator::magic_mass(), &BifurcatorWeights::SizeBiased);
        let r = divergence_residual(&sym, &ll, 0.5, &tests, DivergenceOptions::default()).unwrap();
        assert!(r.max_residual < 1e-6, "{r:?}");
    }
}
