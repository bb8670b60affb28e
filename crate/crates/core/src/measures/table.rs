//! Exact samplers for one-dimensional densities with power-law endpoint
//! behaviour.
//!
//! The range is cut into log-spaced segments. On each segment the density is
//! dominated by a scaled power law, sampled by inversion, and the draw is
//! accepted with probability `g / envelope`, so the output law is exactly the
//! normalized density.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::rng::Stream;

#[derive(Debug, Clone)]
struct Segment {
    v0: f64,
    v1: f64,
    /// Envelope value at `v1` (already multiplied by the safety bound).
    g1: f64,
    p: f64,
}

impl Segment {
    fn envelope(&self, v: f64) -> f64 {
        self.g1 * (v / self.v1).powf(self.p)
    }

    fn mass(&self) -> f64 {
        let q = self.p + 1.0;
        if q.abs() < 1e-9 {
            self.g1 * self.v1 * (self.v1 / self.v0).ln()
        } else {
            let r0 = if self.v0 == 0.0 { 0.0 } else { (self.v0 / self.v1).powf(q) };
            self.g1 * self.v1 / q * (1.0 - r0)
        }
    }

    fn sample(&self, rng: &mut Stream) -> f64 {
        let w: f64 = rng.random();
        let q = self.p + 1.0;
        let v = if q.abs() < 1e-9 {
            self.v0 * (self.v1 / self.v0).powf(w)
        } else {
            let r0 = if self.v0 == 0.0 { 0.0 } else { (self.v0 / self.v1).powf(q) };
            self.v1 * (r0 + w * (1.0 - r0)).powf(1.0 / q)
        };
        v.clamp(self.v0, self.v1)
    }
}

/// Rejection sampler for a positive density `g` on `[v_lo, v_hi]`,
/// `v_lo ≥ 0`. When `v_lo = 0` the density must be integrable there with
/// power-law behaviour.
#[derive(Debug, Clone)]
pub struct PowerLawTable {
    segs: Vec<Segment>,
    cum: Vec<f64>,
}

impl PowerLawTable {
    pub fn new<G: Fn(f64) -> f64>(g: G, v_lo: f64, v_hi: f64) -> Result<Self> {
        if !(v_hi > v_lo) || v_lo < 0.0 {
            return Err(Error::Validation(format!("sampler range [{v_lo}, {v_hi}] is empty")));
        }
        let ratio: f64 = 1.1;
        let start = if v_lo > 0.0 { v_lo } else { (v_hi * 1e-12).max(1e-300) };
        let n = (((v_hi / start).ln() / ratio.ln()).ceil() as usize).max(8);
        let mut nodes: Vec<f64> = (0..=n).map(|i| start * (v_hi / start).powf(i as f64 / n as f64)).collect();
        nodes[0] = start;
        nodes[n] = v_hi;
        if v_lo == 0.0 {
            nodes.insert(0, 0.0);
        }
        let mut segs = Vec::with_capacity(nodes.len());
        for w in nodes.windows(2) {
            let (v0, v1) = (w[0], w[1]);
            let g1 = g(v1);
            let probe = if v0 > 0.0 { v0 } else { v1 * 1e-3 };
            let gp = g(probe);
            if !(g1 > 0.0 && gp > 0.0 && g1.is_finite() && gp.is_finite()) {
                return Err(Error::Numerical(format!("density not positive and finite near [{v0}, {v1}]")));
            }
            let p = (gp / g1).ln() / (probe / v1).ln();
            if v0 == 0.0 && p <= -1.0 {
                return Err(Error::Config(format!("density not integrable at 0 (local exponent {p:.3})")));
            }
            let mut seg = Segment { v0, v1, g1, p };
            let lo = if v0 > 0.0 { v0 } else { v1 * 1e-12 };
            let mut bound: f64 = 1.0;
            for j in 0..=16 {
                let v = lo * (v1 / lo).powf(j as f64 / 16.0);
                bound = bound.max(g(v) / seg.envelope(v));
            }
            seg.g1 *= bound * (1.0 + 1e-6);
            segs.push(seg);
        }
        let mut cum = Vec::with_capacity(segs.len());
        let mut acc = 0.0;
        for s in &segs {
            acc += s.mass();
            cum.push(acc);
        }
        Ok(PowerLawTable { segs, cum })
    }

    /// Total mass of the envelope (an upper bound of the density's mass).
    pub fn envelope_mass(&self) -> f64 {
        *self.cum.last().unwrap_or(&0.0)
    }

    /// One proposal from the envelope followed by the acceptance test.
    pub fn try_sample<G: Fn(f64) -> f64>(&self, g: G, rng: &mut Stream) -> Option<f64> {
        let t = rng.random::<f64>() * self.envelope_mass();
        let i = self.cum.partition_point(|c| *c < t).min(self.segs.len() - 1);
        let seg = &self.segs[i];
        let v = seg.sample(rng);
        let acc = g(v) / seg.envelope(v);
        (rng.random::<f64>() < acc).then_some(v)
    }

    /// One exact draw from the normalized density.
    pub fn sample<G: Fn(f64) -> f64>(&self, g: G, rng: &mut Stream) -> f64 {
        loop {
            if let Some(v) = self.try_sample(&g, rng) {
                return v;
            }
        }
    }
}

/// Sampler for a density `λ(s, 1-s)` on `[lo, 1 - gap]` with `lo ∈ {0, 1/2}`,
/// split into a table in `s` on the left half and a table in `u = 1 - s` on
/// the right half so both endpoints keep full relative precision.
#[derive(Debug, Clone)]
pub struct UnitSampler {
    left: Option<PowerLawTable>,
    right: Option<PowerLawTable>,
    left_hi: f64,
}

impl UnitSampler {
    pub fn new<L: Fn(f64, f64) -> f64>(lambda: L, lo: f64, gap: f64) -> Result<Self> {
        let hi_s = 1.0 - gap;
        let left_hi = hi_s.min(0.5);
        let left = if lo < left_hi {
            Some(PowerLawTable::new(|s| lambda(s, 1.0 - s), lo, left_hi)?)
        } else {
            None
        };
        let right = if gap < 0.5 {
            let u_hi = (1.0 - lo).min(0.5);
            if gap < u_hi {
                Some(PowerLawTable::new(|u| lambda(1.0 - u, u), gap, u_hi)?)
            } else {
                None
            }
        } else {
            None
        };
        Ok(UnitSampler { left, right, left_hi })
    }

    pub fn envelope_mass(&self) -> f64 {
        self.left.as_ref().map_or(0.0, |t| t.envelope_mass()) + self.right.as_ref().map_or(0.0, |t| t.envelope_mass())
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_none() && self.right.is_none()
    }

    /// One proposal from the combined envelope followed by the acceptance
    /// test. Accepted draws thin a Poisson process of rate
    /// [`envelope_mass`](Self::envelope_mass) down to the density's rate.
    pub fn try_sample<L: Fn(f64, f64) -> f64>(&self, lambda: L, rng: &mut Stream) -> Option<(f64, f64)> {
        let ml = self.left.as_ref().map_or(0.0, |t| t.envelope_mass());
        let mr = self.right.as_ref().map_or(0.0, |t| t.envelope_mass());
        if rng.random::<f64>() * (ml + mr) < ml {
            let t = self.left.as_ref().expect("left table");
            t.try_sample(|s| lambda(s, 1.0 - s), rng).map(|s| {
                let s = s.min(self.left_hi);
                (s, 1.0 - s)
            })
        } else {
            let t = self.right.as_ref().expect("right table");
            t.try_sample(|u| lambda(1.0 - u, u), rng).map(|u| (1.0 - u, u))
        }
    }

    /// Draw `(s, u)` with `u = 1 - s` accurate at either end.
    pub fn sample<L: Fn(f64, f64) -> f64>(&self, lambda: L, rng: &mut Stream) -> (f64, f64) {
        // A rejected proposal restarts from the choice of half, so the mixture
        // weights are the true masses rather than the envelope masses.
        loop {
            if let Some(p) = self.try_sample(&lambda, rng) {
                return p;
            }
        }
    }
}
