//! Truncated Poisson samplers for splitting measures.
//!
//! An atom is retained when its followed coordinate moves by at least the
//! gap `c' = min(c, 1 - e^{-κ})`, where `c` is the fragment cutoff and `κ` the
//! followed-jump cutoff; for height-form measures, when the first offspring is
//! at least `c`. The retained set contains every atom with `y₁ ≥ c` or
//! `|log y₀| ≥ κ`. Offspring below `c` are dropped from the stored sequences.

use rand::Rng;

use crate::error::{Error, Result};
use crate::measures::quadruplet::followed_integral;
use crate::measures::table::UnitSampler;
use crate::measures::{MeasureKind, SplittingMeasure};
use crate::numerics::quad::{integrate_unit, QuadOptions};
use crate::numerics::rng::Stream;
use crate::sequence::{DecorationSequence, MAX_LEN};

/// Truncation levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoffs {
    /// Offspring below this size are dropped.
    pub fragment: f64,
    /// Jumps of the followed coordinate with `|log y₀|` at least this size are
    /// always retained.
    pub followed_jump: f64,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Cutoffs { fragment: 1e-3, followed_jump: 1.0 }
    }
}

impl Cutoffs {
    pub fn new(fragment: f64, followed_jump: f64) -> Result<Self> {
        if !(fragment > 0.0 && fragment < 1.0) || !(followed_jump > 0.0) {
            return Err(Error::Validation(format!(
                "cutoffs must satisfy 0 < fragment < 1 and followed_jump > 0, got {fragment}, {followed_jump}"
            )));
        }
        Ok(Cutoffs { fragment, followed_jump })
    }

    /// Cutoffs with the given fragment level and the default followed-jump level.
    pub fn fragment(fragment: f64) -> Result<Self> {
        Self::new(fragment, 1.0)
    }

    /// Minimal retained value of `1 - y₀`.
    pub fn followed_gap(&self) -> f64 {
        self.fragment.min(-(-self.followed_jump).exp_m1())
    }
}

#[derive(Debug, Clone)]
enum Inner {
    /// Draws of the (size-biased) followed coordinate.
    Unit(UnitSampler),
    /// Inverse-CDF draws of the first offspring of a height-form measure.
    Height { rate: f64 },
}

/// Exact sampler of the truncated measure, as a Poisson process in time.
#[derive(Debug, Clone)]
pub struct TruncatedSampler {
    measure: SplittingMeasure,
    cutoffs: Cutoffs,
    inner: Inner,
}

impl TruncatedSampler {
    pub fn new(measure: SplittingMeasure, cutoffs: Cutoffs) -> Result<Self> {
        let gap = cutoffs.followed_gap();
        let inner = match &measure.kind {
            MeasureKind::Binary(b) => {
                let b2 = b.clone();
                Inner::Unit(UnitSampler::new(move |s, u| b2.lambda(s, u), b.lo, gap).map_err(as_config)?)
            }
            MeasureKind::Mass(m) => {
                let m2 = m.clone();
                Inner::Unit(UnitSampler::new(move |s, u| m2.lambda(s, u), 0.0, gap).map_err(as_config)?)
            }
            MeasureKind::Height(h) => {
                let c = cutoffs.fragment;
                Inner::Height { rate: h.norm * h.shape_mass() * (1.0 / c - 1.0) }
            }
        };
        let s = TruncatedSampler { measure, cutoffs, inner };
        let r = s.proposal_rate();
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Config(format!("truncated mass of {} is not finite and positive ({r})", s.measure.id)));
        }
        Ok(s)
    }

    pub fn measure(&self) -> &SplittingMeasure {
        &self.measure
    }

    pub fn cutoffs(&self) -> Cutoffs {
        self.cutoffs
    }

    /// Rate of the proposal process; accepted proposals form the truncated
    /// Poisson process.
    pub fn proposal_rate(&self) -> f64 {
        match &self.inner {
            Inner::Unit(u) => u.envelope_mass(),
            Inner::Height { rate } => *rate,
        }
    }

    /// Total mass of the retained set, by quadrature.
    pub fn truncated_mass(&self) -> Result<f64> {
        let gap = self.cutoffs.followed_gap();
        let opts = QuadOptions { rel_tol: 1e-10, ..QuadOptions::default() };
        match &self.measure.kind {
            MeasureKind::Binary(b) => integrate_unit(|s, u| b.lambda(s, u), b.lo, 1.0 - gap, opts),
            MeasureKind::Mass(m) if !m.ordered => integrate_unit(|s, u| m.lambda(s, u), 0.0, 1.0 - gap, opts),
            MeasureKind::Mass(_) => followed_integral(&self.measure, |_, _| 1.0, 0.0, 1.0 - gap),
            MeasureKind::Height(_) => Ok(self.proposal_rate()),
        }
    }

    /// One proposal; `Some` when it is accepted.
    pub fn try_draw(&self, rng: &mut Stream) -> Option<DecorationSequence> {
        let c = self.cutoffs.fragment;
        match (&self.inner, &self.measure.kind) {
            (Inner::Unit(us), MeasureKind::Binary(b)) => {
                let (s, u) = us.try_sample(|s, u| b.lambda(s, u), rng)?;
                DecorationSequence::new(s, vec![u], c, MAX_LEN).ok()
            }
            (Inner::Unit(us), MeasureKind::Mass(m)) => {
                let (y, u) = us.try_sample(|s, u| m.lambda(s, u), rng)?;
                let pieces: Vec<f64> = m.theta.sample(rng, c / u).into_iter().map(|t| u * t).collect();
                if !m.ordered {
                    return DecorationSequence::new(y, pieces, c, MAX_LEN).ok();
                }
                let big = pieces.first().copied().unwrap_or(0.0);
                if big <= y {
                    return DecorationSequence::new(y, pieces, c, MAX_LEN).ok();
                }
                if 1.0 - big < self.cutoffs.followed_gap() {
                    return None;
                }
                let mut rest = pieces[1..].to_vec();
                rest.push(y);
                DecorationSequence::new(big, rest, c, MAX_LEN).ok()
            }
            (Inner::Height { .. }, MeasureKind::Height(hm)) => {
                let w: f64 = rng.random();
                let h = 1.0 / (1.0 / c - w * (1.0 / c - 1.0));
                let mut off = vec![h];
                if let Some(shape) = &hm.shape {
                    off.extend(shape.sample(rng, c / h).into_iter().map(|z| h * z));
                }
                DecorationSequence::new(1.0, off, c, MAX_LEN).ok()
            }
            _ => unreachable!("sampler kind matches measure kind"),
        }
    }

    /// One exact draw from the normalized truncated measure.
    pub fn draw(&self, rng: &mut Stream) -> DecorationSequence {
        loop {
            if let Some(a) = self.try_draw(rng) {
                return a;
            }
        }
    }

    /// Waiting time to the next proposal.
    pub fn next_gap(&self, rng: &mut Stream) -> f64 {
        -(1.0 - rng.random::<f64>()).ln() / self.proposal_rate()
    }

    /// Atoms of the truncated Poisson random measure on `[0, horizon]`.
    pub fn sample_atoms(&self, horizon: f64, rng: &mut Stream) -> Vec<(f64, DecorationSequence)> {
        let mut out = Vec::new();
        let mut t = 0.0;
        loop {
            t += self.next_gap(rng);
            if t > horizon {
                return out;
            }
            if let Some(a) = self.try_draw(rng) {
                out.push((t, a));
            }
        }
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(format!("truncated measure cannot be sampled: {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::catalog::measure;
    use crate::numerics::rng::stream;

    #[test]
    fn gap_follows_both_cutoffs() {
        let c = Cutoffs::new(0.1, 1.0).unwrap();
        assert_eq!(c.followed_gap(), 0.1);
        let c = Cutoffs::new(0.9, 0.5).unwrap();
        assert!((c.followed_gap() - (1.0 - (-0.5f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn zero_horizon_is_empty() {
        let s = measure("brownian-mass-ll").unwrap().sampler(Cutoffs::fragment(0.1).unwrap()).unwrap();
        assert!(s.sample_atoms(0.0, &mut stream(1)).is_empty());
    }

    #[test]
    fn gamma_binary_marks_are_conservative() {
        let s = measure("gamma-binary:1.5").unwrap().sampler(Cutoffs::fragment(0.25).unwrap()).unwrap();
        let atoms = s.sample_atoms(50.0, &mut stream(7));
        assert!(!atoms.is_empty());
        for (_, a) in atoms {
            let y1 = a.first_offspring();
            assert!((0.25..=0.5).contains(&y1), "y1 = {y1}");
            assert_eq!(a.followed() + y1, 1.0);
        }
    }

    #[test]
    fn atoms_are_time_ordered() {
        let s = measure("hs:3").unwrap().sampler(Cutoffs::fragment(0.05).unwrap()).unwrap();
        let atoms = s.sample_atoms(20.0, &mut stream(11));
        assert!(atoms.windows(2).all(|w| w[0].0 <= w[1].0));
        for (_, a) in &atoms {
            assert!((a.total() - 1.0).abs() < 1e-12 || a.total() < 1.0);
        }
    }
}
