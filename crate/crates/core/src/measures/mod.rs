//! Splitting measures, their truncated samplers and the characteristic
//! quadruplets built on them.
//!
//! Three shapes are supported:
//!
//! * binary conservative measures `λ(s) ds` with followed coordinate `s` and
//!   single offspring `1 - s`, either locally largest (`s ∈ [1/2, 1]`) or
//!   reweighted by a bifurcator (`s ∈ (0, 1)`);
//! * mass-form measures `ν_γ(dy) ⊗ Θ`, where the followed coordinate is `y`
//!   and the offspring are `(1 - y) θ`;
//! * height-form measures, where the followed coordinate stays at `1` and the
//!   offspring are `h` followed by `h · S` for a shape `S ~ Θ`.

pub mod catalog;
pub mod expr;
pub mod quadruplet;
pub mod sampler;
pub mod table;
pub mod theta;

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::numerics::rng::stream;
pub use expr::Expr;
pub use quadruplet::CharacteristicQuadruplet;
pub use sampler::{Cutoffs, TruncatedSampler};
pub use theta::{HeightTheta, Theta};

/// Number of shape draws used to integrate functionals of the largest piece
/// of a locally-largest mass-form measure.
pub const ORDERED_PANEL_SIZE: usize = 4096;
const ORDERED_PANEL_SEED: u64 = 0x5e_ed0f_0dde;

/// Probability of following the coordinate `s` of a binary pair `{s, u}`.
#[derive(Debug, Clone, PartialEq)]
pub enum BinaryWeight {
    /// `p(s) = s`.
    SizeBiased,
    /// `p(s) = s(1/10 + u) / (s(1/10 + u) + u(1/10 + s))`.
    Weird,
}

impl BinaryWeight {
    /// `p(s, u)` with `u = 1 - s` supplied accurately.
    pub fn eval(&self, s: f64, u: f64) -> f64 {
        match self {
            BinaryWeight::SizeBiased => s,
            BinaryWeight::Weird => {
                let a = s * (0.1 + u);
                let b = u * (0.1 + s);
                a / (a + b)
            }
        }
    }
}

/// Bifurcator weights: the probability of following each coordinate of a
/// non-increasing sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum BifurcatorWeights {
    /// Always follow the largest coordinate.
    LocallyLargest,
    /// Follow coordinate `i` with probability `yᵢ / Σ yⱼ`.
    SizeBiased,
    /// The binary weights of [`BinaryWeight::Weird`]; defined on pairs only.
    Weird,
}

impl BifurcatorWeights {
    /// Probability vector for the ordered sequence `y`.
    pub fn weights(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.is_empty() {
            return Err(Error::Validation("bifurcator weights need a non-empty sequence".into()));
        }
        let p = match self {
            BifurcatorWeights::LocallyLargest => {
                let mut p = vec![0.0; y.len()];
                p[0] = 1.0;
                p
            }
            BifurcatorWeights::SizeBiased => {
                let total: f64 = y.iter().sum();
                y.iter().map(|v| v / total).collect()
            }
            BifurcatorWeights::Weird => {
                if y.len() != 2 {
                    return Err(Error::Validation("weird weights are defined on binary sequences only".into()));
                }
                let p0 = BinaryWeight::Weird.eval(y[0], y[1]);
                vec![p0, 1.0 - p0]
            }
        };
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || p.iter().any(|v| *v < 0.0) {
            return Err(Error::Validation(format!("bifurcator weights sum to {sum}, expected 1")));
        }
        Ok(p)
    }

    fn binary(&self) -> Option<BinaryWeight> {
        match self {
            BifurcatorWeights::LocallyLargest => None,
            BifurcatorWeights::SizeBiased => Some(BinaryWeight::SizeBiased),
            BifurcatorWeights::Weird => Some(BinaryWeight::Weird),
        }
    }
}

/// Symmetric base density of a binary measure.
#[derive(Debug, Clone, PartialEq)]
pub enum BinaryDensity {
    /// `(s u)^{-γ}`.
    Power { gamma: f64 },
    /// A user expression in `s` and `u`.
    Expr(Expr),
}

/// Binary conservative splitting measure `norm · base(s, u) · p(s, u) ds` on
/// `[lo, 1)`, followed coordinate `s`, offspring `u = 1 - s`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMeasure {
    pub density: BinaryDensity,
    pub weight: Option<BinaryWeight>,
    pub lo: f64,
    pub norm: f64,
}

impl BinaryMeasure {
    /// Locally-largest measure on `[1/2, 1)`.
    pub fn locally_largest(density: BinaryDensity, norm: f64) -> Self {
        BinaryMeasure { density, weight: None, lo: 0.5, norm }
    }

    /// Density at `(s, u)`, `u = 1 - s`, without support checks.
    pub fn lambda(&self, s: f64, u: f64) -> f64 {
        let base = match &self.density {
            BinaryDensity::Power { gamma } => (s * u).powf(-gamma),
            BinaryDensity::Expr(e) => e.eval(s, u),
        };
        let w = self.weight.as_ref().map_or(1.0, |w| w.eval(s, u));
        self.norm * base * w
    }

    /// Exponent `p` with `λ ~ u^p` as `u → 0`.
    pub fn exponent_at_one(&self) -> f64 {
        match (&self.density, &self.weight) {
            (BinaryDensity::Power { gamma }, _) => -gamma,
            _ => local_exponent(|u| self.lambda(1.0 - u, u)),
        }
    }

    /// Exponent `p` with `λ ~ s^p` as `s → 0` (only meaningful when `lo = 0`).
    pub fn exponent_at_zero(&self) -> f64 {
        match (&self.density, &self.weight) {
            (BinaryDensity::Power { gamma }, None) => -gamma,
            (BinaryDensity::Power { gamma }, Some(_)) => 1.0 - gamma,
            _ => local_exponent(|s| self.lambda(s, 1.0 - s)),
        }
    }
}

fn local_exponent<G: Fn(f64) -> f64>(g: G) -> f64 {
    let (v1, v2) = (1e-9, 1e-11);
    (g(v1) / g(v2)).ln() / (v1 / v2).ln()
}

/// Height-form measure: followed coordinate `1`, first offspring `h` with
/// density `norm · M_Θ · h^{-2}` on `(0, 1)`, further offspring `h · Sᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMeasure {
    /// `None` for the Brownian case (no further offspring, `M_Θ = 1`).
    pub shape: Option<HeightTheta>,
    pub norm: f64,
}

impl HeightMeasure {
    pub fn shape_mass(&self) -> f64 {
        self.shape.as_ref().map_or(1.0, |t| t.mass())
    }

    /// Density of the first offspring `h`.
    pub fn lambda(&self, h: f64) -> f64 {
        self.norm * self.shape_mass() / (h * h)
    }
}

/// Mass-form measure `norm · ν_γ(dy) ⊗ Θ(dθ)` with `ν_γ(dy) = y^{γ-1} (1-y)^{-1-γ} dy`.
#[derive(Debug, Clone)]
pub struct MassMeasure {
    pub gamma: f64,
    pub theta: Theta,
    /// Locally largest: follow the largest of `y` and `(1 - y) θ` instead of `y`.
    pub ordered: bool,
    pub norm: f64,
    panel: Arc<OnceLock<Vec<f64>>>,
}

impl PartialEq for MassMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.gamma == other.gamma && self.theta == other.theta && self.ordered == other.ordered && self.norm == other.norm
    }
}

impl MassMeasure {
    pub fn new(gamma: f64, theta: Theta, ordered: bool, norm: f64) -> Self {
        MassMeasure { gamma, theta, ordered, norm, panel: Arc::new(OnceLock::new()) }
    }

    /// Density of the size-biased followed coordinate `y`, `u = 1 - y`.
    pub fn lambda(&self, y: f64, u: f64) -> f64 {
        self.norm * self.theta.mass() * y.powf(self.gamma - 1.0) * u.powf(-1.0 - self.gamma)
    }

    /// Deterministic panel of largest-piece draws `θ_max` under the
    /// normalized shape law, sorted ascending.
    pub fn largest_piece_panel(&self) -> &[f64] {
        self.panel.get_or_init(|| {
            let mut rng = stream(ORDERED_PANEL_SEED);
            let mut v: Vec<f64> = (0..ORDERED_PANEL_SIZE)
                .map(|_| self.theta.sample(&mut rng, 0.0).first().copied().unwrap_or(1.0))
                .collect();
            v.sort_by(|a, b| a.total_cmp(b));
            v
        })
    }
}

/// The shape-specific part of a splitting measure.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind {
    Binary(BinaryMeasure),
    Height(HeightMeasure),
    Mass(MassMeasure),
}

/// Support descriptor, used for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    /// `s ∈ [1/2, 1)`, offspring `1 - s`.
    BinaryHalf,
    /// `s ∈ (0, 1)`, offspring `1 - s`.
    BinaryFull,
    /// Followed coordinate `1`, offspring on a ray.
    HeightRay,
    /// Mass form on the `k`-simplex.
    Simplex { k: usize },
    /// Mass form with Poissonian stable shape.
    StableForm,
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Support::BinaryHalf => write!(f, "binary conservative on [1/2,1]"),
            Support::BinaryFull => write!(f, "binary conservative on [0,1]"),
            Support::HeightRay => write!(f, "non-conservative ray"),
            Support::Simplex { k } => write!(f, "{}-simplex", k + 1),
            Support::StableForm => write!(f, "Poissonian stable form"),
        }
    }
}

/// A splitting measure with its catalog key.
#[derive(Debug, Clone, PartialEq)]
pub struct SplittingMeasure {
    pub id: String,
    pub kind: MeasureKind,
}

impl SplittingMeasure {
    pub fn new(id: impl Into<String>, kind: MeasureKind) -> Self {
        SplittingMeasure { id: id.into(), kind }
    }

    pub fn support(&self) -> Support {
        match &self.kind {
            MeasureKind::Binary(b) if b.lo >= 0.5 => Support::BinaryHalf,
            MeasureKind::Binary(_) => Support::BinaryFull,
            MeasureKind::Height(_) => Support::HeightRay,
            MeasureKind::Mass(m) => match m.theta {
                Theta::Dirichlet { k, .. } => Support::Simplex { k },
                Theta::StableMass { .. } => Support::StableForm,
            },
        }
    }

    /// Whether every atom satisfies `y₀ + Σ yᵢ = 1`.
    pub fn conservative(&self) -> bool {
        !matches!(self.kind, MeasureKind::Height(_))
    }

    /// Normalization constant applied on top of the displayed density.
    pub fn normalization(&self) -> f64 {
        match &self.kind {
            MeasureKind::Binary(b) => b.norm,
            MeasureKind::Height(h) => h.norm,
            MeasureKind::Mass(m) => m.norm,
        }
    }

    /// Whether the followed coordinate is the largest one on every atom.
    pub fn locally_largest(&self) -> bool {
        match &self.kind {
            MeasureKind::Binary(b) => b.weight.is_none() && b.lo >= 0.5,
            MeasureKind::Height(_) => true,
            MeasureKind::Mass(m) => m.ordered,
        }
    }

    /// Density at a point of the support.
    ///
    /// Binary measures take `[s]`, height measures take `[h]` (the first
    /// offspring), mass measures take `[y]` (the size-biased followed
    /// coordinate) and return the density of that coordinate.
    pub fn density(&self, point: &[f64]) -> Result<f64> {
        let x = *point.first().ok_or_else(|| Error::Domain("empty support point".into()))?;
        match &self.kind {
            MeasureKind::Binary(b) => {
                if !(x >= b.lo && x < 1.0) || (b.lo == 0.0 && x <= 0.0) {
                    return Err(Error::Domain(format!("s = {x} outside the support [{}, 1)", b.lo)));
                }
                Ok(b.lambda(x, 1.0 - x))
            }
            MeasureKind::Height(h) => {
                if !(x > 0.0 && x < 1.0) {
                    return Err(Error::Domain(format!("h = {x} outside the support (0, 1)")));
                }
                Ok(h.lambda(x))
            }
            MeasureKind::Mass(m) => {
                if m.ordered {
                    return Err(Error::Domain("locally-largest mass-form measures have no closed-form density".into()));
                }
                if !(x > 0.0 && x < 1.0) {
                    return Err(Error::Domain(format!("y = {x} outside the support (0, 1)")));
                }
                Ok(m.lambda(x, 1.0 - x))
            }
        }
    }

    /// Reweights a locally-largest measure by bifurcator weights.
    pub fn apply_bifurcator(&self, weights: &BifurcatorWeights) -> Result<SplittingMeasure> {
        if !self.locally_largest() {
            return Err(Error::Validation(format!("{} is not in locally-largest form", self.id)));
        }
        // Probe the weights on a panel of ordered pairs before accepting them.
        for i in 1..20 {
            let s = 0.5 + 0.5 * i as f64 / 20.0;
            let y: &[f64] = &[s, 1.0 - s];
            weights.weights(y)?;
        }
        if *weights == BifurcatorWeights::LocallyLargest {
            return Ok(self.clone());
        }
        let id = format!("{}+{:?}", self.id, weights).to_lowercase();
        match &self.kind {
            MeasureKind::Binary(b) => {
                let mut out = b.clone();
                out.weight = weights.binary();
                out.lo = 0.0;
                Ok(SplittingMeasure::new(id, MeasureKind::Binary(out)))
            }
            MeasureKind::Mass(m) if *weights == BifurcatorWeights::SizeBiased => Ok(SplittingMeasure::new(
                id,
                MeasureKind::Mass(MassMeasure::new(m.gamma, m.theta.clone(), false, m.norm)),
            )),
            _ => Err(Error::Validation(format!("bifurcator {weights:?} is not supported for {}", self.id))),
        }
    }

    /// Largest `γ` for which `∫ y₁^γ dΞ = ∞` (the infimum of the exponents
    /// with a finite integral).
    pub fn y1_moment_bound(&self) -> f64 {
        match &self.kind {
            MeasureKind::Binary(b) => (-1.0 - b.exponent_at_one()).max(0.0),
            MeasureKind::Mass(m) => m.gamma,
            MeasureKind::Height(_) => 1.0,
        }
    }

    /// Infimum of the exponents at which the cumulant is finite.
    pub fn cumulant_support_bound(&self) -> f64 {
        match &self.kind {
            MeasureKind::Binary(b) => {
                let mut bound = (-1.0 - b.exponent_at_one()).max(0.0);
                if b.lo < 0.5 {
                    bound = bound.max(-1.0 - b.exponent_at_zero());
                }
                bound
            }
            MeasureKind::Mass(m) => match m.theta {
                Theta::StableMass { beta } => m.gamma.max(1.0 / beta),
                Theta::Dirichlet { .. } => m.gamma,
            },
            MeasureKind::Height(h) => h.shape.as_ref().map_or(1.0, |t| t.theta.max(1.0)),
        }
    }

    /// Builds the truncated sampler for the given cutoffs.
    pub fn sampler(&self, cutoffs: Cutoffs) -> Result<TruncatedSampler> {
        TruncatedSampler::new(self.clone(), cutoffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brownian_ll() -> SplittingMeasure {
        SplittingMeasure::new(
            "brownian-mass-ll",
            MeasureKind::Binary(BinaryMeasure::locally_largest(BinaryDensity::Power { gamma: 1.5 }, 1.0)),
        )
    }

    #[test]
    fn brownian_density_values() {
        let m = brownian_ll();
        let v = m.density(&[0.75]).unwrap();
        assert!((v - (3.0f64 / 16.0).powf(-1.5)).abs() < 1e-12);
        assert!((v - 12.316_805_742_712_016).abs() < 1e-9);
        assert!(matches!(m.density(&[0.25]), Err(Error::Domain(_))));
    }

    #[test]
    fn size_biased_bifurcation() {
        let m = brownian_ll().apply_bifurcator(&BifurcatorWeights::SizeBiased).unwrap();
        let s: f64 = 0.2;
        let want = s * (s * (1.0 - s)).powf(-1.5);
        assert!((m.density(&[s]).unwrap() - want).abs() < 1e-12 * want);
        assert_eq!(m.support(), Support::BinaryFull);
        let same = brownian_ll().apply_bifurcator(&BifurcatorWeights::LocallyLargest).unwrap();
        assert_eq!(same, brownian_ll());
    }

    #[test]
    fn weird_weights_are_complementary() {
        for i in 1..50 {
            let s = i as f64 / 50.0;
            let w = BifurcatorWeights::Weird.weights(&[s, 1.0 - s]).unwrap();
            assert!((w[0] + w[1] - 1.0).abs() < 1e-15);
            let displayed = s * (1.1 - s) / (s * (1.1 - s) + (1.0 - s) * (0.1 + s));
            assert!((w[0] - displayed).abs() < 1e-14);
        }
    }

    #[test]
    fn moment_bounds() {
        assert!((brownian_ll().y1_moment_bound() - 0.5).abs() < 1e-12);
        let g = SplittingMeasure::new(
            "gamma-binary:2.2",
            MeasureKind::Binary(BinaryMeasure::locally_largest(BinaryDensity::Power { gamma: 2.2 }, 1.0)),
        );
        assert!((g.y1_moment_bound() - 1.2).abs() < 1e-12);
        let e = SplittingMeasure::new(
            "custom",
            MeasureKind::Binary(BinaryMeasure::locally_largest(
                BinaryDensity::Expr(Expr::parse("(s*u)^(-1.5)").unwrap()),
                1.0,
            )),
        );
        assert!((e.y1_moment_bound() - 0.5).abs() < 1e-6);
    }
}
