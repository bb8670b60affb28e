//! Characteristic quadruplets `(a, σ², Ξ; α)`: cumulant, Lévy exponent and
//! drift constants.

use crate::error::{Error, Result};
use crate::measures::{Cutoffs, MassMeasure, MeasureKind, SplittingMeasure};
use crate::numerics::quad::{integrate_unit, QuadOptions};

const INV_E: f64 = 0.367_879_441_171_442_33;

fn opts() -> QuadOptions {
    QuadOptions { abs_tol: 1e-14, rel_tol: 1e-11, max_panels: 4000 }
}

fn ordered_opts() -> QuadOptions {
    QuadOptions { abs_tol: 1e-15, rel_tol: 1e-10, max_panels: 2000 }
}

/// Drift, Brownian coefficient, splitting measure and self-similarity index.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicQuadruplet {
    pub drift_a: f64,
    pub sigma2: f64,
    pub measure: SplittingMeasure,
    pub alpha: f64,
    gamma0: f64,
}

impl CharacteristicQuadruplet {
    /// Validates the parameters and stores a subcriticality certificate
    /// `γ₀` with `κ(γ₀) ≤ 0`.
    pub fn new(drift_a: f64, sigma2: f64, measure: SplittingMeasure, alpha: f64) -> Result<Self> {
        Self::with_hint(drift_a, sigma2, measure, alpha, None)
    }

    fn with_hint(drift_a: f64, sigma2: f64, measure: SplittingMeasure, alpha: f64, hint: Option<f64>) -> Result<Self> {
        if !(alpha > 0.0) || !(sigma2 >= 0.0) || !drift_a.is_finite() {
            return Err(Error::Validation(format!(
                "quadruplet needs alpha > 0, sigma2 >= 0 and a finite drift (got {alpha}, {sigma2}, {drift_a})"
            )));
        }
        let mut q = CharacteristicQuadruplet { drift_a, sigma2, measure, alpha, gamma0: f64::NAN };
        q.gamma0 = q.find_gamma0(hint).ok_or_else(|| {
            Error::Config(format!("quadruplet on {} is not subcritical: no exponent with non-positive cumulant", q.measure.id))
        })?;
        Ok(q)
    }

    /// Pure-jump quadruplet: `a = ∫ log y₀ 𝟙_{|log y₀| ≤ 1} dΞ₀`, `σ = 0`.
    pub fn pure_jump(measure: SplittingMeasure, alpha: f64) -> Result<Self> {
        let a = log_followed_integral(&measure, 0.0, 1.0).map_err(|e| {
            Error::Config(format!("{} does not integrate log y0 near y0 = 1, so it has no pure-jump form: {e}", measure.id))
        })?;
        Self::with_hint(a, 0.0, measure, alpha, Some(1.0))
    }

    /// Quadruplet with `σ = 0` and the drift chosen so that `κ(γ*) = 0`.
    pub fn calibrated(measure: SplittingMeasure, alpha: f64, gamma_star: f64) -> Result<Self> {
        let k = jump_cumulant(&measure, gamma_star)?;
        Self::with_hint(-k / gamma_star, 0.0, measure, alpha, Some(gamma_star))
    }

    /// Copy with a different self-similarity index.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Validation(format!("alpha must be positive, got {alpha}")));
        }
        Ok(CharacteristicQuadruplet { alpha, ..self.clone() })
    }

    /// Stored exponent with non-positive cumulant.
    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    fn find_gamma0(&self, hint: Option<f64>) -> Option<f64> {
        let lo = self.measure.cumulant_support_bound();
        let mut candidates = vec![1.0];
        candidates.extend(hint);
        candidates.extend((1..=400).map(|i| lo + 4.0 * i as f64 / 400.0));
        candidates.into_iter().filter(|g| *g > 0.0).find(|g| self.cumulant(*g) <= 1e-8)
    }

    /// `κ(γ) = σ²γ²/2 + aγ + ∫(y₀^γ − 1 − γ log y₀ 𝟙_{|log y₀| ≤ 1} + Σ yᵢ^γ) dΞ`,
    /// `+∞` when the integral diverges.
    pub fn cumulant(&self, gamma: f64) -> f64 {
        if !(gamma > 0.0) {
            return f64::INFINITY;
        }
        match jump_cumulant(&self.measure, gamma) {
            Ok(j) => 0.5 * self.sigma2 * gamma * gamma + self.drift_a * gamma + j,
            Err(_) => f64::INFINITY,
        }
    }

    /// `ψ(γ) = σ²γ²/2 + aγ + ∫(y₀^γ − 1 − γ log y₀ 𝟙_{|log y₀| ≤ 1}) dΞ₀`.
    pub fn levy_exponent(&self, gamma: f64) -> f64 {
        let base = 0.5 * self.sigma2 * gamma * gamma + self.drift_a * gamma;
        if gamma == 0.0 {
            return 0.0;
        }
        let f = |y: f64, u: f64| {
            let l = log_y(y, u);
            let ind = if y >= INV_E { l } else { 0.0 };
            (gamma * l).exp_m1() - gamma * ind
        };
        match followed_integral(&self.measure, f, 0.0, 1.0) {
            Ok(j) => base + j,
            Err(_) => f64::INFINITY,
        }
    }

    /// Drift of the followed log-decoration once the retained jumps are
    /// simulated uncompensated: `a − ∫_{1 − y₀ ≥ c'} log y₀ 𝟙_{|log y₀| ≤ 1} dΞ₀`.
    pub fn truncated_drift(&self, cutoffs: &Cutoffs) -> Result<f64> {
        let gap = cutoffs.followed_gap();
        Ok(self.drift_a - log_followed_integral(&self.measure, 0.0, 1.0 - gap)?)
    }

    /// Compensated drift `β = a + σ²/2 + ∫(y₀ − 1 − log y₀ 𝟙_{|log y₀| ≤ 1}) dΞ₀`.
    ///
    /// With cutoffs, retained jumps are not compensated and the value is
    /// `b + σ²/2 + ∫_{1 − y₀ < c'} (y₀ − 1 − log y₀) dΞ₀` with `b` the
    /// truncated drift.
    pub fn compensated_drift(&self, cutoffs: Option<&Cutoffs>) -> Result<f64> {
        let integrand = |y: f64, u: f64| {
            let l = log_y(y, u);
            let ind = if y >= INV_E { l } else { 0.0 };
            -u - ind
        };
        let wrap = |e: Error| {
            Error::Config(format!(
                "compensated drift of {} diverges; measures needing interlacing of large jumps are not supported ({e})",
                self.measure.id
            ))
        };
        match cutoffs {
            None => {
                let j = followed_integral(&self.measure, integrand, 0.0, 1.0).map_err(wrap)?;
                Ok(self.drift_a + 0.5 * self.sigma2 + j)
            }
            Some(c) => {
                let b = self.truncated_drift(c).map_err(wrap)?;
                let gap = c.followed_gap();
                let j = followed_integral(&self.measure, integrand, 1.0 - gap, 1.0).map_err(wrap)?;
                Ok(b + 0.5 * self.sigma2 + j)
            }
        }
    }
}

/// `log y` computed from whichever of `y`, `u = 1 - y` is more accurate.
fn log_y(y: f64, u: f64) -> f64 {
    if y > 0.5 {
        (-u).ln_1p()
    } else {
        y.ln()
    }
}

/// `y^γ − 1` accurately near `y = 1`.
fn pow_m1(y: f64, u: f64, gamma: f64) -> f64 {
    (gamma * log_y(y, u)).exp_m1()
}

/// `∫ f(y₀, 1 − y₀) 𝟙_{y_lo ≤ y₀ ≤ y_hi} dΞ₀` for the first marginal.
///
/// Height-form measures keep `y₀ = 1`, so the integral vanishes for the
/// integrands used here (all of which vanish at `y₀ = 1`).
pub fn followed_integral<F: Fn(f64, f64) -> f64>(measure: &SplittingMeasure, f: F, y_lo: f64, y_hi: f64) -> Result<f64> {
    let pieces = |lo: f64, hi: f64, g: &dyn Fn(f64, f64) -> f64, o: QuadOptions| -> Result<f64> {
        // Split at e^{-1} so that indicator kinks sit on panel edges.
        if lo < INV_E && INV_E < hi {
            Ok(integrate_unit(g, lo, INV_E, o)? + integrate_unit(g, INV_E, hi, o)?)
        } else {
            integrate_unit(g, lo, hi, o)
        }
    };
    match &measure.kind {
        MeasureKind::Binary(b) => {
            let lo = y_lo.max(b.lo);
            pieces(lo, y_hi, &|s, u| f(s, u) * b.lambda(s, u), opts())
        }
        MeasureKind::Mass(m) if !m.ordered => pieces(y_lo, y_hi, &|s, u| f(s, u) * m.lambda(s, u), opts()),
        MeasureKind::Mass(m) => ordered_integral(m, &f, y_lo, y_hi),
        MeasureKind::Height(_) => Ok(0.0),
    }
}

/// First-marginal integral of a locally-largest mass-form measure, averaged
/// over the panel of largest shape pieces. For each panel value `t` the
/// followed coordinate is `max(y, (1 - y) t)`; the range of `y` is cut where
/// the maximum switches, where it crosses `e^{-1}` and at the range limits, so
/// every quadrature sees a smooth integrand.
fn ordered_integral(m: &MassMeasure, f: &dyn Fn(f64, f64) -> f64, y_lo: f64, y_hi: f64) -> Result<f64> {
    let panel = m.largest_piece_panel();
    let o = ordered_opts();
    let mut total = 0.0;
    for &t in panel {
        let switch = t / (1.0 + t);
        // The sampled coordinate y is the largest one.
        let a_lo = switch.max(y_lo);
        if a_lo < y_hi {
            let g = |y: f64, u: f64| f(y, u) * m.lambda(y, u);
            total += split_integral(&g, a_lo, y_hi, &[INV_E], o)?;
        }
        // A shape piece (1 - y) t is the largest one.
        let b_lo = (1.0 - y_hi / t).max(0.0);
        let b_hi = (1.0 - y_lo / t).min(switch);
        if b_lo < b_hi {
            let g = |y: f64, u: f64| {
                let top = u * t;
                f(top, y + u * (1.0 - t)) * m.lambda(y, u)
            };
            total += split_integral(&g, b_lo, b_hi, &[1.0 - INV_E / t], o)?;
        }
    }
    Ok(total / panel.len() as f64)
}

fn split_integral(g: &dyn Fn(f64, f64) -> f64, lo: f64, hi: f64, cuts: &[f64], o: QuadOptions) -> Result<f64> {
    let mut edges = vec![lo];
    edges.extend(cuts.iter().copied().filter(|c| *c > lo && *c < hi));
    edges.push(hi);
    let mut acc = 0.0;
    for w in edges.windows(2) {
        acc += integrate_unit(g, w[0], w[1], o)?;
    }
    Ok(acc)
}

/// `∫ log y₀ 𝟙_{|log y₀| ≤ 1} 𝟙_{y_lo ≤ y₀ ≤ y_hi} dΞ₀`.
pub fn log_followed_integral(measure: &SplittingMeasure, y_lo: f64, y_hi: f64) -> Result<f64> {
    followed_integral(measure, |y, u| if y >= INV_E { log_y(y, u) } else { 0.0 }, y_lo.max(INV_E), y_hi)
}

/// Jump part of the cumulant, `κ(γ) − aγ − σ²γ²/2`.
pub fn jump_cumulant(measure: &SplittingMeasure, gamma: f64) -> Result<f64> {
    if gamma <= measure.cumulant_support_bound() {
        return Err(Error::Divergent(format!("cumulant of {} is infinite at {gamma}", measure.id)));
    }
    match &measure.kind {
        MeasureKind::Binary(b) => {
            let f = |s: f64, u: f64| {
                let ind = if s >= INV_E { gamma * log_y(s, u) } else { 0.0 };
                // Near s = 1 the followed term cancels the indicator term; near
                // s = 0 the offspring term cancels the constant.
                let body = if s > 0.5 {
                    pow_m1(s, u, gamma) - ind + u.powf(gamma)
                } else {
                    s.powf(gamma) + pow_m1(u, s, gamma) - ind
                };
                body * b.lambda(s, u)
            };
            let lo = b.lo;
            if lo < INV_E {
                Ok(integrate_unit(f, lo, INV_E, opts())? + integrate_unit(f, INV_E, 1.0, opts())?)
            } else {
                integrate_unit(f, lo, 1.0, opts())
            }
        }
        MeasureKind::Mass(m) => {
            let sg = m.theta.power_sum(gamma);
            if !sg.is_finite() {
                return Err(Error::Divergent(format!("shape moment of order {gamma} is infinite")));
            }
            let f = |y: f64, u: f64| {
                let ind = if y >= INV_E { gamma * log_y(y, u) } else { 0.0 };
                (pow_m1(y, u, gamma) - ind + u.powf(gamma) * sg) * m.lambda(y, u)
            };
            let sb = integrate_unit(f, 0.0, INV_E, opts())? + integrate_unit(f, INV_E, 1.0, opts())?;
            if !m.ordered {
                return Ok(sb);
            }
            // Only the indicator term depends on which coordinate is followed.
            let unordered = SplittingMeasure::new("", MeasureKind::Mass(MassMeasure::new(m.gamma, m.theta.clone(), false, m.norm)));
            let d_sb = log_followed_integral(&unordered, 0.0, 1.0)?;
            let d_ord = log_followed_integral(measure, 0.0, 1.0)?;
            Ok(sb - gamma * (d_ord - d_sb))
        }
        MeasureKind::Height(h) => {
            let extra = h.shape.as_ref().map_or(0.0, |t| t.power_sum_mass(gamma));
            Ok(h.norm * (h.shape_mass() + extra) / (gamma - 1.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::catalog::{measure, quadruplet};
    use crate::measures::{BinaryDensity, BinaryMeasure};

    #[test]
    fn conservative_cumulant_vanishes_at_one() {
        for key in ["brownian-mass-ll", "brownian-mass-sb", "gamma-binary:1.3", "hs:2", "stable-mass-sb:1.5"] {
            let q = quadruplet(key).unwrap();
            assert!(q.cumulant(1.0).abs() < 1e-8, "{key}: {}", q.cumulant(1.0));
            assert_eq!(q.gamma0(), 1.0);
        }
    }

    #[test]
    fn brownian_cumulant_blows_up_below_half() {
        let q = quadruplet("brownian-mass-ll").unwrap();
        assert!(q.cumulant(0.25).is_infinite());
        assert!(q.cumulant(0.6).is_finite());
    }

    #[test]
    fn gaussian_part_and_null_measure() {
        let m = measure("brownian-height-ll").unwrap();
        let q = CharacteristicQuadruplet::new(0.0, 2.0, m, 1.0);
        // No exponent makes σ² = 2 with a = 0 subcritical on a positive cumulant.
        assert!(q.is_err());
        let q = CharacteristicQuadruplet::new(-1.0, 0.5, measure("brownian-height-ll").unwrap(), 1.0).unwrap();
        assert!((q.levy_exponent(2.0) - (1.0 - 2.0)).abs() < 1e-15);
        assert_eq!(q.levy_exponent(0.0), 0.0);
        assert!((q.compensated_drift(None).unwrap() - (-1.0 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn levy_exponent_below_cumulant() {
        let q = quadruplet("brownian-mass-ll").unwrap();
        let psi = q.levy_exponent(1.0);
        assert!(psi < q.cumulant(1.0));
        assert!(q.levy_exponent(1e-9).abs() < 1e-6);
    }

    #[test]
    fn compensated_drift_equals_psi_at_one() {
        let q = quadruplet("brownian-mass-ll").unwrap();
        let beta = q.compensated_drift(None).unwrap();
        assert!((beta - q.levy_exponent(1.0)).abs() < 1e-6);
    }

    #[test]
    fn height_cumulant_closed_form() {
        let q = quadruplet("brownian-height-ll").unwrap();
        assert!((q.cumulant(2.0) - (-2.0 + 1.0)).abs() < 1e-14);
        assert!(q.cumulant(1.0).is_infinite());
    }

    #[test]
    fn cumulant_matches_independent_sum() {
        // Direct midpoint sum on s-grid for γ-binary 1.3 at γ = 1.
        let m = SplittingMeasure::new(
            "t",
            MeasureKind::Binary(BinaryMeasure::locally_largest(BinaryDensity::Power { gamma: 1.3 }, 1.0)),
        );
        let j = jump_cumulant(&m, 1.6).unwrap();
        let n = 2_000_000;
        let mut acc = 0.0;
        // Substitute u = w^{1/(1-p)} style grid: integrate in u on (0, 1/2] with u = t^4.
        for i in 0..n {
            let t = (i as f64 + 0.5) / n as f64 * 0.5f64.powf(0.25);
            let u = t.powi(4);
            let s = 1.0 - u;
            let val = s.powf(1.6) - 1.0 - 1.6 * s.ln() + u.powf(1.6);
            acc += val * (s * u).powf(-1.3) * 4.0 * t.powi(3);
        }
        acc *= 0.5f64.powf(0.25) / n as f64;
        assert!((j - acc).abs() < 1e-6 * acc.abs().max(1.0), "{j} vs {acc}");
    }
}
