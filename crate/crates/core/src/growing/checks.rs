//! Numerical checks of the growing conditions: quasi-preservation of the
//! measure on threshold sets and monotonicity of `x ↦ x·G_x(y)`.

use rand::Rng;

use super::GrowingFamily;
use crate::error::{Error, Result};
use crate::measures::{MeasureKind, SplittingMeasure};
use crate::numerics::quad::{integrate, integrate_unit, QuadOptions};
use crate::numerics::rng::Stream;
use crate::numerics::roots::brent;
use crate::sequence::DecorationSequence;

/// Pass threshold of [`check_quasi_preservation`].
pub const QUASI_TOLERANCE: f64 = 1e-5;
/// Slack allowed in monotonicity comparisons.
pub const MONOTONE_SLACK: f64 = 1e-10;

fn opts() -> QuadOptions {
    QuadOptions { abs_tol: 0.0, rel_tol: 1e-12, max_panels: 2000 }
}

/// One threshold of a quasi-preservation check.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiRow {
    pub z: f64,
    /// `Ξ(G_x^{-1}(A_z))`.
    pub lhs: f64,
    /// `x^{-α} Ξ(A_z)`.
    pub rhs: f64,
    pub rel_error: f64,
}

/// Result of [`check_quasi_preservation`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiReport {
    pub rows: Vec<QuasiRow>,
    pub max_rel_error: f64,
    pub pass: bool,
}

/// Largest `v ∈ (lo, hi]` with `g(v) ≤ z` for increasing `g`, located in
/// `ln v`. Returns `None` when `g(hi) < z` (empty super-level set).
fn level_crossing<G: Fn(f64) -> Result<f64>>(g: G, z: f64, lo: f64, hi: f64) -> Result<Option<f64>> {
    if g(hi)? < z {
        return Ok(None);
    }
    if g(lo)? >= z {
        return Ok(Some(lo));
    }
    let w = brent(|w| g(w.exp()).map_or(f64::NAN, |v| v - z), lo.ln(), hi.ln(), 1e-15)?;
    Ok(Some(w.exp()))
}

/// Compares `Ξ(G_x^{-1}(A_z))` with `x^{-α} Ξ(A_z)` for `A_z = {y₁ ≥ z}`.
///
/// The pre-image is located by root finding on the family (the first
/// offspring of `G_x(y)` is monotone in the coordinate parametrizing the
/// measure), then both masses are computed by quadrature. Mass-form measures
/// integrate the shape through the fixed panel of largest-piece draws, which
/// both sides share. Locally-largest mass-form measures are not supported.
pub fn check_quasi_preservation(
    family: &GrowingFamily,
    measure: &SplittingMeasure,
    alpha: f64,
    x: f64,
    thresholds: &[f64],
) -> Result<QuasiReport> {
    if !(x > 0.0) || !(alpha > 0.0) {
        return Err(Error::Validation(format!("x and alpha must be positive, got {x}, {alpha}")));
    }
    let scale = x.powf(-alpha);
    let mut rows = Vec::with_capacity(thresholds.len());
    for &z in thresholds {
        if !(z > 0.0 && z < 1.0) {
            return Err(Error::Validation(format!("threshold {z} must lie in (0, 1)")));
        }
        let (lhs, rhs) = match &measure.kind {
            MeasureKind::Binary(b) => {
                let lam = |s: f64, u: f64| b.lambda(s, u);
                let top = if b.lo > 0.0 { 1.0 - b.lo } else { 1.0 - 1e-12 };
                let first = |u: f64| -> Result<f64> {
                    let out = family.evaluate(x, &DecorationSequence::binary(1.0 - u, u)?)?;
                    Ok(out.first_offspring())
                };
                let ustar = if x == 1.0 { (z <= top).then_some(z) } else { level_crossing(first, z, 1e-15, top)? };
                let lhs = match ustar {
                    Some(u) => integrate_unit(lam, b.lo, 1.0 - u, opts())?,
                    None => 0.0,
                };
                let rhs = if z <= top { integrate_unit(lam, b.lo, 1.0 - z, opts())? } else { 0.0 };
                (lhs, scale * rhs)
            }
            MeasureKind::Mass(m) if !m.ordered => {
                let lam = |s: f64, u: f64| m.lambda(s, u);
                let panel = m.largest_piece_panel();
                let (mut lhs, mut rhs) = (0.0, 0.0);
                for &t in panel {
                    let first = |u: f64| -> Result<f64> {
                        let seq = DecorationSequence::exact(1.0 - u, vec![u * t])?;
                        Ok(family.evaluate(x, &seq)?.first_offspring())
                    };
                    let ustar = if x == 1.0 { (z <= t).then(|| z / t) } else { level_crossing(first, z, 1e-15, 1.0 - 1e-12)? };
                    if let Some(u) = ustar {
                        lhs += integrate_unit(lam, 0.0, 1.0 - u, opts())?;
                    }
                    if t >= z {
                        rhs += integrate_unit(lam, 0.0, 1.0 - z / t, opts())?;
                    }
                }
                let n = panel.len() as f64;
                (lhs / n, scale * rhs / n)
            }
            MeasureKind::Mass(_) => {
                return Err(Error::Validation(format!(
                    "quasi-preservation check is not available for the locally-largest measure {}",
                    measure.id
                )))
            }
            MeasureKind::Height(h) => {
                let lam = |v: f64| h.lambda(v);
                let first = |v: f64| -> Result<f64> {
                    Ok(family.evaluate(x, &DecorationSequence::exact(1.0, vec![v])?)?.first_offspring())
                };
                // Smallest h whose image reaches z; the image is increasing in h.
                let hstar = if x == 1.0 {
                    Some(z)
                } else if first(1.0 - 1e-16)? < z {
                    None
                } else if first(1e-300)? >= z {
                    Some(1e-300)
                } else {
                    let w = brent(|w| first(w.exp()).map_or(f64::NAN, |v| v - z), (1e-300f64).ln(), (1.0 - 1e-16f64).ln(), 1e-15)?;
                    Some(w.exp())
                };
                let lhs = match hstar {
                    Some(v) => integrate(lam, v, 1.0, opts())?,
                    None => 0.0,
                };
                (lhs, scale * integrate(lam, z, 1.0, opts())?)
            }
        };
        let rel_error = if rhs > 0.0 { (lhs - rhs).abs() / rhs } else { lhs.abs() };
        rows.push(QuasiRow { z, lhs, rhs, rel_error });
    }
    let max_rel_error = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    Ok(QuasiReport { rows, max_rel_error, pass: max_rel_error <= QUASI_TOLERANCE })
}

/// Draws a point of the support of a measure, spread over the whole support
/// rather than weighted by the (infinite) measure: the complement `1 - y₀`
/// (or the height `h`) is uniform with probability 1/2 and log-uniform down
/// to `10⁻⁹` otherwise.
pub fn sample_support_point(measure: &SplittingMeasure, rng: &mut Stream) -> Result<DecorationSequence> {
    let spread = |rng: &mut Stream, top: f64| -> f64 {
        if rng.random::<f64>() < 0.5 {
            top * (1.0 - rng.random::<f64>())
        } else {
            (1e-9f64.ln() + rng.random::<f64>() * (top.ln() - 1e-9f64.ln())).exp()
        }
    };
    match &measure.kind {
        MeasureKind::Binary(b) => {
            let u = spread(rng, (1.0 - b.lo).min(1.0 - 1e-12));
            DecorationSequence::binary(1.0 - u, u)
        }
        MeasureKind::Mass(m) => {
            let u = spread(rng, 1.0 - 1e-12);
            let y = 1.0 - u;
            let pieces: Vec<f64> = m.theta.sample(rng, 1e-9).into_iter().map(|t| u * t).collect();
            if m.ordered && pieces.first().is_some_and(|p| *p > y) {
                let mut rest = pieces[1..].to_vec();
                rest.push(y);
                DecorationSequence::exact(pieces[0], rest)
            } else {
                DecorationSequence::exact(y, pieces)
            }
        }
        MeasureKind::Height(h) => {
            let v = spread(rng, 1.0).min(1.0 - 1e-12);
            let mut off = vec![v];
            if let Some(shape) = &h.shape {
                off.extend(shape.sample(rng, 1e-9).into_iter().map(|s| v * s));
            }
            DecorationSequence::exact(1.0, off)
        }
    }
}

/// Result of [`check_monotone`].
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub samples: usize,
    pub comparisons: usize,
    pub violations: usize,
    /// Smallest observed increment of a coordinate of `x·G_x(y)` between
    /// consecutive grid values (negative when the condition fails).
    pub worst_margin: f64,
    /// Support point and grid pair of the worst margin.
    pub worst_case: Option<(DecorationSequence, f64, f64)>,
    pub pass: bool,
}

/// Counts violations of `x ↦ x·G_x(y)` being coordinate-wise non-decreasing
/// along `x_grid`, over `sample_count` support points.
pub fn check_monotone(
    family: &GrowingFamily,
    measure: &SplittingMeasure,
    x_grid: &[f64],
    sample_count: usize,
    rng: &mut Stream,
) -> Result<MonotoneReport> {
    if x_grid.windows(2).any(|w| w[0] >= w[1]) || x_grid.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::Validation("x_grid must be positive and strictly increasing".into()));
    }
    let mut report = MonotoneReport {
        samples: sample_count,
        comparisons: 0,
        violations: 0,
        worst_margin: f64::INFINITY,
        worst_case: None,
        pass: true,
    };
    for _ in 0..sample_count {
        let y = sample_support_point(measure, rng)?;
        let mut prev: Option<(f64, Vec<f64>)> = None;
        for &x in x_grid {
            let cur: Vec<f64> = family.evaluate(x, &y)?.to_vec().into_iter().map(|v| x * v).collect();
            if let Some((xp, p)) = &prev {
                let n = p.len().max(cur.len());
                let mut worst = f64::INFINITY;
                for i in 0..n {
                    let d = cur.get(i).copied().unwrap_or(0.0) - p.get(i).copied().unwrap_or(0.0);
                    worst = worst.min(d);
                }
                report.comparisons += 1;
                if worst < -MONOTONE_SLACK {
                    report.violations += 1;
                }
                if worst < report.worst_margin {
                    report.worst_margin = worst;
                    report.worst_case = Some((y.clone(), *xp, x));
                }
            }
            prev = Some((x, cur));
        }
    }
    report.pass = report.violations == 0;
    Ok(report)
}

/// Scale factors used by [`flow_check`].
pub const FLOW_CHECK_X: [f64; 4] = [0.25, 0.5, 2.0, 4.0];
/// Thresholds used by [`flow_check`].
pub const FLOW_CHECK_Z: [f64; 5] = [0.01, 0.05, 0.1, 0.25, 0.45];

/// Quasi-preservation at every scale of [`FLOW_CHECK_X`] and the
/// monotonicity check on a log-spaced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowCheck {
    pub quasi: Vec<(f64, QuasiReport)>,
    pub monotone: MonotoneReport,
    pub pass: bool,
}

impl FlowCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.quasi.iter().map(|(_, r)| r.max_rel_error).fold(0.0, f64::max)
    }
}

/// Runs both growing checks for `family` against `measure` at exponent
/// `alpha`; the monotone check draws `samples` support points.
pub fn flow_check(
    family: &GrowingFamily,
    measure: &SplittingMeasure,
    alpha: f64,
    samples: usize,
    rng: &mut Stream,
) -> Result<FlowCheck> {
    let quasi = FLOW_CHECK_X
        .iter()
        .map(|x| check_quasi_preservation(family, measure, alpha, *x, &FLOW_CHECK_Z).map(|r| (*x, r)))
        .collect::<Result<Vec<_>>>()?;
    let grid: Vec<f64> = (0..=16).map(|i| 2f64.powf(-2.0 + 0.25 * i as f64)).collect();
    let monotone = check_monotone(family, measure, &grid, samples, rng)?;
    let pass = monotone.pass && quasi.iter().all(|(_, r)| r.pass);
    Ok(FlowCheck { quasi, monotone, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::catalog::measure;
    use crate::numerics::rng::stream;

    #[test]
    fn identity_is_exact() {
        let m = measure("brownian-mass-sb").unwrap();
        let r = check_quasi_preservation(&GrowingFamily::MagicMass, &m, 0.5, 1.0, &[0.01, 0.1, 0.4]).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn magic_preserves_mass_marginal() {
        let m = measure("brownian-mass-sb").unwrap();
        let r = check_quasi_preservation(&GrowingFamily::MagicMass, &m, 0.5, 0.5, &[0.01, 0.05, 0.2, 0.5, 0.9]).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        let wrong = check_quasi_preservation(&GrowingFamily::MagicMass, &m, 0.6, 0.5, &[0.05]).unwrap();
        assert!(!wrong.pass);
    }

    #[test]
    fn brownian_ll_monotone() {
        let m = measure("brownian-mass-ll").unwrap();
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let r = check_monotone(&GrowingFamily::BrownianClosedForm, &m, &grid, 200, &mut stream(3)).unwrap();
        assert_eq!(r.violations, 0, "{r:?}");
    }

    #[test]
    fn grid_must_increase() {
        let m = measure("brownian-mass-ll").unwrap();
        assert!(check_monotone(&GrowingFamily::BrownianClosedForm, &m, &[1.0, 0.5], 1, &mut stream(1)).is_err());
    }
}
