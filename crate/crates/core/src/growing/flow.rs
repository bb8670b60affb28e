//! Tabulated primitive `I(s) = ∫_{lo}^s λ` of a binary conservative density
//! and the flow `f_x(s) = I^{-1}(x^α I(s))`.
//!
//! The table is split at `s = 1/2`. Above it the variable is `u = 1 - s`, so
//! points near the divergent endpoint keep full relative precision; below it
//! (for measures on `(0, 1)`) the variable is `s`. Nodes are log-spaced down
//! to `10^{-100}` and the density is extrapolated as a power law beyond.

use crate::error::{Error, Result};
use crate::measures::BinaryMeasure;
use crate::numerics::quad::{integrate, QuadOptions};

/// Number of log-spaced nodes on each half.
pub const FLOW_NODES: usize = 4096;
/// Smallest tabulated distance to an endpoint.
pub const FLOW_FLOOR: f64 = 1e-100;

fn seg_opts() -> QuadOptions {
    QuadOptions { abs_tol: 0.0, rel_tol: 1e-14, max_panels: 200 }
}

/// Accumulation direction of a half table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    /// `cum_k = ∫_0^{v_k} g`, for a density integrable at `v = 0`.
    FromZero,
    /// `cum_k = ∫_{v_k}^{1/2} g`, for a density that diverges at `v = 0`.
    FromHalf,
}

/// One half of the table, in a variable `v ∈ (0, 1/2]` with log-spaced
/// nodes from [`FLOW_FLOOR`].
#[derive(Debug, Clone)]
struct Half {
    dir: Direction,
    /// Node values, increasing.
    v: Vec<f64>,
    cum: Vec<f64>,
    /// Local power-law exponent of `g` at the first node.
    p0: f64,
    /// `g` at the first node.
    g0: f64,
}

impl Half {
    fn build<G: Fn(f64) -> f64>(g: &G, dir: Direction) -> Result<Half> {
        let n = FLOW_NODES;
        let (lo, hi) = (FLOW_FLOOR.ln(), 0.5f64.ln());
        let mut v: Vec<f64> = (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect();
        v[n - 1] = 0.5;
        let g0 = g(v[0]);
        let p0 = (g(v[1]) / g0).ln() / (v[1] / v[0]).ln();
        if !p0.is_finite() || !(g0 > 0.0) {
            return Err(Error::Numerical("density is not positive with a finite exponent at the endpoint".into()));
        }
        let mut seg = vec![0.0; n];
        for k in 1..n {
            seg[k] = segment(g, v[k - 1], v[k])?;
        }
        let mut cum = vec![0.0; n];
        match dir {
            Direction::FromZero => {
                if p0 <= -1.0 {
                    return Err(Error::Validation("the density must be integrable at s = 0".into()));
                }
                cum[0] = g0 * v[0] / (p0 + 1.0);
                for k in 1..n {
                    cum[k] = cum[k - 1] + seg[k];
                }
            }
            Direction::FromHalf => {
                if p0 > -1.0 {
                    return Err(Error::Validation("the density must not be integrable at s = 1 (infinite total mass)".into()));
                }
                for k in (0..n - 1).rev() {
                    cum[k] = cum[k + 1] + seg[k + 1];
                }
            }
        }
        Ok(Half { dir, v, cum, p0, g0 })
    }

    /// Cumulative value at `v ∈ (0, 1/2]`.
    fn at<G: Fn(f64) -> f64>(&self, g: &G, v: f64) -> Result<f64> {
        let (v0, q) = (self.v[0], self.p0 + 1.0);
        if v < v0 {
            // Power-law extension `g0 (t/v0)^p` below the first node.
            let scale = self.g0 * v0 / q;
            return Ok(match self.dir {
                Direction::FromZero => scale * (v / v0).powf(q),
                Direction::FromHalf => self.cum[0] + scale * (1.0 - (v / v0).powf(q)),
            });
        }
        let k = self.v.partition_point(|x| *x <= v).clamp(1, self.v.len() - 1) - 1;
        Ok(match self.dir {
            Direction::FromZero => self.cum[k] + segment(g, self.v[k], v)?,
            Direction::FromHalf => self.cum[k + 1] + segment(g, v, self.v[k + 1])?,
        })
    }

    /// Solves `at(v) = target` for `v`.
    fn invert<G: Fn(f64) -> f64>(&self, g: &G, target: f64) -> Result<f64> {
        let (v0, q) = (self.v[0], self.p0 + 1.0);
        let n = self.v.len();
        let below_first = match self.dir {
            Direction::FromZero => target < self.cum[0],
            Direction::FromHalf => target > self.cum[0],
        };
        if below_first {
            let r = match self.dir {
                Direction::FromZero => target * q / (self.g0 * v0),
                Direction::FromHalf => 1.0 - (target - self.cum[0]) * q / (self.g0 * v0),
            };
            if !(r > 0.0) {
                return Ok(0.0);
            }
            return Ok(v0 * r.powf(1.0 / q));
        }
        let k = match self.dir {
            Direction::FromZero => {
                if target >= self.cum[n - 1] {
                    return Ok(0.5);
                }
                self.cum.partition_point(|c| *c <= target).clamp(1, n - 1) - 1
            }
            Direction::FromHalf => {
                if target <= 0.0 {
                    return Ok(0.5);
                }
                self.cum.partition_point(|c| *c > target).clamp(1, n - 1) - 1
            }
        };
        let (a, b) = (self.v[k], self.v[k + 1]);
        // Residual increasing in w = ln v.
        let resid = |w: f64| -> Result<f64> {
            let v = w.exp();
            Ok(match self.dir {
                Direction::FromZero => self.cum[k] + segment(g, a, v)? - target,
                Direction::FromHalf => target - self.cum[k + 1] - segment(g, v, b)?,
            })
        };
        // Newton in w with bisection safeguard.
        let (mut lo, mut hi) = (a.ln(), b.ln());
        let mut w = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = resid(w)?;
            if f == 0.0 {
                return Ok(w.exp());
            }
            if f > 0.0 {
                hi = w;
            } else {
                lo = w;
            }
            let v = w.exp();
            let mut next = w - f / (g(v) * v);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let tol = 4.0 * f64::EPSILON * w.abs().max(1.0);
            if (next - w).abs() <= tol || hi - lo <= tol {
                return Ok(next.exp());
            }
            w = next;
        }
        Ok(w.exp())
    }
}

/// `∫_a^b g` in the variable `ln v`.
fn segment<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    integrate(|w| {
        let v = w.exp();
        g(v) * v
    }, a.ln(), b.ln(), seg_opts())
}

/// Primitive table of a binary conservative density.
#[derive(Debug, Clone)]
pub struct FlowTable {
    measure: BinaryMeasure,
    alpha: f64,
    /// Table in `s` on `(0, 1/2]`, present when the support starts at 0.
    left: Option<Half>,
    /// Table in `u = 1 - s` on `(0, 1/2]`, accumulated from `u = 1/2`.
    right: Half,
    /// `I(1/2)`.
    i_half: f64,
}

impl FlowTable {
    /// Builds the table; the density must be positive on the support and its
    /// primitive must diverge at `s = 1`.
    pub fn new(measure: &BinaryMeasure, alpha: f64) -> Result<FlowTable> {
        if !(alpha > 0.0) {
            return Err(Error::Validation(format!("alpha must be positive, got {alpha}")));
        }
        if measure.lo != 0.0 && measure.lo != 0.5 {
            return Err(Error::Validation("binary flows need a support starting at 0 or 1/2".into()));
        }
        let m = measure.clone();
        let right = Half::build(&|u: f64| m.lambda(1.0 - u, u), Direction::FromHalf)?;
        let (left, i_half) = if measure.lo == 0.0 {
            let half = Half::build(&|s: f64| m.lambda(s, 1.0 - s), Direction::FromZero)?;
            let total = *half.cum.last().expect("non-empty table");
            (Some(half), total)
        } else {
            (None, 0.0)
        };
        Ok(FlowTable { measure: measure.clone(), alpha, left, right, i_half })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn measure(&self) -> &BinaryMeasure {
        &self.measure
    }

    /// Lower end of the support.
    pub fn lo(&self) -> f64 {
        self.measure.lo
    }

    /// `I(s)` with `u = 1 - s`.
    pub fn primitive(&self, s: f64, u: f64) -> Result<f64> {
        let m = &self.measure;
        if s < m.lo || u < 0.0 {
            return Err(Error::Domain(format!("s = {s} outside the support [{}, 1]", m.lo)));
        }
        if u == 0.0 {
            return Ok(f64::INFINITY);
        }
        if s >= 0.5 {
            let g = |v: f64| m.lambda(1.0 - v, v);
            Ok(self.i_half + self.right.at(&g, u)?)
        } else {
            let left = self.left.as_ref().ok_or_else(|| Error::Domain(format!("s = {s} below the support")))?;
            let g = |v: f64| m.lambda(v, 1.0 - v);
            left.at(&g, s)
        }
    }

    /// Solves `I(s) = target`, returning `(s, 1 - s)`.
    pub fn inverse(&self, target: f64) -> Result<(f64, f64)> {
        let m = &self.measure;
        if target.is_nan() || target < 0.0 {
            return Err(Error::Domain(format!("primitive value {target} is negative")));
        }
        if target == f64::INFINITY {
            return Ok((1.0, 0.0));
        }
        if target >= self.i_half {
            let g = |v: f64| m.lambda(1.0 - v, v);
            let u = self.right.invert(&g, target - self.i_half)?;
            return Ok((1.0 - u, u));
        }
        let left = self.left.as_ref().ok_or_else(|| Error::Consistency("target below I(1/2) without a left table".into()))?;
        let g = |v: f64| m.lambda(v, 1.0 - v);
        let s = left.invert(&g, target)?;
        Ok((s, 1.0 - s))
    }

    /// `f_x(s) = I^{-1}(x^α I(s))`, returned as `(f, 1 - f)`.
    pub fn flow(&self, x: f64, s: f64, u: f64) -> Result<(f64, f64)> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("x must be positive, got {x}")));
        }
        if x == 1.0 {
            return Ok((s, u));
        }
        let i = self.primitive(s, u)?;
        if i == f64::INFINITY {
            return Ok((1.0, 0.0));
        }
        self.inverse(x.powf(self.alpha) * i)
    }

    /// Scalar generator in the followed-coordinate convention,
    /// `v(s) = -α I(s) / λ(s)`.
    pub fn generator(&self, s: f64, u: f64) -> Result<f64> {
        Ok(-self.alpha * self.primitive(s, u)? / self.measure.lambda(s, u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{BinaryDensity, BinaryWeight};

    fn brownian() -> BinaryMeasure {
        BinaryMeasure::locally_largest(BinaryDensity::Power { gamma: 1.5 }, 1.0)
    }

    #[test]
    fn brownian_primitive_closed_form() {
        let t = FlowTable::new(&brownian(), 0.5).unwrap();
        for &s in &[0.5f64, 0.6, 0.75, 0.9, 0.999, 1.0 - 1e-9] {
            let u = 1.0 - s;
            let want = 2.0 * (2.0 * s - 1.0) / (s * u).sqrt();
            let got = t.primitive(s, u).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{s}: {got} vs {want}");
        }
        let u: f64 = 1e-120;
        let want = 2.0 / u.sqrt();
        let got = t.primitive(1.0 - u, u).unwrap();
        assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
    }

    #[test]
    fn inverse_round_trip() {
        let t = FlowTable::new(&brownian(), 0.5).unwrap();
        for &u in &[0.4, 0.1, 1e-3, 1e-8, 1e-50] {
            let i = t.primitive(1.0 - u, u).unwrap();
            let (_, u2) = t.inverse(i).unwrap();
            assert!((u2 - u).abs() <= 1e-12 * u, "{u} vs {u2}");
        }
    }

    #[test]
    fn full_support_round_trip() {
        let m = BinaryMeasure { weight: Some(BinaryWeight::Weird), lo: 0.0, ..brownian() };
        let t = FlowTable::new(&m, 0.2).unwrap();
        for &s in &[1e-30, 1e-5, 0.1, 0.5, 0.7, 0.999_999] {
            let i = t.primitive(s, 1.0 - s).unwrap();
            let (s2, _) = t.inverse(i).unwrap();
            assert!((s2 - s).abs() <= 1e-11 * s.max(1e-300).min(1.0 - s).max(s * 1e-3), "{s} vs {s2}");
        }
    }
}
