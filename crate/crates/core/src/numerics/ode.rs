//! Dormand–Prince 5(4) integrator with adaptive step control.

use crate::error::{Error, Result};

/// Step-control settings.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { abs_tol: 1e-9, rel_tol: 1e-9, initial_step: 1e-3, max_steps: 200_000 }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..y.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
///
/// `inside` declares the domain of the vector field. Trial steps whose
/// stages leave the domain are rejected and retried with a smaller step; if
/// the step size collapses the trajectory is reported as
/// [`Error::DomainExit`] with the last accepted state.
pub fn dopri5<F, D>(f: F, inside: D, y0: &[f64], t0: f64, t1: f64, opts: OdeOptions) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
    D: Fn(&[f64]) -> bool,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    if t0 == t1 {
        return Ok(y);
    }
    if !inside(&y) {
        return Err(Error::DomainExit { location: format!("t = {t0}, y = {y:?}"), message: "initial state outside domain".into() });
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut h = opts.initial_step.min(span);
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    f(t, &y, &mut k1);
    let mut steps = 0;
    while (t1 - t) * dir > 0.0 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Numerical(format!("ODE step budget exhausted at t = {t}")));
        }
        let last = (t1 - t).abs() <= h;
        let hs = if last { t1 - t } else { dir * h };
        let mut ok = true;
        let stages: [(f64, &[(f64, usize)]); 5] = [
            (C2, &[(A21, 1)]),
            (C3, &[(A31, 1), (A32, 2)]),
            (C4, &[(A41, 1), (A42, 2), (A43, 3)]),
            (C5, &[(A51, 1), (A52, 2), (A53, 3), (A54, 4)]),
            (1.0, &[(A61, 1), (A62, 2), (A63, 3), (A64, 4), (A65, 5)]),
        ];
        for (si, (c, coefs)) in stages.iter().enumerate() {
            {
                let ks: [&[f64]; 5] = [&k1, &k2, &k3, &k4, &k5];
                let terms: Vec<(f64, &[f64])> = coefs.iter().map(|(a, j)| (*a, ks[j - 1])).collect();
                axpy(&mut tmp, &y, hs, &terms);
            }
            if !inside(&tmp) || tmp.iter().any(|v| !v.is_finite()) {
                ok = false;
                break;
            }
            let target = match si {
                0 => &mut k2,
                1 => &mut k3,
                2 => &mut k4,
                3 => &mut k5,
                _ => &mut k6,
            };
            f(t + c * hs, &tmp, target);
        }
        let mut err = f64::INFINITY;
        if ok {
            axpy(&mut y_new, &y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            if !inside(&y_new) || y_new.iter().any(|v| !v.is_finite()) {
                ok = false;
            } else {
                f(t + hs, &y_new, &mut k7);
                err = 0.0;
                for i in 0..n {
                    let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                    let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
                    err = f64::max(err, (e / sc).abs());
                }
            }
        }
        if ok && err <= 1.0 {
            t = if last { t1 } else { t + hs };
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * fac).min(span);
        } else {
            let fac = if ok { (0.9 * err.powf(-0.2)).clamp(0.1, 0.5) } else { 0.25 };
            h *= fac;
            if h < 1e-14 * span.max(t.abs()) {
                return Err(Error::DomainExit {
                    location: format!("t = {t}, y = {y:?}"),
                    message: "step size collapsed near the domain boundary".into(),
                });
            }
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let y = dopri5(|_, y, dy| dy[0] = -y[0], |_| true, &[1.0], 0.0, 2.0, OdeOptions::default()).unwrap();
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn backward_integration() {
        let y = dopri5(|_, y, dy| dy[0] = y[0], |_| true, &[1.0], 1.0, 0.0, OdeOptions::default()).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn domain_exit_is_reported() {
        // y' = -1 from 1 runs out of y > 0 at t = 1.
        let r = dopri5(|_, _, dy| dy[0] = -1.0, |y| y[0] > 0.0, &[1.0], 0.0, 2.0, OdeOptions::default());
        assert!(matches!(r, Err(Error::DomainExit { .. })));
    }
}
