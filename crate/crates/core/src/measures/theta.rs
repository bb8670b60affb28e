//! Offspring-shape measures `Θ` for mass-form and height-form splitting
//! measures.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::gamma::gamma as gamma_fn;

use crate::numerics::rng::Stream;

/// Number of candidate subordinator samples drawn per resampling step for
/// the tilted stable weights.
const STABLE_POOL: usize = 32;
/// Relative size below which subordinator jumps are replaced by their mean.
const STABLE_JUMP_FLOOR: f64 = 1e-4;
const STABLE_MAX_JUMPS: usize = 4_000;

/// Offspring shape of a mass-form measure: a (non-normalized) measure on
/// non-increasing sequences summing to one.
#[derive(Debug, Clone, PartialEq)]
pub enum Theta {
    /// `Π (sᵢ)^{a-1} ds` on the `k`-part simplex; total mass `Γ(a)^k / Γ(ka)`.
    Dirichlet { k: usize, a: f64 },
    /// `E[S₁^{1-1/β} F(ΔS/S₁)]` for the ranked jumps of a `1/β`-stable
    /// subordinator on `[0, 1]`; total mass `Γ(2-β)/Γ(1/β)`.
    StableMass { beta: f64 },
}

impl Theta {
    /// Total mass.
    pub fn mass(&self) -> f64 {
        match *self {
            Theta::Dirichlet { k, a } => gamma_fn(a).powi(k as i32) / gamma_fn(k as f64 * a),
            Theta::StableMass { beta } => gamma_fn(2.0 - beta) / gamma_fn(1.0 / beta),
        }
    }

    /// `E[Σ θᵢ^p]` under the normalized measure, `+∞` when infinite.
    pub fn power_sum(&self, p: f64) -> f64 {
        match *self {
            Theta::Dirichlet { k, a } => {
                let kf = k as f64;
                if k == 1 {
                    return 1.0;
                }
                kf * gamma_fn(a + p) * gamma_fn(kf * a) / (gamma_fn(a) * gamma_fn(kf * a + p))
            }
            Theta::StableMass { beta } => {
                let rho = 1.0 / beta;
                if p <= rho {
                    return f64::INFINITY;
                }
                // Poisson–Dirichlet(ρ, ρ − 1) moment.
                gamma_fn(rho) * gamma_fn(p - rho) / (gamma_fn(rho - 1.0 + p) * gamma_fn(1.0 - rho))
            }
        }
    }

    /// One draw from the normalized measure, sorted non-increasingly, with
    /// pieces below `min_piece` dropped.
    pub fn sample(&self, rng: &mut Stream, min_piece: f64) -> Vec<f64> {
        let mut v = match *self {
            Theta::Dirichlet { k, a } => {
                let g = Gamma::new(a, 1.0).expect("valid gamma shape");
                let draws: Vec<f64> = (0..k).map(|_| g.sample(rng)).collect();
                let total: f64 = draws.iter().sum();
                draws.into_iter().map(|x| x / total).collect()
            }
            Theta::StableMass { beta } => sample_tilted_stable(beta, rng),
        };
        v.retain(|&x| x >= min_piece && x > 0.0);
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }
}

/// Ranked jumps of a `ρ`-stable subordinator at time one (LePage series),
/// with jumps below `STABLE_JUMP_FLOOR · J₁` replaced by their expected sum.
/// Returns `(jumps, total)`.
fn lepage(rho: f64, rng: &mut Stream) -> (Vec<f64>, f64) {
    let g1r = gamma_fn(1.0 - rho);
    let c = rho / g1r;
    let mut arrival = 0.0;
    let mut jumps = Vec::new();
    let mut total = 0.0;
    loop {
        arrival += -(1.0 - rng.random::<f64>()).ln();
        let j = (arrival * g1r).powf(-1.0 / rho);
        if !jumps.is_empty() && (j < STABLE_JUMP_FLOOR * jumps[0] || jumps.len() >= STABLE_MAX_JUMPS) {
            total += c * j.powf(1.0 - rho) / (1.0 - rho);
            break;
        }
        jumps.push(j);
        total += j;
    }
    (jumps, total)
}

/// Normalized ranked stable jumps under the `S₁^{1-ρ}` tilt, by
/// sampling-importance-resampling over a pool of untilted draws.
fn sample_tilted_stable(beta: f64, rng: &mut Stream) -> Vec<f64> {
    let rho = 1.0 / beta;
    let tilt = 1.0 - rho;
    let pool: Vec<(Vec<f64>, f64)> = (0..STABLE_POOL).map(|_| lepage(rho, rng)).collect();
    let weights: Vec<f64> = pool.iter().map(|(_, s)| s.powf(tilt)).collect();
    let total: f64 = weights.iter().sum();
    let mut t = rng.random::<f64>() * total;
    let mut pick = pool.len() - 1;
    for (i, w) in weights.iter().enumerate() {
        if t < *w {
            pick = i;
            break;
        }
        t -= w;
    }
    let (jumps, s) = &pool[pick];
    jumps.iter().map(|j| j / s).collect()
}

/// Shape of the stable height measure: under the measure
/// `u^{-1/θ} e^{-u θ^θ} du`, a Poisson process on `[0, 1]` with intensity
/// `u (θ/z)^{1+θ} dz`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightTheta {
    pub theta: f64,
}

impl HeightTheta {
    pub fn from_beta(beta: f64) -> Self {
        HeightTheta { theta: 1.0 / (beta - 1.0) }
    }

    /// Total mass `Γ(1 - 1/θ) θ^{1-θ}`.
    pub fn mass(&self) -> f64 {
        let th = self.theta;
        gamma_fn(1.0 - 1.0 / th) * th.powf(1.0 - th)
    }

    /// `∫ Σ Sᵢ^p dΘ` (not normalized), `+∞` for `p ≤ θ`.
    pub fn power_sum_mass(&self, p: f64) -> f64 {
        let th = self.theta;
        if p <= th {
            return f64::INFINITY;
        }
        gamma_fn(2.0 - 1.0 / th) * th.powf(2.0 - th) / (p - th)
    }

    /// Points `Sᵢ ≥ z_min` of one draw, sorted non-increasingly.
    pub fn sample(&self, rng: &mut Stream, z_min: f64) -> Vec<f64> {
        let th = self.theta;
        let shape = 1.0 - 1.0 / th;
        let rate = th.powf(th);
        let u = Gamma::new(shape, 1.0 / rate).expect("valid gamma").sample(rng);
        if z_min >= 1.0 {
            return Vec::new();
        }
        let a = z_min.powf(-th);
        let mean = u * th.powf(th) * (a - 1.0);
        if !(mean > 0.0) {
            return Vec::new();
        }
        let n = Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0);
        let mut pts: Vec<f64> = (0..n)
            .map(|_| {
                let w: f64 = rng.random();
                (a - w * (a - 1.0)).powf(-1.0 / th)
            })
            .collect();
        pts.sort_by(|a, b| b.total_cmp(a));
        pts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::stream;

    #[test]
    fn dirichlet_moments_sum_to_one_at_p1() {
        let t = Theta::Dirichlet { k: 3, a: 0.25 };
        assert!((t.power_sum(1.0) - 1.0).abs() < 1e-12);
        let s = StableCheck::sum_one(Theta::StableMass { beta: 1.5 });
        assert!((s - 1.0).abs() < 1e-12);
    }

    struct StableCheck;
    impl StableCheck {
        fn sum_one(t: Theta) -> f64 {
            t.power_sum(1.0)
        }
    }

    #[test]
    fn dirichlet_samples_on_simplex() {
        let t = Theta::Dirichlet { k: 4, a: 0.2 };
        let mut rng = stream(3);
        for _ in 0..100 {
            let v = t.sample(&mut rng, 0.0);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(v.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn stable_sample_is_normalized() {
        let t = Theta::StableMass { beta: 1.5 };
        let mut rng = stream(5);
        for _ in 0..20 {
            let v = t.sample(&mut rng, 0.0);
            let s: f64 = v.iter().sum();
            // Jumps below the series floor are folded into the normalization only.
            assert!(s <= 1.0 + 1e-12 && s > 0.8, "{s}");
            assert!(v.iter().all(|x| *x >= 0.9 * STABLE_JUMP_FLOOR * v[0]));
        }
    }
}
