//! Acceptance suite: one status line per criterion.
//!
//! Runs without the libtest harness so the status lines always reach the
//! output. Criterion 3 is a known failure: the quoted reference value is not
//! a root of the equation it is paired with (the true root is 0.892246...),
//! so the suite requires it to fail for exactly that reason and every other
//! criterion to pass.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use ssmt::divfield::{certificate, SimplexGrid, DEFAULT_BUMP, DEFAULT_MARGIN, DEFAULT_N, DENSITY_ALPHA};
use ssmt::generator::{alpha_critical_gamma, Generator};
use ssmt::growing::{
    binary_flow, brownian_h, check_monotone, check_quasi_preservation, f_brownian, f_brownian_pair, ode_flow,
    sample_support_point, GrowingFamily, FLOW_CHECK_X, FLOW_CHECK_Z,
};
use ssmt::measures::catalog::{measure, quadruplet};
use ssmt::measures::SplittingMeasure;
use ssmt::numerics::ks::ks_two_sample;
use ssmt::numerics::rng::stream;
use ssmt::sequence::DecorationSequence;
use ssmt::simulate::{ks_self_similarity, monotonicity_audit, SimOptions, Simulator, AUDIT_SLACK};
use ssmt::tree::{
    conservation_violations, hypograph_distance_nested, tree_stats, TreeBuilder, TreeOptions, DEFAULT_DEPTH_CAP,
};

/// Outcome of one criterion.
struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn cubic(a: f64) -> f64 {
    256.0 - 162.0 * a - 42.0 * a * a + a * a * a
}

fn tanh_residual(a: f64) -> f64 {
    (a - 3.0) * ((a - 3.0) * (9.0 + a) / (16.0 * a)).tanh() - (a + 1.0)
}

fn c1() -> Outcome {
    let start = Instant::now();
    let worst = [1.1, 1.25, 1.5]
        .iter()
        .map(|g| (alpha_critical_gamma(*g).alpha_c - (g - 1.0)).abs())
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(worst <= 1e-6 && secs < 1.0, format!("max |error| {worst:.2e}, {secs:.3} s"))
}

fn c2() -> Outcome {
    let start = Instant::now();
    let a = alpha_critical_gamma(2.5).alpha_c;
    let secs = start.elapsed().as_secs_f64();
    let r = cubic(a);
    Outcome::new(
        (a - 1.211).abs() <= 1e-3 && r.abs() <= 1e-6 && secs < 1.0,
        format!("alpha_c {a:.9}, cubic residual {r:.2e}, {secs:.3} s"),
    )
}

/// Returns the outcome and whether the failure is the documented one: the
/// solver value solves the equation while the quoted value does not.
fn c3() -> (Outcome, bool) {
    let a = alpha_critical_gamma(2.0).alpha_c;
    let r = tanh_residual(a);
    let near_quoted = (a - 0.886).abs() <= 1e-3;
    let documented = !near_quoted && r.abs() <= 1e-6 && (a - 0.8922464945697346).abs() <= 1e-9 && tanh_residual(0.886).abs() > 1e-2;
    let detail = format!(
        "alpha_c {a:.10}, tanh residual {r:.2e}; |alpha_c - 0.886| = {:.2e}; residual at 0.886 is {:.2e}",
        (a - 0.886).abs(),
        tanh_residual(0.886)
    );
    (Outcome::new(near_quoted && r.abs() <= 1e-6, detail), documented)
}

fn c4() -> Outcome {
    let xs: Vec<f64> = (0..100).map(|i| 10f64.powf(-2.0 + 3.0 * i as f64 / 99.0)).collect();
    let ss: Vec<f64> = (1..=100).map(|j| 0.5 + 0.5 * j as f64 / 101.0).collect();
    let mut identity = 0.0f64;
    for &x in &xs {
        for &s in &ss {
            let (f, g) = f_brownian_pair(x, s, 1.0 - s);
            let rhs = x * brownian_h(s, 1.0 - s);
            identity = identity.max((brownian_h(f, g) - rhs).abs() / rhs.abs().max(1.0));
        }
    }
    let m = measure("gamma-binary:1.5").unwrap();
    let fam = GrowingFamily::binary_numeric(&m, 0.5).unwrap();
    let mut flow = 0.0f64;
    for &x in &xs {
        for &s in &ss {
            let y = fam.evaluate(x, &DecorationSequence::binary(s, 1.0 - s).unwrap()).unwrap();
            flow = flow.max((y.followed() - f_brownian(x, s)).abs());
        }
    }
    for &(x, s) in &[(0.1, 0.6), (0.5, 0.75), (3.0, 0.9)] {
        flow = flow.max((binary_flow(&m, 0.5, x, s).unwrap() - f_brownian(x, s)).abs());
    }
    Outcome::new(identity <= 1e-12 && flow <= 1e-8, format!("identity {identity:.2e}, binary flow {flow:.2e}"))
}

fn max_coordinate_gap(a: &DecorationSequence, b: &DecorationSequence) -> f64 {
    let (a, b) = (a.to_vec(), b.to_vec());
    (0..a.len().max(b.len()))
        .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

fn semigroup_error(family: &GrowingFamily, m: &SplittingMeasure, seed: u64) -> f64 {
    let mut rng = stream(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 100 {
        let y = sample_support_point(m, &mut rng).unwrap();
        let x = (rng.random::<f64>() * 4f64.ln() * 2.0 - 4f64.ln()).exp();
        let xp = (rng.random::<f64>() * 4f64.ln() * 2.0 - 4f64.ln()).exp();
        if !family.contains(&y) {
            continue;
        }
        let inner = family.evaluate(xp, &y).unwrap();
        let lhs = family.evaluate(x, &inner).unwrap();
        let rhs = family.evaluate(x * xp, &y).unwrap();
        worst = worst.max(max_coordinate_gap(&lhs, &rhs));
        done += 1;
    }
    worst
}

fn c5() -> Outcome {
    let cases: Vec<(&str, GrowingFamily, SplittingMeasure)> = vec![
        ("magic-mass", GrowingFamily::MagicMass, measure("brownian-mass-sb").unwrap()),
        ("magic-height", GrowingFamily::MagicHeight, measure("brownian-height-ll").unwrap()),
        ("brownian", GrowingFamily::BrownianClosedForm, measure("brownian-mass-ll").unwrap()),
        ("binary-flow ll", {
            let m = measure("brownian-mass-ll").unwrap();
            GrowingFamily::binary_numeric(&m, 0.5).unwrap()
        }, measure("brownian-mass-ll").unwrap()),
        ("binary-flow gamma 2.5", {
            let m = measure("gamma-binary:2.5").unwrap();
            GrowingFamily::binary_numeric(&m, 1.0).unwrap()
        }, measure("gamma-binary:2.5").unwrap()),
        ("binary-flow weird", {
            let m = measure("brownian-mass-weird").unwrap();
            GrowingFamily::binary_numeric(&m, 0.2).unwrap()
        }, measure("brownian-mass-weird").unwrap()),
        ("stable-ll", GrowingFamily::generator_ode(Generator::stable_ll()), measure("brownian-mass-ll").unwrap()),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (name, family, m)) in cases.iter().enumerate() {
        let err = semigroup_error(family, m, 500 + i as u64);
        let tol = if family.closed_form() { 1e-10 } else { 1e-6 };
        pass &= err <= tol;
        parts.push(format!("{name} {err:.1e}"));
    }
    Outcome::new(pass, parts.join(", "))
}

fn c6() -> Outcome {
    let ll = measure("brownian-mass-ll").unwrap();
    let cases: Vec<(&str, GrowingFamily, SplittingMeasure, f64)> = vec![
        ("magic-mass/brownian-mass-sb", GrowingFamily::MagicMass, measure("brownian-mass-sb").unwrap(), 0.5),
        ("magic-mass/stable-mass-sb:1.5", GrowingFamily::MagicMass, measure("stable-mass-sb:1.5").unwrap(), 1.0 / 3.0),
        ("magic-height/brownian-height-ll", GrowingFamily::MagicHeight, measure("brownian-height-ll").unwrap(), 1.0),
        ("brownian/brownian-mass-ll", GrowingFamily::BrownianClosedForm, ll.clone(), 0.5),
        ("binary-flow/brownian-mass-ll", GrowingFamily::binary_numeric(&ll, 0.5).unwrap(), ll.clone(), 0.5),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, family, m, alpha) in &cases {
        let worst = FLOW_CHECK_X
            .iter()
            .map(|x| check_quasi_preservation(family, m, *alpha, *x, &FLOW_CHECK_Z).unwrap().max_rel_error)
            .fold(0.0, f64::max);
        pass &= worst <= 1e-5;
        parts.push(format!("{name} {worst:.1e}"));
    }
    Outcome::new(pass, parts.join(", "))
}

fn c7() -> Outcome {
    let g = Generator::stable_ll();
    let mut worst = 0.0f64;
    for i in 0..20 {
        let x = 10f64.powf(-1.0 + 2.0 * i as f64 / 19.0);
        for j in 0..20 {
            let s = 0.5 + 0.49 * (j as f64 + 0.5) / 20.0;
            let out = ode_flow(&g, x, &DecorationSequence::binary(s, 1.0 - s).unwrap()).unwrap();
            worst = worst.max((out.followed() - f_brownian(x, s)).abs());
        }
    }
    Outcome::new(worst <= 1e-6, format!("max |error| {worst:.2e}"))
}

fn c8() -> Outcome {
    let m = measure("brownian-mass-weird").unwrap();
    let run = |alpha: f64| {
        let family = GrowingFamily::binary_numeric(&m, alpha).unwrap();
        check_monotone(&family, &m, &[0.5, 1.0], 2000, &mut stream(7)).unwrap()
    };
    let (small, large) = (run(0.2), run(0.5));
    Outcome::new(
        small.pass && !large.pass,
        format!(
            "alpha 1/5: {} violations (margin {:.1e}); alpha 1/2: {} violations (margin {:.2})",
            small.violations, small.worst_margin, large.violations, large.worst_margin
        ),
    )
}

fn brownian_ll_simulator(step: f64) -> Simulator {
    let q = quadruplet("brownian-mass-ll").unwrap();
    Simulator::new(q, GrowingFamily::BrownianClosedForm, SimOptions { step, ..SimOptions::default() }).unwrap()
}

fn c9() -> Outcome {
    let start = Instant::now();
    let sim = brownian_ll_simulator(1e-4);
    let alpha = sim.quadruplet().alpha;
    let same = ks_self_similarity(&sim, 0.5, 5000, 90_000, alpha).unwrap();
    let power = ks_self_similarity(&sim, 0.5, 5000, 90_000, alpha + 0.3).unwrap();
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        same.p_value > 0.01 && power.p_value < 1e-3 && secs <= 120.0,
        format!("p = {:.3}, power p = {:.1e}, {secs:.1} s", same.p_value, power.p_value),
    )
}

fn c10() -> Outcome {
    let sim = brownian_ll_simulator(ssmt::simulate::DEFAULT_STEP);
    let grid = [0.25, 0.5, 0.75, 1.0];
    let (violations, checks) = (0..1000u64)
        .into_par_iter()
        .map(|s| {
            let rep = monotonicity_audit(&sim.coupled(&grid, 10_000 + s).unwrap(), AUDIT_SLACK);
            (rep.violations, rep.checks)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Outcome::new(violations == 0, format!("{violations} violations in {checks} checks over 1000 flows"))
}

fn c11() -> Outcome {
    let q = quadruplet("brownian-height-ll").unwrap();
    let opts = SimOptions::default();
    let sim = Simulator::new(q, GrowingFamily::MagicHeight, opts).unwrap();
    let mut spine = 0.0f64;
    let mut absorption = 0.0f64;
    for (i, &x) in [0.25, 0.5, 1.0, 2.0].iter().enumerate() {
        for s in 0..25u64 {
            let p = sim.path(x, 1000 * i as u64 + s).unwrap();
            for (t, v) in p.times.iter().zip(&p.values) {
                spine = spine.max((v - (x - t)).abs() / x);
            }
            absorption = absorption.max((p.absorption - x).abs());
        }
    }
    Outcome::new(
        spine <= 4.0 * f64::EPSILON && absorption <= opts.step,
        format!("max |X - (x - t)|/x {spine:.1e}, max |z - x| {absorption:.1e} (step {:.0e})", opts.step),
    )
}

fn tree_builder() -> TreeBuilder {
    let q = quadruplet("brownian-mass-ll").unwrap();
    TreeBuilder::new(q, GrowingFamily::BrownianClosedForm, SimOptions::default())
}

fn c12() -> Outcome {
    let builder = tree_builder();
    let grid = [0.5, 0.625, 0.75, 0.875, 1.0];
    let opts = TreeOptions::new(1e-3, DEFAULT_DEPTH_CAP);
    let top = grid.len() - 1;
    let bad: Vec<u64> = (0..50u64)
        .into_par_iter()
        .filter(|&seed| {
            let family = builder.build_nested(&grid, &opts, seed).unwrap();
            let inclusion = family.inclusion_violations(0.0) == 0;
            let conservation = family.trees.iter().all(|t| conservation_violations(t) == 0);
            let d: Vec<f64> = (0..top).map(|i| hypograph_distance_nested(&family, i, top, 1e-2).unwrap()).collect();
            let monotone = d.windows(2).all(|w| w[1] <= w[0]);
            let lower = d.iter().zip(&grid).all(|(d, x)| *d >= grid[top] - x);
            !(inclusion && conservation && monotone && lower)
        })
        .collect();
    Outcome::new(bad.is_empty(), format!("{} of 50 seeds violate an invariant {bad:?}", bad.len()))
}

fn c13() -> Outcome {
    let start = Instant::now();
    let builder = tree_builder();
    let direct_opts = TreeOptions::new(1e-3, DEFAULT_DEPTH_CAP);
    let nested_opts = TreeOptions { reach: Some(1.0), ..direct_opts };
    let pairs: Vec<((f64, f64), (f64, f64))> = (0..500u64)
        .into_par_iter()
        .map(|s| {
            let direct = tree_stats(&builder.build_tree(1.0, &direct_opts, 1_000_000 + s).unwrap());
            let family = builder.build_nested(&[0.5], &nested_opts, s).unwrap();
            let grown = tree_stats(&builder.grow_step(&family, 0, 1.0, 2_000_000 + s).unwrap().tree);
            ((direct.total_length, direct.height), (grown.total_length, grown.height))
        })
        .collect();
    let (d, g): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let length = ks_two_sample(&d.iter().map(|p| p.0).collect::<Vec<_>>(), &g.iter().map(|p| p.0).collect::<Vec<_>>());
    let height = ks_two_sample(&d.iter().map(|p| p.1).collect::<Vec<_>>(), &g.iter().map(|p| p.1).collect::<Vec<_>>());
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        length.p_value > 0.01 && height.p_value > 0.01 && secs <= 300.0,
        format!("length p = {:.3}, height p = {:.3}, {secs:.0} s", length.p_value, height.p_value),
    )
}

fn c14() -> Outcome {
    let grid = SimplexGrid::new(DEFAULT_N, DEFAULT_MARGIN).unwrap();
    let (_, _, cert) = certificate(&grid, DENSITY_ALPHA, DEFAULT_BUMP).unwrap();
    Outcome::new(
        cert.holds(1e-3, 1e-3),
        format!(
            "residual V {:.1e}, W {:.1e}; margins V {:.1e}, W {:.1e}; sup|W - V| {:.1e}",
            cert.residual_v.max_residual,
            cert.residual_w.max_residual,
            cert.inequalities_v.worst_margin,
            cert.inequalities_w.worst_margin,
            cert.sup_difference
        ),
    )
}

fn main() -> ExitCode {
    let mut unexpected = Vec::new();
    let report = |n: usize, o: &Outcome| {
        println!("criterion {n:>2}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    let checks: [(usize, fn() -> Outcome); 13] = [
        (1, c1),
        (2, c2),
        (4, c4),
        (5, c5),
        (6, c6),
        (7, c7),
        (8, c8),
        (9, c9),
        (10, c10),
        (11, c11),
        (12, c12),
        (13, c13),
        (14, c14),
    ];
    for (n, check) in checks {
        if n == 4 {
            let (o, documented) = c3();
            report(3, &o);
            if !o.pass && !documented {
                unexpected.push(3);
            } else {
                println!("             expected failure: the reference value 0.886 is not a root of the equation");
            }
        }
        let o = check();
        report(n, &o);
        if !o.pass {
            unexpected.push(n);
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: 13 of 14 criteria pass; criterion 3 fails as documented");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected outcome for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
