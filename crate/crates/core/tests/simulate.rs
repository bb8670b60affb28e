//! Decoration paths and coupled flows.

use proptest::prelude::*;

use ssmt::growing::GrowingFamily;
use ssmt::measures::catalog::quadruplet;
use ssmt::simulate::{backend_deviation, monotonicity_audit, Backend, SimOptions, Simulator, AUDIT_SLACK};

fn simulator(key: &str, family: &str, backend: Backend) -> Simulator {
    let q = quadruplet(key).unwrap();
    let f = GrowingFamily::from_key(family, Some(&q.measure), Some(q.alpha)).unwrap();
    Simulator::new(q, f, SimOptions { backend, ..SimOptions::default() }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn paths_are_deterministic_and_absorbed(seed in any::<u64>(), x in 0.05f64..2.0) {
        let sim = simulator("brownian-mass-ll", "brownian", Backend::PureJump);
        let a = sim.path(x, seed).unwrap();
        prop_assert_eq!(&a, &sim.path(x, seed).unwrap());
        prop_assert!(a.absorption.is_finite() && a.absorption > 0.0);
        prop_assert!(!a.truncated);
        prop_assert!(a.values.iter().all(|v| *v >= 0.0 && *v <= x * (1.0 + 1e-12)));
        prop_assert!(a.times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn coupled_flows_pass_the_audit(seed in any::<u64>(), lo in 0.05f64..0.95) {
        let sim = simulator("brownian-mass-sb", "magic-mass", Backend::PureJump);
        let flow = sim.coupled(&[lo, 1.0], seed).unwrap();
        let report = monotonicity_audit(&flow, AUDIT_SLACK);
        prop_assert!(report.passed(), "{:?}", report);
        prop_assert!(flow.paths[0].absorption <= flow.paths[1].absorption);
    }
}

#[test]
fn height_paths_absorb_at_their_start() {
    let sim = simulator("brownian-height-ll", "magic-height", Backend::PureJump);
    for seed in 0..10 {
        let p = sim.path(0.7, seed).unwrap();
        assert!((p.absorption - 0.7).abs() <= sim.options().step);
    }
}

#[test]
fn backends_agree_on_the_brownian_flow() {
    let pure = simulator("brownian-mass-ll", "brownian", Backend::PureJump);
    let euler = simulator("brownian-mass-ll", "brownian", Backend::Euler);
    for seed in 20..24 {
        let grid = [0.3, 0.6, 1.0];
        let (same, dev) = backend_deviation(&pure.coupled(&grid, seed).unwrap(), &euler.coupled(&grid, seed).unwrap());
        assert!(same);
        assert!(dev < 1e-2, "seed {seed}: {dev}");
    }
}

#[test]
fn unsorted_grids_are_rejected() {
    let sim = simulator("brownian-mass-ll", "brownian", Backend::PureJump);
    assert!(sim.coupled(&[1.0, 0.5], 1).is_err());
}
