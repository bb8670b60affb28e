//! Growing families: semigroup, monotone coupling and closed-form identities.

use proptest::prelude::*;

use ssmt::generator::{alpha_critical_gamma, Generator};
use ssmt::growing::{
    brownian_h, f_brownian, f_brownian_pair, g_height, g_mass, magic, ode_flow, GrowingFamily,
};
use ssmt::measures::catalog::measure;
use ssmt::sequence::DecorationSequence;

fn scale() -> impl Strategy<Value = f64> {
    (-3.0f64..3.0).prop_map(f64::exp)
}

fn close(a: &DecorationSequence, b: &DecorationSequence, tol: f64) -> bool {
    let (a, b) = (a.to_vec(), b.to_vec());
    a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #[test]
    fn magic_is_a_semigroup(x in scale(), xp in scale(), y in 0.0f64..1.0) {
        let lhs = magic(x, magic(xp, y));
        prop_assert!((lhs - magic(x * xp, y)).abs() <= 1e-12);
    }

    #[test]
    fn g_mass_composes(x in scale(), xp in scale(), y0 in 0.01f64..0.99, split in 0.0f64..1.0) {
        let rest = 1.0 - y0;
        let seq = DecorationSequence::exact(y0, vec![rest * split, rest * (1.0 - split)]).unwrap();
        let lhs = g_mass(x, &g_mass(xp, &seq).unwrap()).unwrap();
        prop_assert!(close(&lhs, &g_mass(x * xp, &seq).unwrap(), 1e-12));
    }

    #[test]
    fn g_height_composes(x in scale(), xp in scale(), h in 0.001f64..0.999) {
        let seq = DecorationSequence::exact(1.0, vec![h, 0.5 * h]).unwrap();
        let lhs = g_height(x, &g_height(xp, &seq).unwrap()).unwrap();
        prop_assert!(close(&lhs, &g_height(x * xp, &seq).unwrap(), 1e-12));
    }

    #[test]
    fn brownian_scales_h(x in scale(), s in 0.501f64..0.999) {
        let (f, g) = f_brownian_pair(x, s, 1.0 - s);
        let rhs = x * brownian_h(s, 1.0 - s);
        prop_assert!((brownian_h(f, g) - rhs).abs() <= 1e-12 * rhs.max(1.0));
        prop_assert!((f + g - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn brownian_coupling_is_monotone(x in 0.01f64..1.0, s in 0.0f64..1.0) {
        // x·G_x(y) ≤ y coordinate-wise for x ≤ 1.
        let (f, g) = f_brownian_pair(x, s, 1.0 - s);
        prop_assert!(x * f <= s + 1e-15);
        prop_assert!(x * g <= 1.0 - s + 1e-15);
    }

    #[test]
    fn brownian_is_symmetric(x in scale(), s in 0.0f64..1.0) {
        prop_assert!((f_brownian(x, 1.0 - s) - (1.0 - f_brownian(x, s))).abs() <= 1e-14);
    }
}

#[test]
fn numeric_flow_matches_brownian_closed_form() {
    let m = measure("brownian-mass-ll").unwrap();
    let numeric = GrowingFamily::binary_numeric(&m, 0.5).unwrap();
    for &x in &[0.05, 0.5, 3.0] {
        for &s in &[0.55, 0.8, 0.99] {
            let seq = DecorationSequence::binary(s, 1.0 - s).unwrap();
            let a = numeric.evaluate(x, &seq).unwrap();
            assert!((a.followed() - f_brownian(x, s)).abs() < 1e-10);
        }
    }
}

#[test]
fn stable_ll_ode_is_a_semigroup_on_three_pieces() {
    let g = Generator::stable_ll();
    let seq = DecorationSequence::exact(0.6, vec![0.3, 0.1]).unwrap();
    let two = ode_flow(&g, 0.5, &ode_flow(&g, 0.8, &seq).unwrap()).unwrap();
    let one = ode_flow(&g, 0.4, &seq).unwrap();
    assert!(close(&two, &one, 1e-6));
}

#[test]
fn evaluation_at_one_is_the_identity() {
    let seq = DecorationSequence::binary(0.7, 0.3).unwrap();
    for key in ["magic-mass", "brownian", "stable-ll"] {
        let f = GrowingFamily::from_key(key, None, None).unwrap();
        assert_eq!(f.evaluate(1.0, &seq).unwrap(), seq);
    }
}

#[test]
fn critical_exponent_is_boundary_below_three_halves() {
    for g in [1.05, 1.2, 1.4, 1.5] {
        let a = alpha_critical_gamma(g);
        assert!((a.alpha_c - (g - 1.0)).abs() < 1e-9);
    }
    assert!(!alpha_critical_gamma(2.5).boundary);
}
