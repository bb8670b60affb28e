//! Catalog keys, custom measures and the truncated sampler.

use ssmt::measures::catalog::{custom_from_text, measure, quadruplet, EXAMPLE_KEYS};
use ssmt::Error;

#[test]
fn every_example_key_builds_a_quadruplet() {
    for key in EXAMPLE_KEYS {
        let q = quadruplet(key).unwrap_or_else(|e| panic!("{key}: {e}"));
        assert!(q.alpha > 0.0, "{key}");
        assert_eq!(measure(key).unwrap().id, q.measure.id);
    }
}

#[test]
fn malformed_keys_are_configuration_errors() {
    for key in ["nope", "stable-mass-sb", "stable-mass-sb:3", "gamma-binary:x", "brownian-mass-ll:2"] {
        assert!(matches!(measure(key), Err(Error::Config(_)) | Err(Error::Validation(_))), "{key}");
    }
}

#[test]
fn custom_gamma_measure_matches_the_catalog_entry() {
    let q = custom_from_text("kind = binary-ll\ngamma = 1.5\nalpha = 0.5\n").unwrap();
    assert!(q.measure.conservative());
    let c = quadruplet("gamma-binary:1.5").unwrap();
    let (a, b) = match (&q.measure.kind, &c.measure.kind) {
        (ssmt::measures::MeasureKind::Binary(a), ssmt::measures::MeasureKind::Binary(b)) => (a, b),
        _ => panic!("binary measures expected"),
    };
    for s in [0.55, 0.7, 0.9] {
        assert!((a.lambda(s, 1.0 - s) - b.lambda(s, 1.0 - s)).abs() <= 1e-12 * b.lambda(s, 1.0 - s));
    }
}

#[test]
fn custom_measure_rejects_ambiguous_density() {
    let text = "kind = binary-ll\ngamma = 1.5\ndensity_expr = (s*u)^(-1.5)\n";
    assert!(custom_from_text(text).is_err());
}
