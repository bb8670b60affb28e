//! Transport-equation fields on the simplex.

use ssmt::divfield::{
    certificate, divergence_residual, inequality_grid, solve_characteristics, Bump, SimplexGrid, DEFAULT_BUMP,
    DEFAULT_MARGIN, DENSITY_ALPHA,
};

#[test]
fn characteristic_field_is_admissible_on_a_coarse_grid() {
    let grid = SimplexGrid::new(60, DEFAULT_MARGIN).unwrap();
    let v = solve_characteristics(&grid, DENSITY_ALPHA).unwrap();
    assert!(divergence_residual(&grid, &v, DENSITY_ALPHA).unwrap().max_residual <= 1e-3);
    assert!(inequality_grid(&v, &grid).pass);
}

#[test]
fn certificate_fails_without_a_bump() {
    let grid = SimplexGrid::new(60, DEFAULT_MARGIN).unwrap();
    let (_, _, flat) = certificate(&grid, DENSITY_ALPHA, DEFAULT_BUMP.with_height(0.0)).unwrap();
    assert!(!flat.holds(1e-3, 1e-3));
    let (_, _, bumped) = certificate(&grid, DENSITY_ALPHA, DEFAULT_BUMP).unwrap();
    assert!(bumped.holds(1e-3, 1e-3));
}

#[test]
fn bump_text_round_trips() {
    let b = Bump::parse("0.6,0.28,0.05,0.04").unwrap();
    assert_eq!(b, DEFAULT_BUMP);
    assert!(Bump::parse("0.6,0.28").is_err());
}
