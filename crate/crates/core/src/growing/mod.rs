//! Growing families `(G_x : x > 0)`: closed forms, the numeric flow of a
//! binary conservative measure, generator-driven ODE flows, the jump
//! transform used by the pure-jump coupling, and checkers for the growing
//! conditions.

pub mod checks;
pub mod flow;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::measures::{MeasureKind, SplittingMeasure};
use crate::numerics::ode::{dopri5, OdeOptions};
use crate::sequence::DecorationSequence;
pub use checks::{
    check_monotone, check_quasi_preservation, flow_check, sample_support_point, FlowCheck, MonotoneReport, QuasiReport,
    QuasiRow, FLOW_CHECK_X, FLOW_CHECK_Z, QUASI_TOLERANCE,
};
pub use flow::FlowTable;

/// `m_x(y) = xy / (xy + 1 - y)`.
pub fn magic(x: f64, y: f64) -> f64 {
    magic_pair(x, y, 1.0 - y).0
}

/// `(m_x(y), 1 - m_x(y))` given `y` and `u = 1 - y`, without cancellation.
pub fn magic_pair(x: f64, y: f64, u: f64) -> (f64, f64) {
    if y == 0.0 {
        return (0.0, 1.0);
    }
    if u == 0.0 {
        return (1.0, 0.0);
    }
    let d = x * y + u;
    (x * y / d, u / d)
}

/// Mass-form family `G^M_x(y₀, y) = (m_x(y₀), (1 - m_x(y₀))/(1 - y₀) · y)`.
pub fn g_mass(x: f64, seq: &DecorationSequence) -> Result<DecorationSequence> {
    check_x(x)?;
    let y0 = seq.followed();
    if y0 >= 1.0 {
        if seq.offspring().is_empty() && y0 == 1.0 {
            return Ok(seq.clone());
        }
        return Err(Error::Domain(format!("mass-form family needs y₀ < 1 with offspring, got y₀ = {y0}")));
    }
    if x == 1.0 {
        return Ok(seq.clone());
    }
    let u0 = 1.0 - y0;
    let d = x * y0 + u0;
    let scale = 1.0 / d;
    DecorationSequence::exact(x * y0 / d, seq.offspring().iter().map(|v| v * scale).collect())
}

/// Height-form family `G^H_x(1, y₁, y) = (1, m_{1/x}(y₁), m_{1/x}(y₁) · y)`,
/// where `y` lists the later offspring relative to `y₁`.
pub fn g_height(x: f64, seq: &DecorationSequence) -> Result<DecorationSequence> {
    check_x(x)?;
    if seq.followed() != 1.0 {
        return Err(Error::Domain(format!("height-form family needs y₀ = 1, got {}", seq.followed())));
    }
    if x == 1.0 || seq.offspring().is_empty() {
        return Ok(seq.clone());
    }
    let y1 = seq.first_offspring();
    if y1 >= 1.0 {
        return Err(Error::Domain(format!("height-form family needs y₁ < 1, got {y1}")));
    }
    // m_{1/x}(y₁) / y₁ = 1 / (y₁ + x(1 - y₁)).
    let ratio = 1.0 / (y1 + x * (1.0 - y1));
    let mut off: Vec<f64> = seq.offspring().iter().map(|v| v * ratio).collect();
    off[0] = y1 * ratio;
    DecorationSequence::exact(1.0, off)
}

/// `h(s) = (1 - 2s)² / (s(1 - s))` with `u = 1 - s` supplied.
pub fn brownian_h(s: f64, u: f64) -> f64 {
    let d = s - u;
    d * d / (s * u)
}

/// `f_x(s)` of the Brownian closed form, as `(f, 1 - f)`.
///
/// On `[1/2, 1]` it is `½(1 + √(h/(4/x + h)))`; below `1/2` it is extended by
/// `f_x(1 - s) = 1 - f_x(s)`.
pub fn f_brownian_pair(x: f64, s: f64, u: f64) -> (f64, f64) {
    if s < u {
        let (a, b) = f_brownian_pair(x, u, s);
        return (b, a);
    }
    if u == 0.0 {
        return (1.0, 0.0);
    }
    if s == u || x == 1.0 {
        return (s, u);
    }
    // z = 4 / (x h); f = ½(1 + (1 + z)^{-1/2}).
    let d = s - u;
    let z = 4.0 * s * u / (x * d * d);
    let lower = -0.5 * (-0.5 * z.ln_1p()).exp_m1();
    (1.0 - lower, lower)
}

/// `f_x(s)` of the Brownian closed form.
pub fn f_brownian(x: f64, s: f64) -> f64 {
    f_brownian_pair(x, s, 1.0 - s).0
}

/// Numeric flow `f_x(s) = I^{-1}(x^α I(s))` of a binary conservative measure.
///
/// Builds a fresh table; reuse a [`GrowingFamily::binary_numeric`] for
/// repeated evaluation.
pub fn binary_flow(measure: &SplittingMeasure, alpha: f64, x: f64, s: f64) -> Result<f64> {
    check_x(x)?;
    if x == 1.0 {
        return Ok(s);
    }
    let table = table_for(measure, alpha)?;
    Ok(table.flow(x, s, 1.0 - s)?.0)
}

fn table_for(measure: &SplittingMeasure, alpha: f64) -> Result<FlowTable> {
    match &measure.kind {
        MeasureKind::Binary(b) => FlowTable::new(b, alpha),
        _ => Err(Error::Validation(format!("{} is not a binary conservative measure", measure.id))),
    }
}

/// Default tolerances for generator flows.
pub fn ode_options() -> OdeOptions {
    OdeOptions { abs_tol: 1e-11, rel_tol: 1e-11, initial_step: 1e-3, max_steps: 200_000 }
}

/// Solves `∂_x G_x(y) = -(1/x) V(G_x(y))` from `x = 1`, in log-time.
pub fn ode_flow(generator: &Generator, x: f64, seq: &DecorationSequence) -> Result<DecorationSequence> {
    ode_flow_with(generator, x, seq, ode_options())
}

/// [`ode_flow`] with explicit solver settings.
pub fn ode_flow_with(generator: &Generator, x: f64, seq: &DecorationSequence, opts: OdeOptions) -> Result<DecorationSequence> {
    check_x(x)?;
    if x == 1.0 {
        return Ok(seq.clone());
    }
    let y0 = seq.to_vec();
    if !generator.contains(&y0) {
        return Err(Error::Domain(format!("{:?} is outside the domain of generator {}", y0, generator.name())));
    }
    let out = dopri5(
        |_, y, dy| {
            generator.eval_into(y, dy);
            for v in dy.iter_mut() {
                *v = -*v;
            }
        },
        |y| generator.contains(y),
        &y0,
        0.0,
        x.ln(),
        opts,
    )?;
    DecorationSequence::exact(out[0], out[1..].to_vec())
}

fn check_x(x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("x must be positive and finite, got {x}")));
    }
    Ok(())
}

/// Kind tag of a growing family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    MagicMass,
    MagicHeight,
    BrownianClosedForm,
    BinaryNumeric,
    GeneratorOde,
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyKind::MagicMass => "magic-mass",
            FamilyKind::MagicHeight => "magic-height",
            FamilyKind::BrownianClosedForm => "brownian-closed-form",
            FamilyKind::BinaryNumeric => "binary-conservative-numeric",
            FamilyKind::GeneratorOde => "generator-ode",
        })
    }
}

/// Keys accepted by [`GrowingFamily::from_key`].
pub const FAMILY_KEYS: &[&str] = &["magic-mass", "magic-height", "brownian", "binary-flow", "stable-ll"];

/// A growing family. Families are immutable and cheap to clone.
#[derive(Debug, Clone)]
pub enum GrowingFamily {
    /// [`g_mass`].
    MagicMass,
    /// [`g_height`].
    MagicHeight,
    /// [`f_brownian_pair`] on binary sequences.
    BrownianClosedForm,
    /// [`FlowTable::flow`] on binary sequences.
    BinaryNumeric(Arc<FlowTable>),
    /// [`ode_flow`] of a generator.
    GeneratorOde { generator: Generator, opts: OdeOptions },
}

impl GrowingFamily {
    /// Numeric flow of a binary conservative measure at exponent `alpha`.
    pub fn binary_numeric(measure: &SplittingMeasure, alpha: f64) -> Result<Self> {
        Ok(GrowingFamily::BinaryNumeric(Arc::new(table_for(measure, alpha)?)))
    }

    /// Flow of a generator with the default solver settings.
    pub fn generator_ode(generator: Generator) -> Self {
        GrowingFamily::GeneratorOde { generator, opts: ode_options() }
    }

    /// Family from a short key; `binary-flow` needs a binary measure and α.
    pub fn from_key(key: &str, measure: Option<&SplittingMeasure>, alpha: Option<f64>) -> Result<Self> {
        match key {
            "magic-mass" => Ok(GrowingFamily::MagicMass),
            "magic-height" => Ok(GrowingFamily::MagicHeight),
            "brownian" | "brownian-closed-form" => Ok(GrowingFamily::BrownianClosedForm),
            "stable-ll" => Ok(GrowingFamily::generator_ode(Generator::stable_ll())),
            "binary-flow" | "ll-flow" | "binary-conservative-numeric" => {
                let m = measure.ok_or_else(|| Error::Config("family binary-flow needs a measure".into()))?;
                let a = alpha.ok_or_else(|| Error::Config("family binary-flow needs alpha".into()))?;
                Self::binary_numeric(m, a).map_err(|e| Error::Config(e.to_string()))
            }
            other => Err(Error::Config(format!("unknown family '{other}' (known: {})", FAMILY_KEYS.join(", ")))),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        match self {
            GrowingFamily::MagicMass => FamilyKind::MagicMass,
            GrowingFamily::MagicHeight => FamilyKind::MagicHeight,
            GrowingFamily::BrownianClosedForm => FamilyKind::BrownianClosedForm,
            GrowingFamily::BinaryNumeric(_) => FamilyKind::BinaryNumeric,
            GrowingFamily::GeneratorOde { .. } => FamilyKind::GeneratorOde,
        }
    }

    /// Whether the family is given in closed form (tight semigroup tolerance).
    pub fn closed_form(&self) -> bool {
        matches!(self, GrowingFamily::MagicMass | GrowingFamily::MagicHeight | GrowingFamily::BrownianClosedForm)
    }

    /// Domain predicate; evaluation outside it is an error.
    pub fn contains(&self, seq: &DecorationSequence) -> bool {
        match self {
            GrowingFamily::MagicMass => seq.followed() < 1.0 || (seq.followed() == 1.0 && seq.offspring().is_empty()),
            GrowingFamily::MagicHeight => seq.followed() == 1.0 && seq.first_offspring() < 1.0,
            GrowingFamily::BrownianClosedForm => binary_parts(seq).is_ok(),
            GrowingFamily::BinaryNumeric(t) => binary_parts(seq).is_ok_and(|(s, _)| s >= t.lo()),
            GrowingFamily::GeneratorOde { generator, .. } => generator.contains(&seq.to_vec()),
        }
    }

    /// `G_x(seq)`; exactly `seq` at `x = 1`.
    pub fn evaluate(&self, x: f64, seq: &DecorationSequence) -> Result<DecorationSequence> {
        check_x(x)?;
        if x == 1.0 {
            if !self.contains(seq) {
                return Err(Error::Domain(format!("{seq:?} outside the domain of the {} family", self.kind())));
            }
            return Ok(seq.clone());
        }
        match self {
            GrowingFamily::MagicMass => g_mass(x, seq),
            GrowingFamily::MagicHeight => g_height(x, seq),
            GrowingFamily::BrownianClosedForm => {
                let (s, u) = binary_parts(seq)?;
                let (f, g) = f_brownian_pair(x, s, u);
                DecorationSequence::binary(f, g)
            }
            GrowingFamily::BinaryNumeric(t) => {
                let (s, u) = binary_parts(seq)?;
                if s < t.lo() {
                    return Err(Error::Domain(format!("s = {s} below the support of the flow")));
                }
                let (f, g) = t.flow(x, s, u)?;
                DecorationSequence::binary(f, g)
            }
            GrowingFamily::GeneratorOde { generator, opts } => ode_flow_with(generator, x, seq, *opts),
        }
    }
}

/// `(s, u)` of a binary conservative sequence; a missing offspring means it
/// fell below a cutoff and is recomputed as `1 - s`.
fn binary_parts(seq: &DecorationSequence) -> Result<(f64, f64)> {
    let s = seq.followed();
    let off = seq.offspring();
    if off.len() > 1 || !(s > 0.0 && s <= 1.0) {
        return Err(Error::Domain(format!("binary family needs (s; [u]) with s in (0, 1], got {seq:?}")));
    }
    let u = off.first().copied().unwrap_or(1.0 - s);
    if (s + u - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("binary family needs a conservative pair, got s + u = {}", s + u)));
    }
    Ok((s, u))
}

/// `G_{child/parent}` applied to a relative split, as used when a lower
/// path copies a jump of a higher path.
pub fn jump_transform(
    family: &GrowingFamily,
    parent_pre: f64,
    parent_seq: &DecorationSequence,
    child_pre: f64,
) -> Result<DecorationSequence> {
    if !(parent_pre > 0.0) || !(child_pre > 0.0) {
        return Err(Error::Domain(format!("pre-jump values must be positive, got {parent_pre}, {child_pre}")));
    }
    if child_pre > parent_pre {
        return Err(Error::Ordering(format!("child value {child_pre} exceeds parent value {parent_pre}")));
    }
    if child_pre == parent_pre {
        return Ok(parent_seq.clone());
    }
    family.evaluate(child_pre / parent_pre, parent_seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::catalog::measure;

    fn seq(y0: f64, off: &[f64]) -> DecorationSequence {
        DecorationSequence::exact(y0, off.to_vec()).unwrap()
    }

    #[test]
    fn magic_values() {
        assert_eq!(magic(1.0, 0.37), 0.37);
        assert!((magic(0.5, 0.5) - 1.0 / 3.0).abs() < 1e-16);
        for x in [0.1, 2.0, 7.5] {
            assert_eq!(magic(x, 1.0), 1.0);
            assert_eq!(magic(x, 0.0), 0.0);
        }
    }

    #[test]
    fn g_mass_example() {
        let out = g_mass(0.5, &seq(0.5, &[0.5])).unwrap();
        assert!((out.followed() - 1.0 / 3.0).abs() < 1e-16);
        assert!((out.offspring()[0] - 2.0 / 3.0).abs() < 1e-16);
        assert!(g_mass(0.5, &seq(1.0, &[0.2])).is_err());
    }

    #[test]
    fn g_height_example() {
        let out = g_height(2.0, &seq(1.0, &[0.5, 0.25])).unwrap();
        assert_eq!(out.followed(), 1.0);
        assert!((out.offspring()[0] - 1.0 / 3.0).abs() < 1e-16);
        assert!((out.offspring()[1] - 1.0 / 6.0).abs() < 1e-16);
        assert!(matches!(g_height(2.0, &seq(0.9, &[0.1])), Err(Error::Domain(_))));
    }

    #[test]
    fn f_brownian_values() {
        assert_eq!(f_brownian(0.3, 0.5), 0.5);
        assert_eq!(f_brownian(1.0, 0.8), 0.8);
        let want = 0.5 * (1.0 + 1.0 / 7f64.sqrt());
        assert!((f_brownian(0.5, 0.75) - want).abs() < 1e-15);
        assert!((f_brownian(0.5, 0.25) - (1.0 - want)).abs() < 1e-15);
        assert_eq!(f_brownian(0.5, 1.0), 1.0);
    }

    #[test]
    fn binary_flow_matches_closed_form() {
        let m = measure("brownian-mass-ll").unwrap();
        let fam = GrowingFamily::binary_numeric(&m, 0.5).unwrap();
        for &x in &[0.01, 0.3, 0.5, 0.9, 1.7, 30.0] {
            for &s in &[0.5, 0.51, 0.75, 0.9, 0.999, 1.0 - 1e-9] {
                let a = fam.evaluate(x, &DecorationSequence::binary(s, 1.0 - s).unwrap()).unwrap();
                let b = f_brownian(x, s);
                assert!((a.followed() - b).abs() < 1e-12, "x={x} s={s}: {} vs {b}", a.followed());
            }
        }
    }

    #[test]
    fn binary_flow_residual_gamma_two() {
        let m = measure("gamma-binary:2").unwrap();
        let alpha = 0.5;
        let t = match &m.kind {
            MeasureKind::Binary(b) => FlowTable::new(b, alpha).unwrap(),
            _ => unreachable!(),
        };
        let r = binary_flow(&m, alpha, 0.5, 0.75).unwrap();
        let lhs = t.primitive(r, 1.0 - r).unwrap();
        let rhs = 0.5f64.powf(alpha) * t.primitive(0.75, 0.25).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * rhs);
        // Independent check of I(3/4) for λ = (s(1-s))^{-2}: closed form of the primitive.
        let prim = |s: f64| (2.0 * s - 1.0) / (s * (1.0 - s)) + 2.0 * (s / (1.0 - s)).ln();
        assert!((t.primitive(0.75, 0.25).unwrap() - prim(0.75)).abs() < 1e-12);
    }

    #[test]
    fn jump_transform_rules() {
        let p = seq(0.5, &[0.5]);
        let fam = GrowingFamily::MagicMass;
        assert_eq!(jump_transform(&fam, 1.0, &p, 1.0).unwrap(), p);
        let out = jump_transform(&fam, 1.0, &p, 0.5).unwrap();
        assert!((out.followed() - 1.0 / 3.0).abs() < 1e-16);
        assert!(matches!(jump_transform(&fam, 0.5, &p, 1.0), Err(Error::Ordering(_))));
    }

    #[test]
    fn stable_ll_ode_recovers_brownian() {
        let g = Generator::stable_ll();
        for &x in &[0.2, 0.5, 2.0] {
            for &s in &[0.55, 0.7, 0.95] {
                let out = ode_flow(&g, x, &DecorationSequence::binary(s, 1.0 - s).unwrap()).unwrap();
                assert!((out.followed() - f_brownian(x, s)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn unknown_family_key() {
        assert!(matches!(GrowingFamily::from_key("nope", None, None), Err(Error::Config(_))));
    }
}
