//! Subcommand implementations.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use ssmt::divfield::{certificate, quiver_svg, Bump, SimplexGrid, DEFAULT_BUMP, DEFAULT_MARGIN};
use ssmt::generator::{alpha_critical, alpha_curve};
use ssmt::growing::{flow_check, GrowingFamily};
use ssmt::measures::catalog::{self, custom_from_text, EXAMPLE_KEYS};
use ssmt::measures::{BinaryWeight, CharacteristicQuadruplet, Cutoffs, MeasureKind, SplittingMeasure};
use ssmt::numerics::rng::{derive_seed, stream};
use ssmt::simulate::{coupled_svg, monotonicity_audit, Backend, SimOptions, Simulator, AUDIT_SLACK};
use ssmt::tree::{
    conservation_violations, export_text, hypograph_distance_nested, hypograph_svg, tree_stats, DecoratedTree,
    NestedFamily, TreeBuilder, TreeOptions,
};

use crate::{
    AlphaCArgs, CatalogArgs, Command, DivfieldArgs, Failure, FlowCheckArgs, GrowArgs, ModelArgs, NestedArgs,
    SimulateArgs, TreeArgs,
};

type Outcome = Result<(), Failure>;

pub fn run(command: &Command) -> Outcome {
    match command {
        Command::AlphaC(a) => alpha_c(a),
        Command::FlowCheck(a) => flow(a),
        Command::Simulate(a) => simulate(a),
        Command::Tree(a) => tree(a),
        Command::Nested(a) => nested(a),
        Command::Grow(a) => grow(a),
        Command::Divfield(a) => divfield(a),
        Command::Catalog(a) => list_catalog(a),
    }
}

fn read_custom(key: &str) -> Result<Option<CharacteristicQuadruplet>, Failure> {
    match key.strip_prefix("file:") {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read '{path}': {e}")))?;
            Ok(Some(custom_from_text(&text)?))
        }
        None => Ok(None),
    }
}

fn load_quad(key: &str, alpha: Option<f64>) -> Result<CharacteristicQuadruplet, Failure> {
    let q = match read_custom(key)? {
        Some(q) => q,
        None => catalog::quadruplet(key)?,
    };
    Ok(match alpha {
        Some(a) => q.with_alpha(a)?,
        None => q,
    })
}

fn load_measure(key: &str) -> Result<SplittingMeasure, Failure> {
    match read_custom(key)? {
        Some(q) => Ok(q.measure),
        None => Ok(catalog::measure(key)?),
    }
}

/// Family used when `--family` is absent.
fn default_family(q: &CharacteristicQuadruplet) -> &'static str {
    match &q.measure.kind {
        MeasureKind::Binary(_) if q.measure.id == "brownian-mass-ll" => "brownian",
        MeasureKind::Binary(b) if b.weight == Some(BinaryWeight::SizeBiased) => "magic-mass",
        MeasureKind::Binary(_) => "binary-flow",
        MeasureKind::Height(_) => "magic-height",
        MeasureKind::Mass(m) if m.ordered => "stable-ll",
        MeasureKind::Mass(_) => "magic-mass",
    }
}

fn model(args: &ModelArgs) -> Result<(CharacteristicQuadruplet, GrowingFamily, SimOptions), Failure> {
    let q = load_quad(&args.quad, args.alpha)?;
    let key = args.family.clone().unwrap_or_else(|| default_family(&q).to_string());
    let family = GrowingFamily::from_key(&key, Some(&q.measure), Some(q.alpha))?;
    let cutoffs = Cutoffs::new(args.fragment_cutoff, 1.0)?;
    Ok((q, family, SimOptions { cutoffs, ..SimOptions::default() }))
}

fn parse_list(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Failure::Config(format!("'{t}' in '{text}': {e}"))))
        .collect()
}

/// `a,b,c` or `lo:hi:n` (inclusive, `n ≥ 2` points).
fn parse_curve(text: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 1 {
        return parse_list(text);
    }
    if parts.len() != 3 {
        return Err(Failure::Config(format!("curve '{text}' must be 'a,b,c' or 'lo:hi:n'")));
    }
    let bad = |e: String| Failure::Config(format!("curve '{text}': {e}"));
    let lo: f64 = parts[0].trim().parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
    let hi: f64 = parts[1].trim().parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
    let n: usize = parts[2].trim().parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
    if n < 2 || hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return Err(bad("needs lo < hi and n ≥ 2".into()));
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

fn csv_writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>, Failure> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn write_file(path: &Path, text: &str) -> Outcome {
    fs::write(path, text)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn alpha_c(args: &AlphaCArgs) -> Outcome {
    if let Some(curve) = &args.curve {
        let gammas = parse_curve(curve)?;
        if gammas.iter().any(|g| !(*g > 1.0 && *g < 3.0)) {
            return Err(Failure::Config("curve exponents must lie in (1, 3)".into()));
        }
        let mut w = csv_writer(args.out.as_deref())?;
        w.write_record(["gamma", "alpha_c", "sup_ratio", "argmax", "boundary"])?;
        for (g, r) in alpha_curve(&gammas) {
            w.write_record([g.to_string(), r.alpha_c.to_string(), r.sup_ratio.to_string(), r.argmax.to_string(), r.boundary.to_string()])?;
        }
        w.flush()?;
        return Ok(());
    }
    let m = load_measure(&args.measure)?;
    let r = alpha_critical(&m)?;
    println!("{:.6}", r.alpha_c);
    if let Some(d) = &r.diagnostic {
        log::warn!("{d}");
    }
    Ok(())
}

fn flow(args: &FlowCheckArgs) -> Outcome {
    let m = load_measure(&args.measure)?;
    let family = GrowingFamily::from_key(&args.family, Some(&m), Some(args.alpha))?;
    let report = flow_check(&family, &m, args.alpha, args.samples, &mut stream(args.seed))?;
    if let Some(path) = &args.out {
        let mut w = csv_writer(Some(path))?;
        w.write_record(["x", "z", "lhs", "rhs", "rel_error"])?;
        for (x, q) in &report.quasi {
            for row in &q.rows {
                w.write_record([x.to_string(), row.z.to_string(), row.lhs.to_string(), row.rhs.to_string(), row.rel_error.to_string()])?;
            }
        }
        w.flush()?;
    }
    println!("quasi-preservation max relative error {:.3e}", report.max_rel_error());
    println!(
        "monotone coupling: {} violations in {} comparisons (worst margin {:.3e})",
        report.monotone.violations, report.monotone.comparisons, report.monotone.worst_margin
    );
    if report.pass {
        println!("pass");
        Ok(())
    } else {
        Err(Failure::Check(format!("{} is not growing for {} at alpha = {}", args.family, args.measure, args.alpha)))
    }
}

fn simulate(args: &SimulateArgs) -> Outcome {
    let (q, family, base) = model(&args.model)?;
    let backend = match args.backend.as_str() {
        "pure-jump" => Backend::PureJump,
        "euler" => Backend::Euler,
        other => return Err(Failure::Config(format!("unknown backend '{other}' (pure-jump, euler)"))),
    };
    let opts = SimOptions { step: args.step, backend, ..base };
    let sim = Simulator::new(q, family, opts)?;
    let xs = parse_list(&args.xs)?;
    let flow = sim.coupled(&xs, args.model.seed)?;
    let mut summary = csv_writer(None)?;
    summary.write_record(["x", "absorption", "jumps", "truncated"])?;
    for p in &flow.paths {
        summary.write_record([p.x0.to_string(), p.absorption.to_string(), p.jumps.len().to_string(), p.truncated.to_string()])?;
    }
    summary.flush()?;
    if let Some(path) = &args.out {
        let mut w = csv_writer(Some(path))?;
        w.write_record(["x", "t", "value"])?;
        for p in &flow.paths {
            for (t, v) in p.times.iter().zip(&p.values) {
                w.write_record([p.x0.to_string(), t.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
    }
    if let Some(path) = &args.svg {
        write_file(path, &coupled_svg(&flow))?;
    }
    if args.audit {
        let report = monotonicity_audit(&flow, AUDIT_SLACK);
        println!("audit: {} pairs, {} checks, {} violations", report.pairs, report.checks, report.violations);
        if !report.passed() {
            return Err(Failure::Check(report.first_violation.unwrap_or_else(|| "coupling audit failed".into())));
        }
    }
    Ok(())
}

fn print_stats(rows: &[(f64, &DecoratedTree)]) -> Outcome {
    let mut w = csv_writer(None)?;
    w.write_record(["x", "total_length", "height", "branch_count", "max_decoration", "tip_count", "truncated"])?;
    for (x, t) in rows {
        let s = tree_stats(t);
        w.write_record([
            x.to_string(),
            s.total_length.to_string(),
            s.height.to_string(),
            s.branch_count.to_string(),
            s.max_decoration.to_string(),
            s.tip_count.to_string(),
            t.truncated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn tree(args: &TreeArgs) -> Outcome {
    let (q, family, base) = model(&args.model)?;
    let builder = TreeBuilder::new(q, family, base);
    let opts = TreeOptions::new(args.cutoff.unwrap_or(1e-3 * args.x), args.depth_cap);
    let t = builder.build_tree(args.x, &opts, args.model.seed)?;
    print_stats(&[(args.x, &t)])?;
    if let Some(path) = &args.out {
        write_file(path, &export_text(&t, args.samples))?;
    }
    if let Some(path) = &args.svg {
        let fam = NestedFamily { x_grid: vec![args.x], trees: vec![t], seed: args.model.seed, options: opts };
        write_file(path, &hypograph_svg(&fam))?;
    }
    Ok(())
}

fn nested(args: &NestedArgs) -> Outcome {
    let (q, family, base) = model(&args.model)?;
    let builder = TreeBuilder::new(q, family, base);
    let xs = parse_list(&args.xs)?;
    let top = xs.iter().copied().fold(0.0, f64::max);
    let opts = TreeOptions::new(args.cutoff.unwrap_or(1e-3 * top), args.depth_cap);
    let fam = builder.build_nested(&xs, &opts, args.model.seed)?;
    let rows: Vec<(f64, &DecoratedTree)> = fam.x_grid.iter().copied().zip(&fam.trees).collect();
    print_stats(&rows)?;
    let mut w = csv_writer(args.distances.as_deref())?;
    w.write_record(["x_lo", "x_hi", "distance"])?;
    for hi in 0..xs.len() {
        for lo in 0..hi {
            let d = hypograph_distance_nested(&fam, lo, hi, args.mesh)?;
            w.write_record([xs[lo].to_string(), xs[hi].to_string(), d.to_string()])?;
        }
    }
    w.flush()?;
    if let Some(path) = &args.svg {
        write_file(path, &hypograph_svg(&fam))?;
    }
    let inclusion = fam.inclusion_violations(0.0);
    let conservation: usize = fam.trees.iter().map(conservation_violations).sum();
    if inclusion + conservation > 0 {
        return Err(Failure::Check(format!("{inclusion} inclusion and {conservation} conservation violations")));
    }
    Ok(())
}

fn grow(args: &GrowArgs) -> Outcome {
    if !(args.from > 0.0 && args.to >= args.from) {
        return Err(Failure::Config(format!("need 0 < --from <= --to, got {} and {}", args.from, args.to)));
    }
    let (q, family, base) = model(&args.model)?;
    let builder = TreeBuilder::new(q, family, base);
    let cutoff = args.cutoff.unwrap_or(1e-3 * args.to.max(args.from));
    let opts = TreeOptions { reach: Some(args.to.max(args.from)), ..TreeOptions::new(cutoff, args.depth_cap) };
    let fam = builder.build_nested(&[args.from], &opts, args.model.seed)?;
    let fresh = args.fresh_seed.unwrap_or_else(|| derive_seed(args.model.seed, 1));
    let grown = builder.grow_step(&fam, 0, args.to, fresh)?;
    print_stats(&[(args.from, &fam.trees[0]), (args.to, &grown.tree)])?;
    if let Some(path) = &args.weights {
        let mut w = csv_writer(Some(path))?;
        w.write_record(["label", "weight"])?;
        for (label, weight) in &grown.weights {
            w.write_record([label.to_string(), weight.to_string()])?;
        }
        w.flush()?;
    }
    if let Some(path) = &args.out {
        write_file(path, &export_text(&grown.tree, 20))?;
    }
    Ok(())
}

fn divfield(args: &DivfieldArgs) -> Outcome {
    let grid = SimplexGrid::new(args.n, DEFAULT_MARGIN)?;
    let bump = match &args.bump {
        Some(b) => Bump::parse(b)?,
        None => DEFAULT_BUMP,
    };
    let (v, w, cert) = certificate(&grid, args.alpha, bump)?;
    println!("residual V {:.3e}, W {:.3e}", cert.residual_v.max_residual, cert.residual_w.max_residual);
    println!("inequality margin V {:.3e}, W {:.3e}", cert.inequalities_v.worst_margin, cert.inequalities_w.worst_margin);
    println!("sup |W - V| = {:.3e}", cert.sup_difference);
    if let Some(path) = &args.out {
        let mut out = csv_writer(Some(path))?;
        out.write_record(["x", "y", "v_x", "v_y", "w_x", "w_y"])?;
        for (i, (x, y)) in grid.nodes().iter().enumerate() {
            let (a, b) = (v.values[i], w.values[i]);
            out.write_record([x.to_string(), y.to_string(), a.0.to_string(), a.1.to_string(), b.0.to_string(), b.1.to_string()])?;
        }
        out.flush()?;
    }
    if let Some(path) = &args.svg {
        write_file(path, &quiver_svg(&grid, &[("V", &v), ("W", &w)], args.stride))?;
    }
    if cert.holds(args.tol, 1e-3) {
        println!("pass");
        Ok(())
    } else {
        Err(Failure::Check("non-uniqueness certificate does not hold".into()))
    }
}

fn list_catalog(args: &CatalogArgs) -> Outcome {
    let mut w = csv_writer(args.out.as_deref())?;
    w.write_record([
        "key",
        "kind",
        "conservative",
        "alpha",
        "alpha_c",
        "y1_moment_bound",
        "cumulant_support_bound",
        "gamma0",
        "cumulant_at_gamma0",
    ])?;
    for key in EXAMPLE_KEYS {
        let q = catalog::quadruplet(key)?;
        let kind = match &q.measure.kind {
            MeasureKind::Binary(_) => "binary",
            MeasureKind::Height(_) => "height",
            MeasureKind::Mass(_) => "mass",
        };
        let alpha_c = match &q.measure.kind {
            MeasureKind::Binary(_) if q.measure.locally_largest() => {
                alpha_critical(&q.measure).map(|r| r.alpha_c.to_string()).unwrap_or_default()
            }
            _ => String::new(),
        };
        let g0 = q.gamma0();
        w.write_record([
            key.to_string(),
            kind.to_string(),
            q.measure.conservative().to_string(),
            q.alpha.to_string(),
            alpha_c,
            q.measure.y1_moment_bound().to_string(),
            q.measure.cumulant_support_bound().to_string(),
            g0.to_string(),
            q.cumulant(g0).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_specs() {
        assert_eq!(parse_curve("1.5,2").unwrap(), vec![1.5, 2.0]);
        assert_eq!(parse_curve("1:2:3").unwrap(), vec![1.0, 1.5, 2.0]);
        assert!(parse_curve("2:1:3").is_err());
        assert!(parse_curve("1:2").is_err());
    }

    #[test]
    fn default_families_match_measure_shapes() {
        assert_eq!(default_family(&catalog::quadruplet("brownian-mass-ll").unwrap()), "brownian");
        assert_eq!(default_family(&catalog::quadruplet("brownian-mass-sb").unwrap()), "magic-mass");
        assert_eq!(default_family(&catalog::quadruplet("brownian-height-ll").unwrap()), "magic-height");
    }
}
