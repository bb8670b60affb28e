//! Transport-equation solver on the three-piece simplex.
//!
//! The domain is `𝔻 = {(x, y): 0 < 1 − x − y < y < x}`, the triangle with
//! vertices `(1/3, 1/3)`, `(1/2, 1/2)` and `(1, 0)`, identified with ordered
//! triples `(y₀, y₁, y₂) = (x, y, 1 − x − y)`. On it we solve
//! `div(f V) = −α f` for the ansatz `V = u · (1 − x, −y)`.
//!
//! The characteristics of the direction field `d = (1 − x, −y)` are the rays
//! into the vertex `(1, 0)`; along them `w = f u` obeys `dw/dσ = 2w − α f`
//! because `div d = −2`. Starting from `w = 0` on the inflow edge `y = x`
//! gives zero flux through it, and the two other edges are rays themselves.
//!
//! Any compactly supported bump `φ` gives a second solution `W` with
//! `f W = f V + ∇⊥φ`, since rotated gradients are divergence-free.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::ode::{dopri5, OdeOptions};
use crate::svg::{color, Canvas};

/// Exponent parameter of the density `f`: `f ∝ Σ (1 − sᵢ)^{-1} / (s₀s₁s₂)^{1−a}`.
pub const DENSITY_ALPHA: f64 = 0.25;
/// Default lattice resolution.
pub const DEFAULT_N: usize = 200;
/// Default distance of grid nodes to the boundary lines.
pub const DEFAULT_MARGIN: f64 = 1e-3;
/// Largest admissible fraction of flagged nodes.
pub const MAX_FLAGGED_FRACTION: f64 = 0.01;

const VERTICES: [(f64, f64); 3] = [(1.0 / 3.0, 1.0 / 3.0), (0.5, 0.5), (1.0, 0.0)];

/// Density on the simplex with exponent parameter `a`.
pub fn density(x: f64, y: f64, a: f64) -> f64 {
    let z = 1.0 - x - y;
    (1.0 / (1.0 - x) + 1.0 / (1.0 - y) + 1.0 / (1.0 - z)) / (x * y * z).powf(1.0 - a)
}

/// Smallest of the three gaps `1 − x − y`, `y − (1 − x − y)` and `x − y`.
pub fn boundary_gap(x: f64, y: f64) -> f64 {
    let z = 1.0 - x - y;
    z.min(y - z).min(x - y)
}

/// Euclidean distance from `(x, y)` to the boundary of the triangle, for
/// points inside it.
pub fn boundary_distance(x: f64, y: f64) -> f64 {
    let z = 1.0 - x - y;
    (z * std::f64::consts::FRAC_1_SQRT_2).min((y - z) / 5f64.sqrt()).min((x - y) * std::f64::consts::FRAC_1_SQRT_2)
}

/// Barycentric-regular triangular lattice restricted to nodes at least
/// `margin` away (in each gap) from the boundary lines.
#[derive(Debug, Clone)]
pub struct SimplexGrid {
    n: usize,
    margin: f64,
    density_alpha: f64,
    nodes: Vec<(f64, f64)>,
    lattice: Vec<(usize, usize)>,
    index: Vec<Option<usize>>,
}

impl SimplexGrid {
    /// Lattice `A + (i/n)(B − A) + (j/n)(C − A)`, `i + j ≤ n`, with vertices
    /// `A = (1/3, 1/3)`, `B = (1/2, 1/2)`, `C = (1, 0)`.
    pub fn new(n: usize, margin: f64) -> Result<SimplexGrid> {
        Self::with_density(n, margin, DENSITY_ALPHA)
    }

    pub fn with_density(n: usize, margin: f64, density_alpha: f64) -> Result<SimplexGrid> {
        if n < 4 {
            return Err(Error::Validation(format!("grid resolution must be at least 4, got {n}")));
        }
        if !(margin > 0.0 && margin < 0.05) {
            return Err(Error::Validation(format!("boundary margin must lie in (0, 0.05), got {margin}")));
        }
        if !(density_alpha > 0.0 && density_alpha < 1.0) {
            return Err(Error::Validation(format!("density exponent must lie in (0, 1), got {density_alpha}")));
        }
        let mut nodes = Vec::new();
        let mut lattice = Vec::new();
        let mut index = vec![None; (n + 1) * (n + 1)];
        for i in 0..=n {
            for j in 0..=(n - i) {
                let p = lattice_point(n, i as f64, j as f64);
                if boundary_gap(p.0, p.1) >= margin {
                    index[i * (n + 1) + j] = Some(nodes.len());
                    nodes.push(p);
                    lattice.push((i, j));
                }
            }
        }
        let grid = SimplexGrid { n, margin, density_alpha, nodes, lattice, index };
        if grid.nodes.iter().any(|&(x, y)| !(density(x, y, density_alpha) > 0.0)) {
            return Err(Error::Consistency("density is not positive on a grid node".into()));
        }
        Ok(grid)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn density_alpha(&self) -> f64 {
        self.density_alpha
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    pub fn density(&self, x: f64, y: f64) -> f64 {
        density(x, y, self.density_alpha)
    }

    /// Node index of lattice coordinates `(i, j)`, when the node is kept.
    pub fn node_at(&self, i: usize, j: usize) -> Option<usize> {
        if i + j > self.n {
            return None;
        }
        self.index[i * (self.n + 1) + j]
    }

    /// Nodes whose four lattice neighbours are also kept.
    pub fn interior(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| {
                let (i, j) = self.lattice[k];
                i > 0
                    && j > 0
                    && self.node_at(i + 1, j).is_some()
                    && self.node_at(i - 1, j).is_some()
                    && self.node_at(i, j + 1).is_some()
                    && self.node_at(i, j - 1).is_some()
            })
            .collect()
    }

    /// Fractional lattice coordinates of a point.
    fn lattice_coords(&self, x: f64, y: f64) -> (f64, f64) {
        let (a, b, c) = (VERTICES[0], VERTICES[1], VERTICES[2]);
        let (e1, e2) = ((b.0 - a.0, b.1 - a.1), (c.0 - a.0, c.1 - a.1));
        let det = e1.0 * e2.1 - e1.1 * e2.0;
        let (dx, dy) = (x - a.0, y - a.1);
        let s = (dx * e2.1 - dy * e2.0) / det;
        let t = (e1.0 * dy - e1.1 * dx) / det;
        (s * self.n as f64, t * self.n as f64)
    }
}

fn lattice_point(n: usize, i: f64, j: f64) -> (f64, f64) {
    let (a, b, c) = (VERTICES[0], VERTICES[1], VERTICES[2]);
    let (s, t) = (i / n as f64, j / n as f64);
    (a.0 + s * (b.0 - a.0) + t * (c.0 - a.0), a.1 + s * (b.1 - a.1) + t * (c.1 - a.1))
}

/// Pointwise solution of the transport equation by integration along the
/// characteristic through each point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicSolver {
    pub alpha: f64,
    pub density_alpha: f64,
    /// Offset of the inflow line `x − y = inflow` from the edge `y = x`.
    pub inflow: f64,
}

impl CharacteristicSolver {
    pub fn new(alpha: f64, density_alpha: f64, inflow: f64) -> Result<CharacteristicSolver> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Validation(format!("alpha must be positive, got {alpha}")));
        }
        if !(inflow > 0.0 && inflow < 1.0 / 6.0) {
            return Err(Error::Validation(format!("inflow offset must lie in (0, 1/6), got {inflow}")));
        }
        Ok(CharacteristicSolver { alpha, density_alpha, inflow })
    }

    fn options() -> OdeOptions {
        OdeOptions { abs_tol: 1e-14, rel_tol: 1e-12, initial_step: 1e-3, max_steps: 100_000 }
    }

    /// `w = f u` for `α = 1`, integrated from the inflow line along the ray
    /// through `(x, y)`.
    pub fn unit_flux(&self, x: f64, y: f64) -> Result<f64> {
        if !(boundary_gap(x, y) > 0.0) {
            return Err(Error::Domain(format!("({x}, {y}) is outside the simplex domain")));
        }
        // Ray 1 − x = c y; its inflow point satisfies x_s − y_s = inflow.
        let c = (1.0 - x) / y;
        let ys = (1.0 - self.inflow) / (1.0 + c);
        let xs = 1.0 - c * ys;
        let tau = (ys / y).ln();
        let a = self.density_alpha;
        let rhs = |s: f64, w: &[f64], dw: &mut [f64]| {
            let e = (-s).exp();
            dw[0] = 2.0 * w[0] - density(1.0 - (1.0 - xs) * e, ys * e, a);
        };
        let w = dopri5(rhs, |w: &[f64]| w[0].is_finite(), &[0.0], 0.0, tau, Self::options())?;
        if !w[0].is_finite() {
            return Err(Error::Numerical(format!("characteristic through ({x}, {y}) produced a non-finite value")));
        }
        Ok(w[0])
    }

    /// Scalar factor `u` of the ansatz.
    pub fn u(&self, x: f64, y: f64) -> Result<f64> {
        Ok(self.alpha * self.unit_flux(x, y)? / density(x, y, self.density_alpha))
    }

    /// `V(x, y) = u · (1 − x, −y)`.
    pub fn field(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let u = self.u(x, y)?;
        Ok((u * (1.0 - x), -u * y))
    }
}

/// The ansatz direction `(1 − x, −y)` before scaling by `u`.
pub fn ansatz_direction(x: f64, y: f64) -> (f64, f64) {
    (1.0 - x, -y)
}

/// Smooth radial bump `φ(r) = h exp(1 − 1/(1 − (r/R)²))` for `r < R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: (f64, f64),
    pub radius: f64,
    pub height: f64,
}

/// Default bump used by the non-uniqueness certificate.
pub const DEFAULT_BUMP: Bump = Bump { center: (0.6, 0.28), radius: 0.05, height: 0.04 };

impl Bump {
    /// Parses `cx,cy,R,h`.
    pub fn parse(text: &str) -> Result<Bump> {
        let v: Vec<f64> = text
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("bump '{text}': {e}")))?;
        if v.len() != 4 {
            return Err(Error::Config(format!("bump '{text}' needs four values cx,cy,R,h")));
        }
        Ok(Bump { center: (v[0], v[1]), radius: v[2], height: v[3] })
    }

    pub fn with_height(self, height: f64) -> Bump {
        Bump { height, ..self }
    }

    pub fn phi(&self, x: f64, y: f64) -> f64 {
        let q = ((x - self.center.0).powi(2) + (y - self.center.1).powi(2)) / (self.radius * self.radius);
        if q >= 1.0 {
            0.0
        } else {
            self.height * (1.0 - 1.0 / (1.0 - q)).exp()
        }
    }

    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let r2 = self.radius * self.radius;
        let q = (dx * dx + dy * dy) / r2;
        if q >= 1.0 {
            return (0.0, 0.0);
        }
        let dphi_dq = -self.phi(x, y) / ((1.0 - q) * (1.0 - q));
        (dphi_dq * 2.0 * dx / r2, dphi_dq * 2.0 * dy / r2)
    }

    /// `∇⊥φ = (−∂_y φ, ∂_x φ)`.
    pub fn rotated_gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let (gx, gy) = self.gradient(x, y);
        (-gy, gx)
    }

    /// Checks that the closed support stays `margin` away from the boundary.
    pub fn validate(&self, margin: f64) -> Result<()> {
        if !(self.radius > 0.0) || !self.height.is_finite() {
            return Err(Error::Validation(format!("bump radius must be positive and height finite, got {self:?}")));
        }
        let (cx, cy) = self.center;
        if !(boundary_gap(cx, cy) > 0.0) || boundary_distance(cx, cy) < self.radius + margin {
            return Err(Error::Validation(format!(
                "bump support around ({cx}, {cy}) with radius {} touches the boundary",
                self.radius
            )));
        }
        Ok(())
    }
}

/// How a field is evaluated away from the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSource {
    Characteristics(CharacteristicSolver),
    Bumped { solver: CharacteristicSolver, bump: Bump },
    /// Piecewise-linear interpolation of the node values.
    Nodes,
}

/// Node values of a planar vector field.
#[derive(Debug, Clone)]
pub struct VectorFieldGrid {
    pub values: Vec<(f64, f64)>,
    /// Nodes whose characteristic failed; their values are set to zero and
    /// they are skipped by the checks.
    pub flagged: Vec<usize>,
    pub source: FieldSource,
}

impl VectorFieldGrid {
    /// Exact evaluation at an arbitrary point of the domain.
    pub fn eval(&self, grid: &SimplexGrid, x: f64, y: f64) -> Result<(f64, f64)> {
        match &self.source {
            FieldSource::Characteristics(s) => s.field(x, y),
            FieldSource::Bumped { solver, bump } => {
                let (vx, vy) = solver.field(x, y)?;
                let (rx, ry) = bump.rotated_gradient(x, y);
                let f = grid.density(x, y);
                Ok((vx + rx / f, vy + ry / f))
            }
            FieldSource::Nodes => self
                .interpolate(grid, x, y)
                .ok_or_else(|| Error::Domain(format!("({x}, {y}) is not covered by the grid"))),
        }
    }

    /// Piecewise-linear interpolation on the lattice triangles.
    pub fn interpolate(&self, grid: &SimplexGrid, x: f64, y: f64) -> Option<(f64, f64)> {
        let snap = |t: f64| if (t - t.round()).abs() < 1e-9 { t.round() } else { t };
        let (a, b) = grid.lattice_coords(x, y);
        let (a, b) = (snap(a), snap(b));
        if a < 0.0 || b < 0.0 {
            return None;
        }
        let (i, j) = (a.floor() as usize, b.floor() as usize);
        let (fa, fb) = (a - i as f64, b - j as f64);
        let tri: [((usize, usize), f64); 3] = if fa + fb <= 1.0 {
            [((i, j), 1.0 - fa - fb), ((i + 1, j), fa), ((i, j + 1), fb)]
        } else {
            [((i + 1, j + 1), fa + fb - 1.0), ((i + 1, j), 1.0 - fb), ((i, j + 1), 1.0 - fa)]
        };
        let mut out = (0.0, 0.0);
        for ((ii, jj), w) in tri {
            if w == 0.0 {
                continue;
            }
            let k = grid.node_at(ii, jj)?;
            out.0 += w * self.values[k].0;
            out.1 += w * self.values[k].1;
        }
        Some(out)
    }

    /// Largest node-wise Euclidean distance to another field on the same grid.
    pub fn sup_distance(&self, other: &VectorFieldGrid) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a.0 - b.0).hypot(a.1 - b.1))
            .fold(0.0, f64::max)
    }
}

/// Solves for `V = u (1 − x, −y)` on every node, with the inflow line offset
/// by the grid margin.
pub fn solve_characteristics(grid: &SimplexGrid, alpha: f64) -> Result<VectorFieldGrid> {
    let solver = CharacteristicSolver::new(alpha, grid.density_alpha(), grid.margin())?;
    let solved: Vec<Option<(f64, f64)>> = grid.nodes().par_iter().map(|&(x, y)| solver.field(x, y).ok()).collect();
    let flagged: Vec<usize> = solved.iter().enumerate().filter(|(_, v)| v.is_none()).map(|(k, _)| k).collect();
    if flagged.len() as f64 > MAX_FLAGGED_FRACTION * grid.len() as f64 {
        return Err(Error::Numerical(format!(
            "{} of {} characteristics failed to reach their node",
            flagged.len(),
            grid.len()
        )));
    }
    Ok(VectorFieldGrid {
        values: solved.into_iter().map(|v| v.unwrap_or((0.0, 0.0))).collect(),
        flagged,
        source: FieldSource::Characteristics(solver),
    })
}

/// `W = V + ∇⊥φ / f` on every node.
pub fn bump_perturbation(base: &VectorFieldGrid, grid: &SimplexGrid, bump: Bump) -> Result<VectorFieldGrid> {
    bump.validate(grid.margin())?;
    let solver = match &base.source {
        FieldSource::Characteristics(s) => *s,
        _ => return Err(Error::Validation("bumps are applied to a characteristic solution".into())),
    };
    let values = grid
        .nodes()
        .iter()
        .zip(&base.values)
        .map(|(&(x, y), &(vx, vy))| {
            let (rx, ry) = bump.rotated_gradient(x, y);
            let f = grid.density(x, y);
            (vx + rx / f, vy + ry / f)
        })
        .collect();
    Ok(VectorFieldGrid { values, flagged: base.flagged.clone(), source: FieldSource::Bumped { solver, bump } })
}

/// Relative residual `|div(f V) + α f| / f` over the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub nodes_checked: usize,
    pub max_residual: f64,
    pub worst_node: Option<(f64, f64)>,
}

/// Evaluates the residual with five-point centered differences of `f V` at
/// each interior node; the difference step is `10⁻³` times the local
/// boundary gap, so the stencil stays inside the domain.
pub fn divergence_residual(grid: &SimplexGrid, field: &VectorFieldGrid, alpha: f64) -> Result<ResidualReport> {
    let flux = |x: f64, y: f64| -> Result<(f64, f64)> {
        let (vx, vy) = field.eval(grid, x, y)?;
        let f = grid.density(x, y);
        Ok((f * vx, f * vy))
    };
    let interior = grid.interior();
    let rows: Vec<Result<(f64, usize)>> = interior
        .par_iter()
        .filter(|k| !field.flagged.contains(k))
        .map(|&k| {
            let (x, y) = grid.nodes()[k];
            let h = 1e-3 * boundary_gap(x, y);
            let dx = (8.0 * (flux(x + h, y)?.0 - flux(x - h, y)?.0) - (flux(x + 2.0 * h, y)?.0 - flux(x - 2.0 * h, y)?.0))
                / (12.0 * h);
            let dy = (8.0 * (flux(x, y + h)?.1 - flux(x, y - h)?.1) - (flux(x, y + 2.0 * h)?.1 - flux(x, y - 2.0 * h)?.1))
                / (12.0 * h);
            let f = grid.density(x, y);
            Ok(((dx + dy + alpha * f).abs() / f, k))
        })
        .collect();
    let mut report = ResidualReport { nodes_checked: 0, max_residual: 0.0, worst_node: None };
    for row in rows {
        let (r, k) = row?;
        report.nodes_checked += 1;
        if r > report.max_residual || r.is_nan() {
            report.max_residual = r;
            report.worst_node = Some(grid.nodes()[k]);
        }
    }
    Ok(report)
}

/// Outcome of the coordinate inequalities `V ≤ y` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    /// Smallest of `x − V_x`, `y − V_y` and `(1 − x − y) + V_x + V_y`.
    pub worst_margin: f64,
    pub worst_node: Option<(f64, f64)>,
    /// Indices of nodes with a negative margin.
    pub violations: Vec<usize>,
    pub pass: bool,
}

/// Coordinate margins of a field at one point.
pub fn inequality_margins(x: f64, y: f64, v: (f64, f64)) -> [f64; 3] {
    [x - v.0, y - v.1, (1.0 - x - y) + v.0 + v.1]
}

pub fn inequality_grid(field: &VectorFieldGrid, grid: &SimplexGrid) -> InequalityReport {
    let mut report = InequalityReport { worst_margin: f64::INFINITY, worst_node: None, violations: Vec::new(), pass: true };
    for (k, (&(x, y), &v)) in grid.nodes().iter().zip(&field.values).enumerate() {
        if field.flagged.contains(&k) {
            continue;
        }
        let m = inequality_margins(x, y, v).into_iter().fold(f64::INFINITY, f64::min);
        if m < report.worst_margin {
            report.worst_margin = m;
            report.worst_node = Some((x, y));
        }
        if m < 0.0 {
            report.violations.push(k);
        }
    }
    report.pass = report.violations.is_empty();
    report
}

/// Evidence that two distinct admissible generators exist.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub residual_v: ResidualReport,
    pub residual_w: ResidualReport,
    pub inequalities_v: InequalityReport,
    pub inequalities_w: InequalityReport,
    pub sup_difference: f64,
}

impl Certificate {
    /// Both residuals below `tol`, both fields admissible and `sup|W − V|`
    /// above `min_gap`.
    pub fn holds(&self, tol: f64, min_gap: f64) -> bool {
        self.residual_v.max_residual <= tol
            && self.residual_w.max_residual <= tol
            && self.inequalities_v.pass
            && self.inequalities_w.pass
            && self.sup_difference > min_gap
    }
}

/// Solves, perturbs and checks in one pass.
pub fn certificate(grid: &SimplexGrid, alpha: f64, bump: Bump) -> Result<(VectorFieldGrid, VectorFieldGrid, Certificate)> {
    let v = solve_characteristics(grid, alpha)?;
    let w = bump_perturbation(&v, grid, bump)?;
    let cert = Certificate {
        residual_v: divergence_residual(grid, &v, alpha)?,
        residual_w: divergence_residual(grid, &w, alpha)?,
        inequalities_v: inequality_grid(&v, grid),
        inequalities_w: inequality_grid(&w, grid),
        sup_difference: v.sup_distance(&w),
    };
    Ok((v, w, cert))
}

/// Largest bump height keeping `W` admissible, from the linearity of `W` in
/// the height.
pub fn admissible_height(base: &VectorFieldGrid, grid: &SimplexGrid, bump: Bump) -> f64 {
    let unit = bump.with_height(1.0);
    let mut best = f64::INFINITY;
    for (&(x, y), &v) in grid.nodes().iter().zip(&base.values) {
        let (rx, ry) = unit.rotated_gradient(x, y);
        if rx == 0.0 && ry == 0.0 {
            continue;
        }
        let f = grid.density(x, y);
        let (bx, by) = (rx / f, ry / f);
        let m = inequality_margins(x, y, v);
        for (margin, slope) in m.into_iter().zip([bx, by, -bx - by]) {
            if slope > 0.0 {
                best = best.min(margin / slope);
            }
        }
    }
    best
}

/// Quiver plot of one or more fields, one arrow every `stride` lattice steps.
pub fn quiver_svg(grid: &SimplexGrid, fields: &[(&str, &VectorFieldGrid)], stride: usize) -> String {
    let mut canvas = Canvas::new(640.0, 520.0, (0.3, 1.0), (0.0, 0.55));
    canvas.axes("y0 = x", "y1 = y");
    let outline: Vec<(f64, f64)> = VERTICES.iter().chain(VERTICES.iter().take(1)).copied().collect();
    canvas.polyline(&outline, "#444", 1.0);
    let stride = stride.max(1);
    let picked: Vec<usize> = (0..grid.len())
        .filter(|&k| {
            let (i, j) = grid.lattice[k];
            i % stride == 0 && j % stride == 0
        })
        .collect();
    let longest = fields
        .iter()
        .flat_map(|(_, f)| picked.iter().map(move |&k| f.values[k].0.hypot(f.values[k].1)))
        .fold(0.0, f64::max);
    let scale = if longest > 0.0 { 0.9 * stride as f64 * 0.5 / grid.n() as f64 / longest } else { 0.0 };
    canvas.title("transport-equation solutions on the simplex");
    let mut legend_y = 0.52;
    for (s, (name, field)) in fields.iter().enumerate() {
        for &k in &picked {
            let (vx, vy) = field.values[k];
            canvas.arrow(grid.nodes()[k], (scale * vx, scale * vy), color(s));
        }
        canvas.segment((0.85, legend_y), (0.88, legend_y), color(s), 2.0);
        canvas.label((0.89, legend_y), name, color(s));
        legend_y -= 0.03;
    }
    canvas.finish()
}
