//! Discretized holonomic-measure LP: minimize `integral (L - p.v) dmu` over probability weights
//! on `x`-nodes times a velocity box, subject to one holonomy row per nodal basis function.
//!
//! The optimum is `-Hbar(p)` of the discrete problem. The holonomy rows use the torus stencils,
//! so the LP and the cell solver share one discrete calculus.

mod simplex;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cell::{solve_cell, SolverOptions};
use crate::error::{LabError, Result};
use crate::hamiltonian::{legendre, HamiltonianModel};
use crate::mather::{GraphMeasure, Measure, ProductMeasure, VelocityGrid};
use crate::torus::{pairwise_sum, TorusGrid};

pub use simplex::{solve_standard, solve_standard_from, LpStatus, SimplexSolution, StandardForm, FEASIBILITY_TOL};

/// Size guard on the number of LP variables.
pub const MAX_LP_VARIABLES: usize = 100_000;
/// Absolute width of the value band that defines the optimal face.
pub const FACE_BAND: f64 = 1e-9;
/// Safety factor applied to the recommended support radius.
pub const RADIUS_SAFETY: f64 = 1.5;

/// Velocity box request: `points` per axis (odd), and either an explicit radius or
/// `RADIUS_SAFETY` times the support radius for `|p| + grad_bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySpec {
    pub points: usize,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub grad_bound: f64,
}

impl VelocitySpec {
    pub fn fixed(radius: f64, points: usize) -> Self {
        VelocitySpec { points, radius: Some(radius), grad_bound: 0.0 }
    }

    pub fn resolve(&self, model: &HamiltonianModel, xgrid: &TorusGrid, p: &[f64]) -> Result<VelocityGrid> {
        let radius = match self.radius {
            Some(r) => r,
            None => {
                let pn = p.iter().map(|c| c * c).sum::<f64>().sqrt();
                RADIUS_SAFETY * crate::mather::support_radius(model, xgrid, pn, self.grad_bound)?
            }
        };
        VelocityGrid::new(radius, &vec![self.points; model.dim()])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HolonomicLP {
    pub xgrid: TorusGrid,
    pub vgrid: VelocityGrid,
    pub p: Vec<f64>,
    pub eps: f64,
    /// `L(x_i, v_j) - p.v_j`, x-major like [`ProductMeasure::weights`].
    pub cost: Vec<f64>,
    /// Rows `0..N_x` are holonomy rows, row `N_x` is the normalization row.
    pub columns: Vec<Vec<(usize, f64)>>,
}

impl HolonomicLP {
    pub fn rows(&self) -> usize {
        self.xgrid.len() + 1
    }

    pub fn variables(&self) -> usize {
        self.cost.len()
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.rows()];
        b[self.xgrid.len()] = 1.0;
        b
    }

    /// The holonomy rows sum to zero column by column, so the last one is implied by the others.
    /// Dropping it keeps the simplex basis away from an exactly singular direction.
    fn standard_form(&self) -> StandardForm {
        let dropped = self.xgrid.len() - 1;
        let columns = self
            .columns
            .iter()
            .map(|col| {
                col.iter()
                    .filter(|&&(r, _)| r != dropped)
                    .map(|&(r, a)| (if r > dropped { r - 1 } else { r }, a))
                    .collect()
            })
            .collect();
        let mut rhs = self.rhs();
        rhs.remove(dropped);
        StandardForm { rows: self.rows() - 1, columns, cost: self.cost.clone(), rhs }
    }

    /// For `eps > 0` the zero-velocity columns form a feasible basis: the diffusion stencil
    /// has only constants in its kernel, and the uniform weight `1/N` satisfies every row.
    fn crash_basis(&self) -> Option<Vec<usize>> {
        if self.eps <= 0.0 {
            return None;
        }
        let nv = self.vgrid.len();
        Some((0..self.xgrid.len()).map(|i| i * nv + (nv - 1) / 2).collect())
    }

    /// Multipliers for all rows, with zero on the row dropped by [`Self::standard_form`].
    fn full_dual(&self, reduced: &[f64]) -> Vec<f64> {
        let mut y = reduced.to_vec();
        y.insert(self.xgrid.len() - 1, 0.0);
        y
    }

    /// `max_k |(A mu - b)_k|` for weights in the LP's layout.
    pub fn feasibility_residual(&self, weights: &[f64]) -> f64 {
        let mut r = vec![0.0; self.rows()];
        for (col, &w) in self.columns.iter().zip(weights) {
            if w != 0.0 {
                for &(k, a) in col {
                    r[k] += a * w;
                }
            }
        }
        r[self.xgrid.len()] -= 1.0;
        r.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn objective(&self, weights: &[f64]) -> f64 {
        pairwise_sum(&self.cost.iter().zip(weights).map(|(c, w)| c * w).collect::<Vec<_>>())
    }

    /// Plain-text export: the objective, the constraint triples, then one sense/rhs line per row.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# holonomic LP rows {} cols {} eps {:?} p {:?}",
            self.rows(),
            self.variables(),
            self.eps,
            self.p
        )?;
        writeln!(out, "objective")?;
        for (j, c) in self.cost.iter().enumerate() {
            writeln!(out, "{j} {c:?}")?;
        }
        writeln!(out, "constraints")?;
        let mut triples: Vec<(usize, usize, f64)> = Vec::new();
        for (j, col) in self.columns.iter().enumerate() {
            triples.extend(col.iter().map(|&(r, a)| (r, j, a)));
        }
        triples.sort_by_key(|t| (t.0, t.1));
        for (r, j, a) in triples {
            writeln!(out, "{r} {j} {a:?}")?;
        }
        writeln!(out, "rhs")?;
        for (r, b) in self.rhs().iter().enumerate() {
            writeln!(out, "{r} = {b:?}")?;
        }
        Ok(())
    }
}

/// Assembles the LP. The velocity count per axis must be odd so that `v = 0` is a node.
pub fn build_lp(
    model: &HamiltonianModel,
    xgrid: &TorusGrid,
    vspec: &VelocitySpec,
    p: &[f64],
    eps: f64,
) -> Result<HolonomicLP> {
    if xgrid.dim() != model.dim() || p.len() != model.dim() {
        return Err(LabError::Config("LP grid, model and p dimensions differ".into()));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(LabError::Domain(format!("LP viscosity must be >= 0, got {eps}")));
    }
    if !model.is_strictly_convex() {
        return Err(LabError::Precondition("LP cost needs a Hamiltonian strictly convex in xi".into()));
    }
    if vspec.points < 3 || vspec.points.is_multiple_of(2) {
        return Err(LabError::Config(format!(
            "velocity grid needs an odd number of points per axis so that v = 0 is a node, got {}",
            vspec.points
        )));
    }
    let nv = vspec.points.pow(model.dim() as u32);
    let total = xgrid.len() * nv;
    if total > MAX_LP_VARIABLES {
        let coarser = ((vspec.points - 1) / 2) | 1;
        return Err(LabError::Config(format!(
            "LP would have {total} variables (limit {MAX_LP_VARIABLES}); coarsen, e.g. to {} velocity points or {:?} x-points",
            coarser,
            xgrid.sizes().iter().map(|n| n / 2).collect::<Vec<_>>()
        )));
    }
    let vgrid = vspec.resolve(model, xgrid, p)?;
    let vnodes = vgrid.nodes();
    let n = model.dim();
    let nx = xgrid.len();
    let mut cost = Vec::with_capacity(total);
    let mut columns = Vec::with_capacity(total);
    for i in 0..nx {
        let x = xgrid.point(i);
        let lap = xgrid.laplacian_entries(i);
        let grads: Vec<Vec<(usize, f64)>> = (0..n).map(|a| xgrid.first_derivative_entries(i, a)).collect();
        for v in &vnodes {
            let l = legendre(model, &x, v)?.value;
            let pv: f64 = p.iter().zip(v).map(|(a, b)| a * b).sum();
            let c = l - pv;
            if !c.is_finite() {
                return Err(LabError::numerical(format!("non-finite LP cost at x = {x:?}, v = {v:?}")));
            }
            cost.push(c);
            let mut col: Vec<(usize, f64)> = Vec::new();
            let mut push = |k: usize, a: f64| match col.iter_mut().find(|e| e.0 == k) {
                Some(e) => e.1 += a,
                None => col.push((k, a)),
            };
            for (a, entries) in grads.iter().enumerate() {
                for &(k, w) in entries {
                    push(k, v[a] * w);
                }
            }
            for &(k, w) in &lap {
                push(k, -eps * w);
            }
            col.retain(|e| e.1 != 0.0);
            col.sort_by_key(|e| e.0);
            col.push((nx, 1.0));
            columns.push(col);
        }
    }
    Ok(HolonomicLP { xgrid: xgrid.clone(), vgrid, p: p.to_vec(), eps, cost, columns })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LpOptions {
    pub max_iter: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions { max_iter: 2_000_000 }
    }
}

#[derive(Clone, Debug)]
pub struct LPResult {
    /// Optimal objective, `-Hbar_LP`.
    pub value: f64,
    pub measure: Option<ProductMeasure>,
    pub status: LpStatus,
    pub dual_certificate: Vec<f64>,
    /// `b.y`, a lower bound on `value` when the reduced costs are nonnegative.
    pub dual_value: f64,
    pub min_reduced_cost: f64,
    pub primal_residual: f64,
    pub iterations: usize,
    pub diagnostics: Vec<String>,
    /// Final simplex basis of the reduced standard form; warm-starts the optimal-face solves.
    basis: Vec<usize>,
}

impl LPResult {
    /// `-value`, with a zero optimum reported as `+0`.
    pub fn hbar(&self) -> f64 {
        0.0 - self.value
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.measure.as_ref().map(|m| m.weights.as_slice())
    }
}

/// Solves the LP by the primal simplex method.
pub fn solve_lp(lp: &HolonomicLP, opts: &LpOptions) -> Result<LPResult> {
    let form = lp.standard_form();
    let crash = lp.crash_basis();
    let sol = solve_standard_from(&form, opts.max_iter, crash.as_deref())?;
    let mut diagnostics = vec![format!("simplex iterations {}", sol.iterations)];
    if sol.redundant_rows > 0 {
        diagnostics.push(format!("{} redundant holonomy rows", sol.redundant_rows));
    }
    if sol.status != LpStatus::Optimal {
        diagnostics.push(format!("phase-one infeasibility {:e}", sol.infeasibility));
        return Ok(LPResult {
            value: f64::NAN,
            measure: None,
            status: sol.status,
            dual_certificate: Vec::new(),
            dual_value: f64::NAN,
            min_reduced_cost: f64::NAN,
            primal_residual: f64::NAN,
            iterations: sol.iterations,
            diagnostics,
            basis: sol.basis,
        });
    }
    let mut w = sol.x;
    w.iter_mut().for_each(|v| *v = v.max(0.0));
    let mass = pairwise_sum(&w);
    w.iter_mut().for_each(|v| *v /= mass);
    let primal_residual = lp.feasibility_residual(&w);
    let value = lp.objective(&w);
    let dual_certificate = lp.full_dual(&sol.dual);
    let dual_value = dual_certificate[lp.xgrid.len()];
    let measure = ProductMeasure::new(lp.xgrid.clone(), lp.vgrid.clone(), w, lp.eps)?;
    Ok(LPResult {
        value,
        measure: Some(measure),
        status: LpStatus::Optimal,
        dual_certificate,
        dual_value,
        min_reduced_cost: sol.min_reduced_cost,
        primal_residual,
        iterations: sol.iterations,
        diagnostics,
        basis: sol.basis,
    })
}

/// `(min, max)` of `integral v.xi dmu` over LP-feasible measures whose cost lies within
/// [`FACE_BAND`] of the optimum: the one-sided derivatives `D_{xi-}Hbar`, `D_{xi+}Hbar`.
pub fn optimal_face_extremize(lp: &HolonomicLP, primal: &LPResult, xi: &[f64]) -> Result<(f64, f64)> {
    if primal.status != LpStatus::Optimal {
        return Err(LabError::Precondition("optimal face needs an optimal primal solution".into()));
    }
    if xi.len() != lp.xgrid.dim() {
        return Err(LabError::Config("direction has the wrong dimension".into()));
    }
    let vnodes = lp.vgrid.nodes();
    let nv = vnodes.len();
    let slope: Vec<f64> =
        (0..lp.variables()).map(|c| vnodes[c % nv].iter().zip(xi).map(|(v, x)| v * x).sum()).collect();
    // Band row: cost.mu + s = value + band, with slack s >= 0 as the last column.
    let mut base = lp.standard_form();
    let band_row = base.rows;
    base.rows += 1;
    for (col, &c) in base.columns.iter_mut().zip(&lp.cost) {
        if c != 0.0 {
            col.push((band_row, c));
        }
    }
    base.columns.push(vec![(band_row, 1.0)]);
    base.rhs.push(primal.value + FACE_BAND);
    // The primal basis plus the band slack is feasible for every face objective.
    let n = lp.variables();
    let mut start: Vec<usize> = primal.basis.iter().map(|&j| if j < n { j } else { j + 1 }).collect();
    start.push(n);

    let extreme = |sign: f64| -> Result<f64> {
        let mut form = base.clone();
        form.cost = slope.iter().map(|s| sign * s).collect();
        form.cost.push(0.0);
        let sol = solve_standard_from(&form, 2_000_000, Some(&start))?;
        if sol.status != LpStatus::Optimal {
            return Err(LabError::numerical_with(
                "optimal-face LP failed; the value band may be too tight",
                vec![format!("status {:?}", sol.status), format!("infeasibility {:e}", sol.infeasibility)],
            ));
        }
        let w = &sol.x[..lp.variables()];
        Ok(pairwise_sum(&w.iter().zip(&slope).map(|(a, b)| a * b).collect::<Vec<_>>()))
    };
    Ok((extreme(1.0)?, extreme(-1.0)?))
}

/// Moves each graph atom `(x_i, v(x_i))` onto the velocity nodes by multilinear interpolation,
/// which preserves mass and first moments node by node.
pub fn project_graph_measure(mu: &GraphMeasure, vgrid: &VelocityGrid) -> Result<ProductMeasure> {
    let grid = mu.grid();
    let n = grid.dim();
    if vgrid.dim() != n {
        return Err(LabError::Config("velocity grid dimension differs from the measure".into()));
    }
    let nv = vgrid.len();
    let mut weights = vec![0.0; grid.len() * nv];
    let masses = mu.masses();
    for i in 0..grid.len() {
        let v = mu.vfield.at(i);
        // Per axis: lower node index and the interpolation fraction toward the next node.
        let mut lower = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for a in 0..n {
            let h = vgrid.step(a);
            let mid = (vgrid.sizes[a] - 1) / 2;
            let s = v[a] / h + mid as f64;
            if !(s >= 0.0 && s <= (vgrid.sizes[a] - 1) as f64) {
                return Err(LabError::Domain(format!(
                    "graph velocity {:?} leaves the velocity box of radius {}",
                    v, vgrid.radius
                )));
            }
            let l = (s.floor() as usize).min(vgrid.sizes[a] - 2);
            lower[a] = l;
            frac[a] = s - l as f64;
        }
        for corner in 0..(1usize << n) {
            let mut j = 0;
            let mut w = masses[i];
            for a in 0..n {
                let up = (corner >> (n - 1 - a)) & 1;
                j = j * vgrid.sizes[a] + lower[a] + up;
                w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            weights[i * nv + j] += w;
        }
    }
    let total = pairwise_sum(&weights);
    weights.iter_mut().for_each(|w| *w /= total);
    ProductMeasure::new(grid.clone(), vgrid.clone(), weights, mu.eps())
}

/// Both computations of `Hbar^eps(p)` on a common `x`-grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpPdeGap {
    pub hbar_lp: f64,
    pub c_pde: f64,
    pub gap: f64,
    pub lp_variables: usize,
    pub lp_iterations: usize,
}

pub fn lp_vs_pde_gap(
    model: &HamiltonianModel,
    p: &[f64],
    eps: f64,
    xgrid: &TorusGrid,
    vspec: &VelocitySpec,
) -> Result<LpPdeGap> {
    if !(eps > 0.0) {
        return Err(LabError::Precondition("LP/PDE comparison needs eps > 0".into()));
    }
    let lp = build_lp(model, xgrid, vspec, p, eps)?;
    let res = solve_lp(&lp, &LpOptions::default())?;
    if res.status != LpStatus::Optimal {
        return Err(LabError::numerical_with("holonomic LP did not reach optimality", res.diagnostics));
    }
    let cell = solve_cell(model, xgrid, p, eps, &SolverOptions::default())?;
    Ok(LpPdeGap {
        hbar_lp: res.hbar(),
        c_pde: cell.c,
        gap: (res.hbar() - cell.c).abs(),
        lp_variables: lp.variables(),
        lp_iterations: res.iterations,
    })
}
