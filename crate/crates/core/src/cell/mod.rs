//! The viscous cell problem `H(x, p + Du) - eps Lap u = c` on the torus.
//!
//! [`solve_cell`] runs Newton on the augmented unknown `(u_1, ..., u_{N-1}, c)` with `u_0 = 0`.
//! The Jacobian rows are the linearized operator `L psi = b.D psi - eps Lap psi`,
//! `b = D_xi H(x, p + Du)`, with the column of `u_0` replaced by the `-1` column of `c`.
//! [`linearized_operator`] exposes `L` itself; its transpose defines the invariant density.

mod hopf_cole;
mod parabolic;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::hamiltonian::HamiltonianModel;
use crate::linalg::{BorderedBandLu, SparseRows};
use crate::torus::{gradient, integrate, io, laplacian, GridField, TorusGrid};

pub use hopf_cole::{hopf_cole_eigenvalue, hopf_cole_for_potential, HopfCole};
pub use parabolic::parabolic_march;

/// Highest mesh Péclet number accepted by the central-difference solvers.
pub const PECLET_LIMIT: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Newton,
    Parabolic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Max-norm residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Line-search contraction factor.
    pub damping: f64,
    /// Upper bound on the parabolic time step; the march may take smaller steps.
    pub parabolic_dt: f64,
    /// Final time of the parabolic march.
    pub parabolic_t: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iter: 100, damping: 0.5, parabolic_dt: 1e-2, parabolic_t: 400.0 }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(LabError::Config("tol must be > 0".into()));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(LabError::Config("damping must lie in (0, 1)".into()));
        }
        if self.max_iter == 0 {
            return Err(LabError::Config("max_iter must be positive".into()));
        }
        if !(self.parabolic_dt > 0.0 && self.parabolic_t > 0.0) {
            return Err(LabError::Config("parabolic_dt and parabolic_t must be > 0".into()));
        }
        Ok(())
    }
}

/// Discrete solution `(u, c)` of the cell problem, normalized by `u(x_0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSolution {
    pub p: Vec<f64>,
    pub eps: f64,
    pub u: GridField,
    pub c: f64,
    pub residual_linf: f64,
    /// `max_i |Du(x_i)|`.
    pub grad_linf: f64,
    pub iterations: usize,
    pub method: Method,
}

#[derive(Serialize)]
struct CellSolutionJson<'a> {
    p: &'a [f64],
    eps: f64,
    c: f64,
    residual_linf: f64,
    grad_linf: f64,
    iterations: usize,
    method: Method,
    u: &'a str,
}

impl CellSolution {
    pub fn grid(&self) -> &TorusGrid {
        self.u.grid()
    }

    /// JSON summary; `u_ref` names the CSV file holding `u`.
    pub fn to_json(&self, u_ref: &str) -> serde_json::Value {
        serde_json::to_value(CellSolutionJson {
            p: &self.p,
            eps: self.eps,
            c: self.c,
            residual_linf: self.residual_linf,
            grad_linf: self.grad_linf,
            iterations: self.iterations,
            method: self.method,
            u: u_ref,
        })
        .expect("cell solution serializes")
    }

    /// Writes `<stem>.json` and `<stem>_u.csv` into `dir`; returns the two file names.
    pub fn write(&self, dir: &std::path::Path, stem: &str) -> Result<Vec<String>> {
        let csv_name = format!("{stem}_u.csv");
        let json_name = format!("{stem}.json");
        io::write_field_csv(&self.u, std::fs::File::create(dir.join(&csv_name))?)?;
        let text = serde_json::to_string_pretty(&self.to_json(&csv_name))?;
        std::fs::write(dir.join(&json_name), text + "\n")?;
        Ok(vec![json_name, csv_name])
    }
}

pub(crate) fn check_setting(model: &HamiltonianModel, grid: &TorusGrid, p: &[f64], eps: f64) -> Result<()> {
    if grid.dim() != model.dim() || p.len() != model.dim() {
        return Err(LabError::Config(format!(
            "model dimension {}, grid dimension {}, |p| has {} components",
            model.dim(),
            grid.dim(),
            p.len()
        )));
    }
    if grid.dim() > 2 {
        return Err(LabError::Precondition("cell solvers support n <= 2 only".into()));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(LabError::Precondition(format!("viscosity must be > 0, got {eps}")));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(LabError::Domain("non-finite p".into()));
    }
    if !model.is_strictly_convex() {
        return Err(LabError::Precondition("Hamiltonian is not strictly convex in xi".into()));
    }
    Ok(())
}

/// Node coordinates, flattened `[x_0, x_1, ...]`.
pub(crate) fn node_points(grid: &TorusGrid) -> Vec<f64> {
    (0..grid.len()).flat_map(|i| grid.point(i)).collect()
}

/// `H(x_i, p + Du_i)` and the drift `b_i = D_xi H(x_i, p + Du_i)` at every node.
pub(crate) fn hamiltonian_and_drift(
    model: &HamiltonianModel,
    points: &[f64],
    p: &[f64],
    du: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = p.len();
    let nodes = du.len() / n;
    let mut h = vec![0.0; nodes];
    let mut b = vec![0.0; nodes * n];
    let mut xi = vec![0.0; n];
    for i in 0..nodes {
        for a in 0..n {
            xi[a] = p[a] + du[i * n + a];
        }
        let x = &points[i * n..(i + 1) * n];
        h[i] = model.h(x, &xi);
        model.dxi_h(x, &xi, &mut b[i * n..(i + 1) * n]);
    }
    (h, b)
}

/// Drift field `b(x) = D_xi H(x, p + Du(x))` as a vector field.
pub fn drift_field(model: &HamiltonianModel, p: &[f64], u: &GridField) -> Result<GridField> {
    let du = gradient(u)?;
    let points = node_points(u.grid());
    let (_, b) = hamiltonian_and_drift(model, &points, p, du.values());
    GridField::new(u.grid().clone(), u.grid().dim(), b)
}

/// Assembles `L psi = b.D psi - eps Lap psi` for a node-major drift `b`.
pub fn assemble_operator(grid: &TorusGrid, drift: &[f64], eps: f64) -> SparseRows {
    let n = grid.dim();
    let mut m = SparseRows::new(grid.len());
    for i in 0..grid.len() {
        for a in 0..n {
            let ba = drift[i * n + a];
            for (j, w) in grid.first_derivative_entries(i, a) {
                m.add(i, j, ba * w);
            }
        }
        for (j, w) in grid.laplacian_entries(i) {
            m.add(i, j, -eps * w);
        }
    }
    m
}

/// The linearized cell operator at `u`: `L psi = D_xi H(x, p + Du).D psi - eps Lap psi`.
pub fn linearized_operator(model: &HamiltonianModel, p: &[f64], eps: f64, u: &GridField) -> Result<SparseRows> {
    let b = drift_field(model, p, u)?;
    Ok(assemble_operator(u.grid(), b.values(), eps))
}

/// Indices moved to the dense border in every direct solve: node 0 and the wrap rows.
pub(crate) fn solver_border(grid: &TorusGrid) -> Vec<usize> {
    let mut border = vec![0];
    border.extend(grid.wrap_border().into_iter().filter(|&i| i != 0));
    border
}

fn peclet_guard(grid: &TorusGrid, drift: &[f64], eps: f64) -> Result<()> {
    let pe = grid.peclet(drift, eps);
    if pe > PECLET_LIMIT {
        let bmax = drift.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let n_min = (bmax / (2.0 * PECLET_LIMIT * eps)).ceil() as usize;
        return Err(LabError::Precondition(format!(
            "mesh Péclet number {pe:.3} exceeds {PECLET_LIMIT}; refine to at least {n_min} points per axis"
        )));
    }
    Ok(())
}

/// Max-norm residual of `H(x, p + Du) - eps Lap u - c`, assembled directly from the stencil
/// weights without the operator helpers used by the solvers.
pub fn cell_residual(model: &HamiltonianModel, u: &GridField, p: &[f64], eps: f64, c: f64) -> Result<f64> {
    let grid = u.grid();
    let n = grid.dim();
    let vals = u.values();
    let stencil = grid.stencil();
    let mut worst: f64 = 0.0;
    let mut xi = vec![0.0; n];
    for i in 0..grid.len() {
        let mut lap = 0.0;
        for a in 0..n {
            let inv_h = grid.sizes()[a] as f64;
            let mut d = 0.0;
            for &(off, w) in stencil.first_derivative() {
                d += w * vals[grid.shift(i, a, off)];
            }
            xi[a] = p[a] + d * inv_h;
            let mut s = 0.0;
            for &(off, w) in stencil.second_derivative() {
                s += w * vals[grid.shift(i, a, off)];
            }
            lap += s * inv_h * inv_h;
        }
        let r = model.h(&grid.point(i), &xi) - eps * lap - c;
        worst = worst.max(r.abs());
    }
    if !worst.is_finite() {
        return Err(LabError::numerical("non-finite cell residual"));
    }
    Ok(worst)
}

struct Residual {
    f: Vec<f64>,
    drift: Vec<f64>,
    l2: f64,
    linf: f64,
}

fn residual(model: &HamiltonianModel, points: &[f64], p: &[f64], eps: f64, u: &GridField, c: f64) -> Result<Residual> {
    let du = gradient(u)?;
    let lap = laplacian(u)?;
    let (h, drift) = hamiltonian_and_drift(model, points, p, du.values());
    let f: Vec<f64> = h.iter().zip(lap.values()).map(|(hv, lv)| hv - eps * lv - c).collect();
    let l2 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    let linf = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(Residual { f, drift, l2, linf })
}

/// Solves the cell problem by damped Newton from `u = 0`, `c = integral of H(x, p)`.
pub fn solve_cell(
    model: &HamiltonianModel,
    grid: &TorusGrid,
    p: &[f64],
    eps: f64,
    opts: &SolverOptions,
) -> Result<CellSolution> {
    solve_cell_from(model, grid, p, eps, opts, None)
}

/// As [`solve_cell`], starting from `guess = (u, c)`; `u` is re-normalized to `u(x_0) = 0`.
pub fn solve_cell_from(
    model: &HamiltonianModel,
    grid: &TorusGrid,
    p: &[f64],
    eps: f64,
    opts: &SolverOptions,
    guess: Option<(&GridField, f64)>,
) -> Result<CellSolution> {
    opts.validate()?;
    check_setting(model, grid, p, eps)?;
    let points = node_points(grid);
    let (mut u, mut c) = match guess {
        Some((g, c0)) => {
            if g.grid() != grid || !g.is_scalar() {
                return Err(LabError::Config("initial guess lives on a different grid".into()));
            }
            let shift = g.values()[0];
            (g.map(|v| v - shift), c0)
        }
        None => {
            let zero = GridField::zeros(grid, 1);
            let du = vec![0.0; grid.len() * grid.dim()];
            let (h, _) = hamiltonian_and_drift(model, &points, p, &du);
            let c0 = integrate(&GridField::scalar(grid.clone(), h)?)?;
            (zero, c0)
        }
    };

    let mut res = residual(model, &points, p, eps, &u, c)?;
    peclet_guard(grid, &res.drift, eps)?;
    let border = solver_border(grid);
    let mut history = vec![res.l2];
    let mut iterations = 0;
    while res.linf > opts.tol {
        if iterations >= opts.max_iter {
            return Err(LabError::numerical_with(
                "Newton reached the iteration limit",
                vec![format!("residual {:e}", res.linf), format!("c = {c}")],
            ));
        }
        let step = newton_step(grid, &res, eps, &border)?;
        let mut t = 1.0;
        let (u_new, c_new, res_new) = loop {
            let u_try = add_step(&u, &step, t);
            let c_try = c + t * step[0];
            let r_try = residual(model, &points, p, eps, &u_try, c_try)?;
            if r_try.l2.is_finite() && r_try.l2 <= (1.0 - 1e-4 * t) * res.l2 {
                break (u_try, c_try, r_try);
            }
            t *= opts.damping;
            if t < 1e-10 {
                return Err(LabError::numerical_with(
                    "Newton line search failed",
                    vec![format!("residual {:e}", res.linf), format!("iteration {iterations}")],
                ));
            }
        };
        u = u_new;
        c = c_new;
        res = res_new;
        iterations += 1;
        history.push(res.l2);
        if history.len() > 5 {
            let old = history[history.len() - 6];
            if res.linf > opts.tol && res.l2 > (1.0 - 1e-3) * old {
                return Err(LabError::numerical_with(
                    "Newton stagnated",
                    history.iter().map(|v| format!("{v:e}")).collect(),
                ));
            }
        }
    }
    // One extra step tightens the discrete identities well below the stopping tolerance;
    // residuals already at round-off are left alone so exact solutions stay exact.
    if res.linf > 1e-14 * (1.0 + c.abs()) {
        if let Ok(step) = newton_step(grid, &res, eps, &border) {
            let u_try = add_step(&u, &step, 1.0);
            let c_try = c + step[0];
            let r_try = residual(model, &points, p, eps, &u_try, c_try)?;
            if r_try.l2 < res.l2 {
                u = u_try;
                c = c_try;
                res = r_try;
            }
        }
    }
    peclet_guard(grid, &res.drift, eps)?;
    finish(model, u, p, eps, c, iterations, Method::Newton)
}

fn add_step(u: &GridField, step: &[f64], t: f64) -> GridField {
    let mut next = u.clone();
    // step[0] is the c update; u_0 stays pinned at zero.
    for (ui, si) in next.values_mut().iter_mut().zip(step).skip(1) {
        *ui += t * si;
    }
    next
}

fn newton_step(grid: &TorusGrid, res: &Residual, eps: f64, border: &[usize]) -> Result<Vec<f64>> {
    let mut jac = assemble_operator(grid, &res.drift, eps);
    for i in 0..grid.len() {
        let mut row: Vec<(usize, f64)> = jac.row(i).iter().copied().filter(|&(j, _)| j != 0).collect();
        row.push((0, -1.0));
        jac.set_row(i, row);
    }
    let lu = BorderedBandLu::factor(&jac, border)?;
    let rhs: Vec<f64> = res.f.iter().map(|v| -v).collect();
    Ok(lu.solve(&rhs))
}

pub(crate) fn finish(
    model: &HamiltonianModel,
    u: GridField,
    p: &[f64],
    eps: f64,
    c: f64,
    iterations: usize,
    method: Method,
) -> Result<CellSolution> {
    let residual_linf = cell_residual(model, &u, p, eps, c)?;
    let grad_linf = gradient(&u)?.max_norm_per_node();
    Ok(CellSolution { p: p.to_vec(), eps, u, c, residual_linf, grad_linf, iterations, method })
}

/// `(eps, max |Du^eps|)` per viscosity, with the uniform-bound flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernsteinReport {
    pub rows: Vec<(f64, f64)>,
    /// False when the gradient bound grows by more than 20% between consecutive viscosities
    /// without the growth ratio shrinking.
    pub bounded: bool,
}

/// Solves at each `eps` (sorted decreasing) and reports `max |Du^eps|`.
pub fn bernstein_report(
    model: &HamiltonianModel,
    grid: &TorusGrid,
    p: &[f64],
    eps_list: &[f64],
    opts: &SolverOptions,
) -> Result<BernsteinReport> {
    use rayon::prelude::*;
    if eps_list.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(LabError::Precondition("Bernstein sweep needs eps in (0, 1)".into()));
    }
    let mut eps_sorted = eps_list.to_vec();
    eps_sorted.sort_by(|a, b| b.total_cmp(a));
    let rows = eps_sorted
        .par_iter()
        .map(|&e| solve_cell(model, grid, p, e, opts).map(|s| (e, s.grad_linf)))
        .collect::<Result<Vec<_>>>()?;
    // Growth ratios between consecutive viscosities; a bounded sequence must decelerate.
    let ratios: Vec<f64> = rows
        .windows(2)
        .map(|w| {
            if w[0].1 > 0.0 {
                w[1].1 / w[0].1
            } else if w[1].1 > 0.0 {
                f64::INFINITY
            } else {
                1.0
            }
        })
        .collect();
    let bounded = ratios.windows(2).all(|r| r[1] <= 1.2 || r[1] < r[0]);
    Ok(BernsteinReport { rows, bounded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::Stencil;

    #[test]
    fn free_hamiltonian_is_solved_in_one_step() {
        let m = HamiltonianModel::free(1).unwrap();
        let g = TorusGrid::new(&[32]).unwrap();
        for (p, c) in [(0.0, 0.0), (0.7, 0.245)] {
            let s = solve_cell(&m, &g, &[p], 0.1, &SolverOptions::default()).unwrap();
            assert!((s.c - c).abs() < 1e-15);
            assert!(s.u.values().iter().all(|&v| v == 0.0));
            assert!(s.iterations <= 1);
        }
    }

    #[test]
    fn zero_viscosity_and_linear_models_are_rejected() {
        let g = TorusGrid::new(&[32]).unwrap();
        let e = solve_cell(&HamiltonianModel::pendulum(), &g, &[0.0], 0.0, &SolverOptions::default());
        assert!(matches!(e, Err(LabError::Precondition(_))));
        let lin = HamiltonianModel::drifted_quadratic(
            1,
            0.0,
            vec![crate::hamiltonian::TrigPoly::sine(1, 1.0)],
            crate::hamiltonian::TrigPoly::constant(0.0),
        )
        .unwrap();
        let e = solve_cell(&lin, &g, &[0.0], 0.1, &SolverOptions::default());
        assert!(matches!(e, Err(LabError::Precondition(_))));
    }

    #[test]
    fn peclet_violation_names_the_needed_resolution() {
        let m = HamiltonianModel::free(1).unwrap();
        let g = TorusGrid::new(&[16]).unwrap();
        let e = solve_cell(&m, &g, &[5.0], 0.01, &SolverOptions::default()).unwrap_err();
        let msg = e.to_string();
        assert!(matches!(e, LabError::Precondition(_)));
        assert!(msg.contains("at least 125"), "{msg}");
    }

    #[test]
    fn pendulum_converges_with_pinned_gauge() {
        let m = HamiltonianModel::pendulum();
        let g = TorusGrid::with_stencil(&[128], Stencil::Central4).unwrap();
        let s = solve_cell(&m, &g, &[0.3], 0.1, &SolverOptions::default()).unwrap();
        assert_eq!(s.u.values()[0], 0.0);
        assert!(s.residual_linf <= 1e-10);
        assert!(s.c < 0.3 * 0.3 / 2.0);
    }

    #[test]
    fn two_dimensional_problem_converges() {
        let m = HamiltonianModel::anisotropic_2d(
            [[1.5, 0.3], [0.3, 1.0]],
            crate::hamiltonian::TrigPoly::cosine_well(2, 0.5),
        )
        .unwrap();
        let g = TorusGrid::new(&[24, 20]).unwrap();
        let s = solve_cell(&m, &g, &[0.2, -0.1], 0.2, &SolverOptions::default()).unwrap();
        assert!(s.residual_linf <= 1e-10);
    }
}
