//! Derivatives of the ergodic constant and of the effective Hamiltonian, each computed two ways.
//!
//! On the grid, `theta` is the exact kernel of the transposed linearized cell operator. The
//! measure-side formulas are therefore exact derivatives of the discrete `c`, and finite
//! differences of repeated cell solves only differ from them by truncation in the step.

mod oracle;

use std::cell::RefCell;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::cell::{solve_cell, solve_cell_from, CellSolution, SolverOptions};
use crate::error::{LabError, Result};
use crate::hamiltonian::{legendre, HamiltonianModel, LagrangianValue};
use crate::linalg::sym_eigenvalues;
use crate::lp::{build_lp, optimal_face_extremize, solve_lp, LpOptions, VelocitySpec};
use crate::mather::{invariant_density, measure_integrate, momentum_ball, GraphMeasure};
use crate::torus::{hessian, laplacian, TorusGrid};

pub use oracle::{adaptive_simpson, inviscid_oracle, InviscidOracle, ORACLE_TOL};

/// Largest accepted gap between the two measure-side forms of `c'(eps)`.
pub const FORMS_CONSISTENCY_LIMIT: f64 = 1e-8;
/// Step of the central differences in `p`.
pub const P_STEP: f64 = 1e-4;
/// Slack allowed in the semiconvexity inequality.
pub const SEMICONVEXITY_SLACK: f64 = 1e-8;
/// Slack of the mechanical sandwich `c(eps) <= c(0) <= c(eps) + C' eps`.
pub const SANDWICH_TOL: f64 = 1e-6;

/// `h_eps = max(1e-3, eps / 100)`.
pub fn eps_step(eps: f64) -> f64 {
    (eps / 100.0).max(1e-3)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub eps: f64,
    pub p: Vec<f64>,
    pub c: f64,
    /// `-integral Lap u dmu`.
    pub c_prime_formula_laplacian: f64,
    /// `eps^-1 integral (-v).(D_v L - p) dmu`.
    pub c_prime_formula_lagrangian: f64,
    /// `(c(eps + h) - c(eps - h)) / 2h`.
    pub c_prime_fd: f64,
    pub fd_step: f64,
    pub discrepancy_forms: f64,
    /// `|c_prime_formula_laplacian - c_prime_fd|`.
    pub discrepancy_fd: f64,
}

/// Index of the grid node at `x`; atoms of graph measures sit exactly on nodes.
fn node_of(grid: &TorusGrid, x: &[f64]) -> usize {
    let multi: Vec<usize> = x
        .iter()
        .zip(grid.sizes())
        .map(|(&xk, &n)| ((xk * n as f64).round() as i64).rem_euclid(n as i64) as usize)
        .collect();
    grid.flat_index(&multi)
}

fn check_pair(cell: &CellSolution, mu: &GraphMeasure) -> Result<()> {
    if mu.grid() != cell.grid() || mu.eps != cell.eps || mu.p != cell.p {
        return Err(LabError::Precondition("the measure was not built from this cell solution".into()));
    }
    Ok(())
}

/// `integral f(x_i) dmu` for a nodal field.
fn integrate_nodal(mu: &GraphMeasure, values: &[f64]) -> Result<f64> {
    let grid = mu.grid().clone();
    measure_integrate(mu, |x, _| values[node_of(&grid, x)])
}

/// `integral f(x, L(x, v), v) dmu`, surfacing the first Legendre failure.
fn integrate_lagrangian(
    model: &HamiltonianModel,
    mu: &GraphMeasure,
    f: impl Fn(&[f64], &LagrangianValue, &[f64]) -> f64,
) -> Result<f64> {
    let failure = RefCell::new(None);
    let value = measure_integrate(mu, |x, v| match legendre(model, x, v) {
        Ok(l) => f(x, &l, v),
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    });
    match failure.into_inner() {
        Some(e) => Err(e),
        None => value,
    }
}

/// `(c(eps + h) - c(eps - h)) / 2h`, warm-started from `cell`.
pub fn c_prime_fd(model: &HamiltonianModel, cell: &CellSolution, h: f64, opts: &SolverOptions) -> Result<f64> {
    let eps = cell.eps;
    if !(h > 0.0 && eps - h > 0.0) {
        return Err(LabError::Precondition(format!("finite-difference step {h} needs eps - h > 0 (eps = {eps})")));
    }
    let guess = Some((&cell.u, cell.c));
    let up = solve_cell_from(model, cell.grid(), &cell.p, eps + h, opts, guess)?;
    let down = solve_cell_from(model, cell.grid(), &cell.p, eps - h, opts, guess)?;
    Ok((up.c - down.c) / (2.0 * h))
}

/// Both measure-side forms of `c'(eps)` and a central difference with step `eps_step(eps)`.
pub fn c_prime(
    model: &HamiltonianModel,
    cell: &CellSolution,
    mu: &GraphMeasure,
    opts: &SolverOptions,
) -> Result<DerivativeReport> {
    check_pair(cell, mu)?;
    let eps = cell.eps;
    let lap = laplacian(&cell.u)?;
    let laplacian_form = -integrate_nodal(mu, lap.values())?;

    let p = &cell.p;
    let dot = integrate_lagrangian(model, mu, |_, l, v| {
        -v.iter().zip(&l.dval_dv).zip(p).map(|((vk, dk), pk)| vk * (dk - pk)).sum::<f64>()
    })?;
    let lagrangian_form = dot / eps;

    let discrepancy_forms = (laplacian_form - lagrangian_form).abs();
    if discrepancy_forms > FORMS_CONSISTENCY_LIMIT {
        return Err(LabError::Consistency(format!(
            "the two forms of c'(eps) differ by {discrepancy_forms:e} at eps = {eps}; the adjoint density is broken"
        )));
    }
    let fd_step = eps_step(eps);
    let fd = c_prime_fd(model, cell, fd_step, opts)?;
    Ok(DerivativeReport {
        eps,
        p: cell.p.clone(),
        c: cell.c,
        c_prime_formula_laplacian: laplacian_form,
        c_prime_formula_lagrangian: lagrangian_form,
        c_prime_fd: fd,
        fd_step,
        discrepancy_forms,
        discrepancy_fd: (laplacian_form - fd).abs(),
    })
}

/// [`c_prime`] at each viscosity, in the given order.
pub fn derivative_sweep(
    model: &HamiltonianModel,
    grid: &TorusGrid,
    p: &[f64],
    eps_list: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<DerivativeReport>> {
    eps_list
        .par_iter()
        .map(|&eps| {
            let cell = solve_cell(model, grid, p, eps, opts)?;
            let mu = invariant_density(model, &cell)?;
            c_prime(model, &cell, &mu, opts)
        })
        .collect()
}

/// Flat CSV, one row per report.
pub fn write_derivative_csv<W: Write>(reports: &[DerivativeReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eps", "c", "c_prime_lap", "c_prime_lag", "c_prime_fd", "gap_forms", "gap_fd", "fd_step"])?;
    for r in reports {
        w.write_record(
            [
                r.eps,
                r.c,
                r.c_prime_formula_laplacian,
                r.c_prime_formula_lagrangian,
                r.c_prime_fd,
                r.discrepancy_forms,
                r.discrepancy_fd,
                r.fd_step,
            ]
            .iter()
            .map(|v| format!("{v:?}")),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemiconvexityRow {
    pub eta: f64,
    /// `c(eps + eta) + c(eps - eta) - 2 c(eps)`.
    pub second_difference: f64,
    /// `-(integral v.D_vv L.v dmu_eps) eps^-2 eta^2`.
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemiconvexityProbe {
    pub eps: f64,
    /// `integral v.D_vv L.v dmu_eps`.
    pub curvature_moment: f64,
    pub rows: Vec<SemiconvexityRow>,
    /// Least-squares slope of `log |second difference|` against `log eta`; `None` when fewer
    /// than two differences are nonzero.
    pub eta_exponent: Option<f64>,
}

impl SemiconvexityProbe {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(a, b)| *a > 0.0 && b.abs() > 0.0).map(|(a, b)| (a.ln(), b.abs().ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

/// Second differences of `eps -> c(eps)` against the curvature lower bound.
pub fn semiconvexity_probe(
    model: &HamiltonianModel,
    grid: &TorusGrid,
    p: &[f64],
    eps: f64,
    etas: &[f64],
    opts: &SolverOptions,
) -> Result<SemiconvexityProbe> {
    if etas.is_empty() || etas.iter().any(|&e| !(e > 0.0 && eps - e > 0.0 && eps + e < 1.0)) {
        return Err(LabError::Precondition(format!("every eta must keep eps +- eta inside (0, 1) (eps = {eps})")));
    }
    let base = solve_cell(model, grid, p, eps, opts)?;
    let mu = invariant_density(model, &base)?;
    let moment = integrate_lagrangian(model, &mu, |x, l, v| model.v_dvv_l_v(x, &l.argmax_xi, v))?;
    let guess = Some((&base.u, base.c));
    let rows = etas
        .par_iter()
        .map(|&eta| {
            let up = solve_cell_from(model, grid, p, eps + eta, opts, guess)?;
            let down = solve_cell_from(model, grid, p, eps - eta, opts, guess)?;
            let second_difference = up.c + down.c - 2.0 * base.c;
            let bound = -moment * eta * eta / (eps * eps);
            Ok(SemiconvexityRow {
                eta,
                second_difference,
                bound,
                holds: second_difference >= bound - SEMICONVEXITY_SLACK,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let eta_exponent = log_log_slope(&rows.iter().map(|r| (r.eta, r.second_difference)).collect::<Vec<_>>());
    Ok(SemiconvexityProbe { eps, curvature_moment: moment, rows, eta_exponent })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    /// Strictly decreasing, inside `(0, 1)`.
    pub eps_samples: Vec<f64>,
    pub c_values: Vec<f64>,
    pub c0_reference: f64,
    /// `|c(eps) - c(0)| / eps` per sample.
    pub ratios: Vec<f64>,
    /// `max` of the ratios.
    pub slope_bound: f64,
    /// The ratios never increase as `eps` decreases.
    pub nonincreasing: bool,
    /// Successive changes of the ratio shrink, so the ratios settle to a finite limit.
    pub settling: bool,
    /// Mechanical sandwich with `C' = 1.1 slope_bound`; `None` for other families.
    pub sandwich_ok: Option<bool>,
}

/// `c(eps)` along a decreasing sweep against an inviscid reference `c(0)`.
///
/// Without `c0_reference` the model must be one the inviscid oracle covers.
pub fn rate_probe(
    model: &HamiltonianModel,
    grid: &TorusGrid,
    eps_samples: &[f64],
    c0_reference: Option<f64>,
    opts: &SolverOptions,
) -> Result<RateFit> {
    if eps_samples.is_empty()
        || eps_samples.iter().any(|&e| !(e > 0.0 && e < 1.0))
        || eps_samples.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(LabError::Precondition("eps samples must decrease strictly inside (0, 1)".into()));
    }
    let p = vec![0.0; model.dim()];
    let c0 = match c0_reference {
        Some(c0) => c0,
        None => {
            inviscid_oracle(model, 0.0)
                .map_err(|_| {
                    LabError::Precondition("c(0) has no analytic reference for this model; supply c0_reference".into())
                })?
                .hbar
        }
    };
    let c_values = eps_samples
        .par_iter()
        .map(|&e| solve_cell(model, grid, &p, e, opts).map(|s| s.c))
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = eps_samples.iter().zip(&c_values).map(|(e, c)| (c - c0).abs() / e).collect();
    let slope_bound = ratios.iter().fold(0.0_f64, |m, r| m.max(*r));
    let nonincreasing = ratios.windows(2).all(|w| w[1] <= w[0]);
    let steps: Vec<f64> = ratios.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let settling = steps.windows(2).all(|s| s[1] <= s[0]);
    let sandwich_ok = model.is_mechanical().then(|| {
        let c_prime = 1.1 * slope_bound;
        eps_samples.iter().zip(&c_values).all(|(e, c)| *c <= c0 + SANDWICH_TOL && c0 <= c + c_prime * e + SANDWICH_TOL)
    });
    Ok(RateFit {
        eps_samples: eps_samples.to_vec(),
        c_values,
        c0_reference: c0,
        ratios,
        slope_bound,
        nonincreasing,
        settling,
        sandwich_ok,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientCheck {
    pub p: Vec<f64>,
    pub eps: f64,
    /// `integral v dmu_{p, eps}`.
    pub gradient: Vec<f64>,
    /// Central differences of `p -> c(p; eps)` with step [`P_STEP`].
    pub fd_gradient: Vec<f64>,
    pub gap: f64,
}

/// Rotation vector of the Mather measure against the finite-difference gradient of `Hbar^eps`.
pub fn grad_hbar_eps(
    model: &HamiltonianModel,
    grid: &TorusGrid,
    p: &[f64],
    eps: f64,
    opts: &SolverOptions,
) -> Result<GradientCheck> {
    if !(eps > 0.0) {
        return Err(LabError::Precondition("the gradient formula needs eps > 0".into()));
    }
    let base = solve_cell(model, grid, p, eps, opts)?;
    let mu = invariant_density(model, &base)?;
    let n = model.dim();
    let gradient = (0..n).map(|k| measure_integrate(&mu, |_, v| v[k])).collect::<Result<Vec<_>>>()?;
    let guess = Some((&base.u, base.c));
    let fd_gradient = (0..n)
        .into_par_iter()
        .map(|k| {
            let shifted = |s: f64| {
                let mut q = p.to_vec();
                q[k] += s;
                solve_cell_from(model, grid, &q, eps, opts, guess).map(|c| c.c)
            };
            Ok((shifted(P_STEP)? - shifted(-P_STEP)?) / (2.0 * P_STEP))
        })
        .collect::<Result<Vec<_>>>()?;
    let gap = gradient.iter().zip(&fd_gradient).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(GradientCheck { p: p.to_vec(), eps, gradient, fd_gradient, gap })
}

/// Grid of the optimal-face LPs behind [`one_sided_dhbar_inviscid`].
#[derive(Clone, Debug, PartialEq, serde::Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OneSidedOptions {
    /// Points per axis of the `x` grid.
    pub nx: usize,
    pub velocity: VelocitySpec,
    pub lp: LpOptions,
}

impl Default for OneSidedOptions {
    fn default() -> Self {
        OneSidedOptions { nx: 64, velocity: VelocitySpec::fixed(3.0, 65), lp: LpOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OneSidedReport {
    pub p: Vec<f64>,
    pub xi: Vec<f64>,
    pub dminus: f64,
    pub dplus: f64,
    pub hbar_lp: f64,
    /// `dHbar/dp . xi` from the quadrature oracle, for 1-D models it covers, off the flat-piece edge.
    pub oracle_derivative: Option<f64>,
    /// `max(|dminus - oracle|, |dplus - oracle|)`.
    pub oracle_gap: Option<f64>,
    pub nx: usize,
    pub v_points: usize,
    pub v_radius: f64,
}

/// One-sided directional derivatives of the inviscid `Hbar` from the optimal face at `eps = 0`.
pub fn one_sided_dhbar_inviscid(
    model: &HamiltonianModel,
    p: &[f64],
    xi: &[f64],
    opts: &OneSidedOptions,
) -> Result<OneSidedReport> {
    let xgrid = TorusGrid::new(&vec![opts.nx; model.dim()])?;
    let lp = build_lp(model, &xgrid, &opts.velocity, p, 0.0)?;
    let primal = solve_lp(&lp, &opts.lp)?;
    let (dminus, dplus) = optimal_face_extremize(&lp, &primal, xi)?;
    let oracle_derivative = match inviscid_oracle(model, p[0]) {
        Ok(o) if (p[0].abs() - o.flat_halfwidth).abs() > 1e-9 => Some(o.dhbar_dp * xi[0]),
        _ => None,
    };
    let oracle_gap = oracle_derivative.map(|d| (dminus - d).abs().max((dplus - d).abs()));
    Ok(OneSidedReport {
        p: p.to_vec(),
        xi: xi.to_vec(),
        dminus,
        dplus,
        hbar_lp: primal.hbar(),
        oracle_derivative,
        oracle_gap,
        nx: opts.nx,
        v_points: lp.vgrid.sizes[0],
        v_radius: lp.vgrid.radius,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HessianBound {
    /// `integral |D^2 u|_F^2 dmu`.
    pub lhs: f64,
    pub rhs: f64,
    /// Smallest eigenvalue of `D_xi xi H` over the sample.
    pub gamma: f64,
    /// `max_i sup |D_{x_i x_i} H| + (2 / gamma) |D_{xi x_i} H|^2`.
    pub c_constant: f64,
    /// 2 when a mixed derivative `D_{xi x} H` is present and must be split off, else 1.
    pub split_factor: f64,
    /// Momentum ball radius `|p| + max |Du|`.
    pub ball_radius: f64,
    pub samples: usize,
    /// `(integral |Lap u|^2 dmu)^(1/2)`, which bounds `|c'(eps)|`.
    pub laplacian_l2: f64,
    pub holds: bool,
}

/// The `L^2(mu)` Hessian bound with the constants sampled over the grid and the gradient ball.
pub fn hessian_integral_bound(
    model: &HamiltonianModel,
    cell: &CellSolution,
    mu: &GraphMeasure,
) -> Result<HessianBound> {
    check_pair(cell, mu)?;
    let grid = cell.grid();
    let n = grid.dim();
    let hess = hessian(&cell.u)?;
    let frob: Vec<f64> = (0..grid.len()).map(|i| hess.at(i).iter().map(|h| h * h).sum()).collect();
    let lhs = integrate_nodal(mu, &frob)?;
    let lap = laplacian(&cell.u)?;
    let lap2: Vec<f64> = lap.values().iter().map(|l| l * l).collect();
    let laplacian_l2 = integrate_nodal(mu, &lap2)?.sqrt();

    let pn = cell.p.iter().map(|c| c * c).sum::<f64>().sqrt();
    let ball_radius = pn + cell.grad_linf;
    let ball = momentum_ball(n, ball_radius);
    let mut gamma = f64::INFINITY;
    let mut dxx = vec![0.0_f64; n];
    let mut mixed = vec![0.0_f64; n];
    let (mut hpp, mut hxx, mut hxp) = (vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n]);
    for i in 0..grid.len() {
        let x = grid.point(i);
        for xi in &ball {
            model.d2xi_h(&x, xi, &mut hpp);
            gamma = gamma.min(sym_eigenvalues(n, &hpp)[0]);
            model.dxx_h(&x, xi, &mut hxx);
            model.dxxi_h(&x, xi, &mut hxp);
            for a in 0..n {
                dxx[a] = dxx[a].max(hxx[a * n + a].abs());
                mixed[a] = mixed[a].max(hxp[a * n..(a + 1) * n].iter().map(|v| v * v).sum());
            }
        }
    }
    let c_constant = (0..n).map(|a| dxx[a] + 2.0 * mixed[a] / gamma).fold(0.0_f64, f64::max);
    let split_factor = if mixed.iter().any(|&m| m > 0.0) { 2.0 } else { 1.0 };
    let rhs = if gamma > 0.0 { split_factor * c_constant * n as f64 / gamma } else { f64::INFINITY };
    Ok(HessianBound {
        lhs,
        rhs,
        gamma,
        c_constant,
        split_factor,
        ball_radius,
        samples: grid.len() * ball.len(),
        laplacian_l2,
        holds: lhs <= rhs * (1.0 + 1e-12) + 1e-12,
    })
}
