//! The acceptance suite: fourteen numbered criteria, each a set of checks with pinned tolerances.
//!
//! Criteria are independent and deterministic, so they run in parallel and the rendered report
//! is byte-identical across runs and thread counts.

use rayon::prelude::*;
use serde::Serialize;

use crate::cell::{hopf_cole_eigenvalue, solve_cell, SolverOptions};
use crate::derivative::{
    c_prime, c_prime_fd, derivative_sweep, grad_hbar_eps, hessian_integral_bound, one_sided_dhbar_inviscid, rate_probe,
    semiconvexity_probe, OneSidedOptions,
};
use crate::error::Result;
use crate::hamiltonian::{HamiltonianModel, TrigPoly};
use crate::lp::{lp_vs_pde_gap, VelocitySpec};
use crate::mather::{holonomy_residual, invariant_density, scale_measure};
use crate::torus::{GridField, Stencil, TorusGrid};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    Between(f64, f64),
    /// Reported only; never fails the criterion.
    Info,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub passed: bool,
}

impl Check {
    pub fn new(name: &str, value: f64, bound: Bound) -> Self {
        let passed = match bound {
            Bound::AtMost(t) => value <= t,
            Bound::AtLeast(t) => value >= t,
            Bound::Between(lo, hi) => value >= lo && value <= hi,
            Bound::Info => true,
        };
        Check { name: name.into(), value, bound, passed }
    }

    pub fn at_most(name: &str, value: f64, tol: f64) -> Self {
        Check::new(name, value, Bound::AtMost(tol))
    }

    pub fn at_least(name: &str, value: f64, tol: f64) -> Self {
        Check::new(name, value, Bound::AtLeast(tol))
    }

    /// A boolean check, reported as 1 (true) against the bound 1.
    pub fn flag(name: &str, value: bool) -> Self {
        Check::at_least(name, if value { 1.0 } else { 0.0 }, 1.0)
    }

    pub fn info(name: &str, value: f64) -> Self {
        Check::new(name, value, Bound::Info)
    }

    /// Tolerance token of the manifest line.
    pub fn tolerance_token(&self) -> String {
        match self.bound {
            Bound::AtMost(t) => format!("<={t:e}"),
            Bound::AtLeast(t) => format!(">={t:e}"),
            Bound::Between(lo, hi) => format!("[{lo},{hi}]"),
            Bound::Info => "info".into(),
        }
    }

    /// `CHECK <name> PASS|FAIL <value> <tolerance>`.
    pub fn manifest_line(&self) -> String {
        format!(
            "CHECK {} {} {:e} {}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.value,
            self.tolerance_token()
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Criterion {
    pub id: usize,
    pub name: String,
    pub checks: Vec<Check>,
    /// Set when a computation failed before its checks could be evaluated.
    pub error: Option<String>,
}

impl Criterion {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.passed)
    }

    /// One human-readable line: id, name, verdict and every check.
    pub fn summary_line(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let detail = match &self.error {
            Some(e) => format!("error: {e}"),
            None => self
                .checks
                .iter()
                .map(|c| format!("{} {:e} {}", c.name, c.value, c.tolerance_token()))
                .collect::<Vec<_>>()
                .join("; "),
        };
        format!("criterion {:2} {:<24} {verdict}  {detail}", self.id, self.name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AcceptanceReport {
    pub criteria: Vec<Criterion>,
}

impl AcceptanceReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(Criterion::passed)
    }

    pub fn summary_lines(&self) -> Vec<String> {
        self.criteria.iter().map(Criterion::summary_line).collect()
    }

    /// Manifest lines, each check named `c<id>_<check>`.
    pub fn check_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        for c in &self.criteria {
            match &c.error {
                Some(_) => lines.push(format!("CHECK c{}_{} FAIL NaN error", c.id, c.name)),
                None => lines.extend(c.checks.iter().map(|k| {
                    let mut k = k.clone();
                    k.name = format!("c{}_{}", c.id, k.name);
                    k.manifest_line()
                })),
            }
        }
        lines
    }
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn line(n: usize) -> Result<TorusGrid> {
    TorusGrid::new(&[n])
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0_f64, f64::max)
}

/// Every `(model, grid, p)` of the derivative sweep.
fn sweep_cases() -> Result<Vec<(HamiltonianModel, TorusGrid, Vec<f64>)>> {
    Ok(vec![
        (HamiltonianModel::pendulum(), line(128)?, vec![0.0]),
        (HamiltonianModel::pendulum(), line(128)?, vec![0.6]),
        (HamiltonianModel::mechanical(1, 4, TrigPoly::cosine_well(1, 0.5))?, line(128)?, vec![0.0]),
        (
            HamiltonianModel::drifted_quadratic(1, 1.0, vec![TrigPoly::sine(1, 0.5)], TrigPoly::cosine_well(1, 0.3))?,
            line(128)?,
            vec![0.2],
        ),
        (
            HamiltonianModel::anisotropic_2d([[1.5, 0.3], [0.3, 1.0]], TrigPoly::cosine_well(2, 0.5))?,
            TorusGrid::new(&[32, 32])?,
            vec![0.1, -0.2],
        ),
    ])
}

const SWEEP_EPS: [f64; 4] = [0.05, 0.1, 0.2, 0.5];

fn mechanical_catalog() -> Result<Vec<(HamiltonianModel, TorusGrid)>> {
    Ok(vec![
        (HamiltonianModel::pendulum(), line(128)?),
        (HamiltonianModel::mechanical(1, 4, TrigPoly::cosine_well(1, 1.0))?, line(128)?),
        (HamiltonianModel::mechanical(2, 2, TrigPoly::cosine_well(2, 0.5))?, TorusGrid::new(&[32, 32])?),
    ])
}

fn trivial_exactness() -> Result<Vec<Check>> {
    let m = HamiltonianModel::free(1)?;
    let g = line(64)?;
    let (mut c_err, mut res, mut theta_err) = (0.0_f64, 0.0_f64, 0.0_f64);
    for eps in [0.05, 0.1, 0.5] {
        for p in [0.0, 0.7] {
            let cell = solve_cell(&m, &g, &[p], eps, &opts())?;
            c_err = c_err.max((cell.c - 0.5 * p * p).abs());
            res = res.max(cell.residual_linf);
            let mu = invariant_density(&m, &cell)?;
            theta_err = theta_err.max(max_of(mu.theta.values().iter().map(|t| (t - 1.0).abs())));
        }
    }
    Ok(vec![
        Check::at_most("c_error", c_err, 1e-10),
        Check::at_most("residual", res, 1e-10),
        Check::at_most("theta_error", theta_err, 1e-12),
    ])
}

fn hopf_cole_oracle() -> Result<Vec<Check>> {
    let m = HamiltonianModel::pendulum();
    let g = TorusGrid::with_stencil(&[512], Stencil::Central4)?;
    let rows = [0.05, 0.1, 0.2, 0.5]
        .par_iter()
        .map(|&eps| {
            let cell = solve_cell(&m, &g, &[0.0], eps, &opts())?;
            let mu = invariant_density(&m, &cell)?;
            let hc = hopf_cole_eigenvalue(&m, &g, eps)?;
            let phi2 = hc.density();
            let theta_gap = max_of(mu.theta.values().iter().zip(phi2.values()).map(|(a, b)| (a - b).abs()));
            Ok(((cell.c - hc.value).abs(), theta_gap))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![
        Check::at_most("eigenvalue_gap", max_of(rows.iter().map(|r| r.0)), 1e-8),
        Check::at_most("density_gap", max_of(rows.iter().map(|r| r.1)), 1e-7),
    ])
}

fn discrete_identity() -> Result<Vec<Check>> {
    let mut worst = 0.0_f64;
    for (m, g, p) in sweep_cases()? {
        for r in derivative_sweep(&m, &g, &p, &SWEEP_EPS, &opts())? {
            worst = worst.max(r.discrepancy_forms);
        }
    }
    Ok(vec![Check::at_most("forms_gap", worst, 1e-10)])
}

fn fd_check() -> Result<Vec<Check>> {
    let m = HamiltonianModel::pendulum();
    let cell = solve_cell(&m, &line(256)?, &[0.0], 0.2, &opts())?;
    let mu = invariant_density(&m, &cell)?;
    let formula = c_prime(&m, &cell, &mu, &opts())?.c_prime_formula_laplacian;
    let gap = |h: f64| c_prime_fd(&m, &cell, h, &opts()).map(|fd| (fd - formula).abs());
    let (g1, g2) = (gap(1e-3)?, gap(5e-4)?);
    Ok(vec![Check::at_most("fd_gap", g1, 1e-5), Check::new("halving_ratio", g1 / g2, Bound::Between(2.5, 6.0))])
}

fn semiconvexity() -> Result<Vec<Check>> {
    let m = HamiltonianModel::pendulum();
    let probe = semiconvexity_probe(&m, &line(256)?, &[0.0], 0.2, &[0.05, 0.025, 0.0125], &opts())?;
    let slack = probe.rows.iter().map(|r| r.second_difference - r.bound).fold(f64::INFINITY, f64::min);
    Ok(vec![
        Check::at_least("min_slack", slack, -1e-8),
        Check::info("eta_exponent", probe.eta_exponent.unwrap_or(f64::NAN)),
    ])
}

fn rate() -> Result<Vec<Check>> {
    let m = HamiltonianModel::pendulum();
    let eps: Vec<f64> = (3..=7).map(|k| 2f64.powi(-k)).collect();
    let fit = rate_probe(&m, &line(1024)?, &eps, None, &opts())?;
    Ok(vec![
        Check::flag("slope_finite", fit.slope_bound.is_finite()),
        Check::info("slope_bound", fit.slope_bound),
        Check::info("nonincreasing", if fit.nonincreasing { 1.0 } else { 0.0 }),
        Check::info("settling", if fit.settling { 1.0 } else { 0.0 }),
        Check::flag("sandwich", fit.sandwich_ok == Some(true)),
    ])
}

fn sign_law() -> Result<Vec<Check>> {
    let mut worst = f64::NEG_INFINITY;
    for (m, g) in mechanical_catalog()? {
        let p = vec![0.0; m.dim()];
        for r in derivative_sweep(&m, &g, &p, &SWEEP_EPS, &opts())? {
            worst = worst.max(r.c_prime_formula_laplacian);
        }
    }
    Ok(vec![Check::at_most("max_c_prime", worst, 1e-10)])
}

fn gradient_formula() -> Result<Vec<Check>> {
    let m = HamiltonianModel::pendulum();
    let g = line(512)?;
    let gaps = [0.0, 0.4, 0.8]
        .par_iter()
        .map(|&p| grad_hbar_eps(&m, &g, &[p], 0.2, &opts()).map(|r| r.gap))
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![Check::at_most("gradient_gap", max_of(gaps), 1e-4)])
}

fn holonomy() -> Result<Vec<Check>> {
    let mut worst = 0.0_f64;
    for (m, g, p) in sweep_cases()? {
        for eps in SWEEP_EPS {
            let cell = solve_cell(&m, &g, &p, eps, &opts())?;
            worst = worst.max(holonomy_residual(&invariant_density(&m, &cell)?, eps));
        }
    }
    // The scaling law is exercised on a measure whose residual is well above round-off.
    let m = HamiltonianModel::pendulum();
    let g = line(128)?;
    let mut mu = invariant_density(&m, &solve_cell(&m, &g, &[0.0], 0.1, &opts())?)?;
    mu.theta = GridField::constant(&g, 1.0);
    let base = holonomy_residual(&mu, 0.1);
    let mut scaling = 0.0_f64;
    for lambda in [0.5, 2.0, 10.0] {
        let r = holonomy_residual(&scale_measure(&mu, lambda)?, lambda * 0.1);
        scaling = scaling.max((r - lambda * base).abs() / (lambda * base));
    }
    Ok(vec![Check::at_most("graph_residual", worst, 1e-10), Check::at_most("scaling_rel", scaling, 1e-12)])
}

fn lp_cross_check() -> Result<Vec<Check>> {
    let m = HamiltonianModel::pendulum();
    let coarse = lp_vs_pde_gap(&m, &[0.0], 0.2, &line(64)?, &VelocitySpec::fixed(3.0, 65))?;
    let fine = lp_vs_pde_gap(&m, &[0.0], 0.2, &line(128)?, &VelocitySpec::fixed(3.0, 129))?;
    Ok(vec![
        Check::at_most("gap", coarse.gap, 5e-2),
        Check::at_most("refined_gap", fine.gap, coarse.gap * (1.0 - 1e-12)),
    ])
}

fn one_sided() -> Result<Vec<Check>> {
    let m = HamiltonianModel::pendulum();
    let o = OneSidedOptions::default();
    let flat = one_sided_dhbar_inviscid(&m, &[0.5], &[1.0], &o)?;
    let rot = one_sided_dhbar_inviscid(&m, &[2.0], &[1.0], &o)?;
    let order = (flat.dminus - flat.dplus).max(rot.dminus - rot.dplus);
    Ok(vec![
        Check::at_most("flat_derivative", flat.dminus.abs().max(flat.dplus.abs()), 1e-6),
        Check::at_most("rotation_gap", rot.oracle_gap.unwrap_or(f64::INFINITY), 2e-2),
        Check::at_most("ordering", order, 1e-8),
    ])
}

fn uniformity() -> Result<Vec<Check>> {
    let m = HamiltonianModel::pendulum();
    let g = line(512)?;
    let rows = [0.4, 0.2, 0.1, 0.05]
        .par_iter()
        .map(|&eps| {
            let cell = solve_cell(&m, &g, &[0.0], eps, &opts())?;
            let mu = invariant_density(&m, &cell)?;
            let b = hessian_integral_bound(&m, &cell, &mu)?;
            let d = c_prime(&m, &cell, &mu, &opts())?;
            Ok((cell.grad_linf, b.lhs - b.rhs, d.c_prime_formula_laplacian.abs() - b.rhs.sqrt()))
        })
        .collect::<Result<Vec<_>>>()?;
    // max sqrt(2 V) for V = 1 - cos(2 pi x) is 2.
    Ok(vec![
        Check::at_most("grad_bound", max_of(rows.iter().map(|r| r.0)), 2.2),
        Check::at_most("hessian_excess", rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max), 0.0),
        Check::at_most("c_prime_excess", rows.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max), 0.0),
    ])
}

fn convexity() -> Result<Vec<Check>> {
    let m = HamiltonianModel::pendulum();
    let g = line(128)?;
    let c = [-1.0, -0.5, 0.0, 0.5, 1.0]
        .par_iter()
        .map(|&p| solve_cell(&m, &g, &[p], 0.2, &opts()).map(|s| s.c))
        .collect::<Result<Vec<_>>>()?;
    let violation = (1..4).map(|k| c[k] - 0.5 * (c[k - 1] + c[k + 1])).fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![Check::at_most("midpoint_violation", violation, 1e-8)])
}

type Runner = fn() -> Result<Vec<Check>>;

const CRITERIA: [(&str, Runner); 13] = [
    ("trivial_exactness", trivial_exactness),
    ("hopf_cole", hopf_cole_oracle),
    ("discrete_identity", discrete_identity),
    ("fd_check", fd_check),
    ("semiconvexity", semiconvexity),
    ("rate", rate),
    ("sign_law", sign_law),
    ("gradient_formula", gradient_formula),
    ("holonomy", holonomy),
    ("lp_cross_check", lp_cross_check),
    ("one_sided", one_sided),
    ("uniformity", uniformity),
    ("convexity", convexity),
];

/// Name of the determinism criterion, which compares two renderings of the other thirteen.
pub const DETERMINISM: &str = "determinism";

fn run_one(id: usize, name: &str, runner: Runner) -> Criterion {
    let (checks, error) = match runner() {
        Ok(c) => (c, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    Criterion { id, name: name.into(), checks, error }
}

/// Criteria 1 to 13.
pub fn run_numerical() -> AcceptanceReport {
    let criteria = CRITERIA.par_iter().enumerate().map(|(k, (name, runner))| run_one(k + 1, name, *runner)).collect();
    AcceptanceReport { criteria }
}

/// Runs criteria 1 to 13 twice and appends criterion 14: byte equality of the two JSON renderings.
pub fn run_all() -> Result<AcceptanceReport> {
    let first = run_numerical();
    let second = run_numerical();
    let a = serde_json::to_vec_pretty(&first)?;
    let b = serde_json::to_vec_pretty(&second)?;
    let mut report = first;
    report.criteria.push(Criterion {
        id: 14,
        name: DETERMINISM.into(),
        checks: vec![Check::flag("identical_outputs", a == b)],
        error: None,
    });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_lines_are_machine_parseable() {
        let c = Check::at_most("gap", 1.5e-3, 5e-2);
        assert_eq!(c.manifest_line(), "CHECK gap PASS 1.5e-3 <=5e-2");
        let f = Check::new("ratio", 7.0, Bound::Between(2.5, 6.0));
        assert_eq!(f.manifest_line(), "CHECK ratio FAIL 7e0 [2.5,6]");
        assert_eq!(Check::flag("ok", true).manifest_line(), "CHECK ok PASS 1e0 >=1e0");
        assert!(Check::info("x", f64::NAN).passed);
    }

    #[test]
    fn failed_computation_fails_its_criterion() {
        let c = run_one(99, "broken", || Err(crate::error::LabError::numerical("boom")));
        assert!(!c.passed());
        assert!(c.summary_line().contains("FAIL"));
    }
}
