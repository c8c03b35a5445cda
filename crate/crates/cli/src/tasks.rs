use std::path::Path;

use ergodic_core::acceptance::{self, Check};
use ergodic_core::cell::{solve_cell, CellSolution};
use ergodic_core::derivative::{
    c_prime, derivative_sweep, grad_hbar_eps, inviscid_oracle, one_sided_dhbar_inviscid, rate_probe,
    semiconvexity_probe, write_derivative_csv, OneSidedOptions,
};
use ergodic_core::hamiltonian::{check_assumptions, Family, HamiltonianModel};
use ergodic_core::lp::{build_lp, lp_vs_pde_gap, solve_lp, LpOptions, LpStatus};
use ergodic_core::mather::{holonomy_residual, invariant_density};
use ergodic_core::torus::TorusGrid;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Task};
use crate::plotdata::emit_plotdata;
use crate::{CliError, RunDir, TaskOutput};

/// Sampling box and sample count of the advisory assumption report.
const ASSUMPTION_BOX: f64 = 4.0;
const ASSUMPTION_SAMPLES: usize = 4096;

type TaskResult = Result<TaskOutput, CliError>;

fn finish(checks: Vec<Check>) -> TaskOutput {
    TaskOutput {
        passed: checks.iter().all(|c| c.passed),
        checks: checks.iter().map(Check::manifest_line).collect(),
        console: Vec::new(),
    }
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0_f64, f64::max)
}

/// Largest excess of a value over the chord of its neighbours, for `xs` sorted increasingly.
fn convexity_violation(xs: &[f64], ys: &[f64]) -> f64 {
    (1..xs.len().saturating_sub(1))
        .map(|k| {
            let (a, b, c) = (xs[k - 1], xs[k], xs[k + 1]);
            ys[k] - ((c - b) * ys[k - 1] + (b - a) * ys[k + 1]) / (c - a)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn csv_line(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",") + "\n"
}

/// Model, grid and the advisory assumption report every model-based task writes.
struct Setting {
    model: HamiltonianModel,
    grid: TorusGrid,
}

fn setting(cfg: &ExperimentConfig, base: Option<&Path>, dir: &mut RunDir) -> Result<Setting, CliError> {
    let model = cfg.model(base)?;
    let grid = cfg.grid(&model)?;
    let report = check_assumptions(&model, ASSUMPTION_BOX, ASSUMPTION_SAMPLES, cfg.seed);
    dir.write_json("assumptions.json", &report)?;
    Ok(Setting { model, grid })
}

pub(crate) fn dispatch(task: Task, cfg: &ExperimentConfig, base: Option<&Path>, dir: &mut RunDir) -> TaskResult {
    match task {
        Task::Accept => accept(dir),
        Task::OneSided => one_sided(cfg, base, dir),
        _ => {
            let s = setting(cfg, base, dir)?;
            match task {
                Task::SolveCell => solve_cell_task(cfg, &s, dir),
                Task::Mather => mather(cfg, &s, dir),
                Task::SweepEps => sweep_eps(cfg, &s, dir),
                Task::SweepP => sweep_p(cfg, &s, dir),
                Task::DerivativeCheck => derivative_check(cfg, &s, dir),
                Task::Semiconvexity => semiconvexity(cfg, &s, dir),
                Task::Rate => rate(cfg, &s, dir),
                Task::LpCompare => lp_compare(cfg, &s, dir),
                Task::Accept | Task::OneSided => unreachable!("handled above"),
            }
        }
    }
}

fn cell(cfg: &ExperimentConfig, s: &Setting) -> Result<CellSolution, CliError> {
    let p = cfg.p(&s.model)?;
    Ok(solve_cell(&s.model, &s.grid, &p, cfg.eps()?, &cfg.params.solver)?)
}

fn solve_cell_task(cfg: &ExperimentConfig, s: &Setting, dir: &mut RunDir) -> TaskResult {
    let tol = &cfg.params.tolerances;
    let cell = cell(cfg, s)?;
    dir.record(cell.write(dir.root(), "cell")?);
    let mut checks = vec![Check::at_most("residual", cell.residual_linf, tol.residual)];
    if s.model.family() == Family::Free {
        let exact = 0.5 * cell.p.iter().map(|q| q * q).sum::<f64>();
        checks.push(Check::at_most("trivial_c", (cell.c - exact).abs(), tol.trivial));
    }
    Ok(finish(checks))
}

fn mather(cfg: &ExperimentConfig, s: &Setting, dir: &mut RunDir) -> TaskResult {
    let tol = &cfg.params.tolerances;
    let cell = cell(cfg, s)?;
    let mu = invariant_density(&s.model, &cell)?;
    dir.record(cell.write(dir.root(), "cell")?);
    dir.record(mu.write(dir.root(), "mather")?);
    let mass: f64 = mu.masses().iter().sum();
    Ok(finish(vec![
        Check::at_most("residual", cell.residual_linf, tol.residual),
        Check::at_most("holonomy", holonomy_residual(&mu, cell.eps), tol.holonomy),
        Check::at_most("mass", (mass - 1.0).abs(), tol.residual),
        Check::info("clipped_mass", mu.clipped_mass),
    ]))
}

fn sweep_eps(cfg: &ExperimentConfig, s: &Setting, dir: &mut RunDir) -> TaskResult {
    let tol = &cfg.params.tolerances;
    let p = cfg.p(&s.model)?;
    let eps_list = cfg.list("eps_list", &cfg.params.eps_list)?;
    let reports = derivative_sweep(&s.model, &s.grid, &p, &eps_list, &cfg.params.solver)?;
    let mut buf = Vec::new();
    write_derivative_csv(&reports, &mut buf)?;
    dir.write("sweep_eps.csv", &buf)?;
    emit_plotdata(dir, "c_of_eps", &reports.iter().map(|r| vec![r.eps, r.c]).collect::<Vec<_>>())?;
    emit_plotdata(
        dir,
        "c_prime_of_eps",
        &reports.iter().map(|r| vec![r.eps, r.c_prime_formula_laplacian]).collect::<Vec<_>>(),
    )?;
    Ok(finish(vec![
        Check::at_most("forms_gap", max_of(reports.iter().map(|r| r.discrepancy_forms)), tol.forms),
        Check::info("fd_gap", max_of(reports.iter().map(|r| r.discrepancy_fd))),
    ]))
}

#[derive(Serialize)]
struct SweepPoint {
    p: Vec<f64>,
    hbar: f64,
    /// Cell residual for `eps > 0`, simplex primal residual at `eps = 0`.
    residual: f64,
    oracle: Option<f64>,
}

/// `Hbar^eps(p)` along `p_list`: cell solves for `eps > 0`, the holonomic LP at `eps = 0`.
fn sweep_p(cfg: &ExperimentConfig, s: &Setting, dir: &mut RunDir) -> TaskResult {
    let tol = &cfg.params.tolerances;
    let eps = cfg.eps()?;
    if !(eps >= 0.0) {
        return Err(CliError::Validation(format!("sweep-p needs eps >= 0, got {eps}")));
    }
    let p_list = cfg.p_list(&s.model)?;
    let velocity = cfg.params.velocity.clone().unwrap_or_else(|| OneSidedOptions::default().velocity);
    let points = p_list
        .par_iter()
        .map(|p| -> Result<SweepPoint, CliError> {
            if eps > 0.0 {
                let c = solve_cell(&s.model, &s.grid, p, eps, &cfg.params.solver)?;
                return Ok(SweepPoint { p: p.clone(), hbar: c.c, residual: c.residual_linf, oracle: None });
            }
            let lp = build_lp(&s.model, &s.grid, &velocity, p, 0.0)?;
            let res = solve_lp(&lp, &LpOptions::default())?;
            if res.status != LpStatus::Optimal {
                return Err(CliError::Numerical {
                    message: format!("holonomic LP at p = {p:?} ended {:?}", res.status),
                    diagnostics: res.diagnostics,
                });
            }
            let oracle = inviscid_oracle(&s.model, p[0]).ok().filter(|_| p.len() == 1).map(|o| o.hbar);
            Ok(SweepPoint { p: p.clone(), hbar: res.hbar(), residual: res.primal_residual, oracle })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let n = s.model.dim();
    let mut text = (0..n).map(|k| format!("p{k}")).collect::<Vec<_>>().join(",") + ",hbar\n";
    for pt in &points {
        let mut row = pt.p.clone();
        row.push(pt.hbar);
        text.push_str(&csv_line(&row));
    }
    dir.write("sweep_p.csv", text.as_bytes())?;
    dir.write_json("sweep_p.json", &points)?;

    let mut checks = vec![Check::at_most("residual", max_of(points.iter().map(|pt| pt.residual)), tol.residual)];
    if n == 1 {
        let mut sorted: Vec<(f64, f64)> = points.iter().map(|pt| (pt.p[0], pt.hbar)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        emit_plotdata(dir, "hbar_of_p", &sorted.iter().map(|&(p, h)| vec![p, h]).collect::<Vec<_>>())?;
        let (xs, ys): (Vec<f64>, Vec<f64>) = sorted.into_iter().unzip();
        if xs.len() >= 3 {
            checks.push(Check::at_most("convexity", convexity_violation(&xs, &ys), tol.convexity));
        }
    }
    let oracle_gaps: Vec<f64> = points.iter().filter_map(|pt| pt.oracle.map(|o| (o - pt.hbar).abs())).collect();
    if !oracle_gaps.is_empty() {
        checks.push(Check::at_most("oracle_gap", max_of(oracle_gaps), tol.lp_gap));
    }
    Ok(finish(checks))
}

fn derivative_check(cfg: &ExperimentConfig, s: &Setting, dir: &mut RunDir) -> TaskResult {
    let tol = &cfg.params.tolerances;
    let cell = cell(cfg, s)?;
    let mu = invariant_density(&s.model, &cell)?;
    let report = c_prime(&s.model, &cell, &mu, &cfg.params.solver)?;
    let gradient = grad_hbar_eps(&s.model, &s.grid, &cell.p, cell.eps, &cfg.params.solver)?;
    #[derive(Serialize)]
    struct Out<'a> {
        derivative: &'a ergodic_core::derivative::DerivativeReport,
        gradient: &'a ergodic_core::derivative::GradientCheck,
    }
    dir.write_json("derivative.json", &Out { derivative: &report, gradient: &gradient })?;
    Ok(finish(vec![
        Check::at_most("forms_gap", report.discrepancy_forms, tol.forms),
        Check::at_most("fd_gap", report.discrepancy_fd, tol.fd),
        Check::at_most("gradient_gap", gradient.gap, tol.gradient),
    ]))
}

fn semiconvexity(cfg: &ExperimentConfig, s: &Setting, dir: &mut RunDir) -> TaskResult {
    let tol = &cfg.params.tolerances;
    let p = cfg.p(&s.model)?;
    let etas = cfg.list("etas", &cfg.params.etas)?;
    let probe = semiconvexity_probe(&s.model, &s.grid, &p, cfg.eps()?, &etas, &cfg.params.solver)?;
    dir.write_json("semiconvexity.json", &probe)?;
    let mut text = String::from("eta,second_difference,bound\n");
    for r in &probe.rows {
        text.push_str(&csv_line(&[r.eta, r.second_difference, r.bound]));
    }
    dir.write("semiconvexity.csv", text.as_bytes())?;
    let slack = probe.rows.iter().map(|r| r.second_difference - r.bound).fold(f64::INFINITY, f64::min);
    Ok(finish(vec![
        Check::at_least("semiconvexity_slack", slack, -tol.semiconvexity),
        Check::info("eta_exponent", probe.eta_exponent.unwrap_or(f64::NAN)),
    ]))
}

fn rate(cfg: &ExperimentConfig, s: &Setting, dir: &mut RunDir) -> TaskResult {
    let samples = match &cfg.params.eps_samples {
        Some(_) => cfg.list("eps_samples", &cfg.params.eps_samples)?,
        None => (3..=7).map(|k| 2f64.powi(-k)).collect(),
    };
    let fit = rate_probe(&s.model, &s.grid, &samples, cfg.params.c0_reference, &cfg.params.solver)?;
    dir.write_json("rate.json", &fit)?;
    let mut text = String::from("eps,c,ratio\n");
    for k in 0..fit.eps_samples.len() {
        text.push_str(&csv_line(&[fit.eps_samples[k], fit.c_values[k], fit.ratios[k]]));
    }
    dir.write("rate.csv", text.as_bytes())?;
    let series: Vec<Vec<f64>> = fit.eps_samples.iter().zip(&fit.c_values).map(|(&e, &c)| vec![e, c]).collect();
    emit_plotdata(dir, "c_of_eps", &series)?;
    let mut checks = vec![
        Check::flag("rate_bounded", fit.slope_bound.is_finite()),
        Check::info("slope_bound", fit.slope_bound),
        Check::info("nonincreasing", if fit.nonincreasing { 1.0 } else { 0.0 }),
        Check::info("settling", if fit.settling { 1.0 } else { 0.0 }),
    ];
    if let Some(ok) = fit.sandwich_ok {
        checks.push(Check::flag("sandwich", ok));
    }
    Ok(finish(checks))
}

fn lp_compare(cfg: &ExperimentConfig, s: &Setting, dir: &mut RunDir) -> TaskResult {
    let p = cfg.p(&s.model)?;
    let velocity = cfg.params.velocity.clone().unwrap_or_else(|| OneSidedOptions::default().velocity);
    let gap = lp_vs_pde_gap(&s.model, &p, cfg.eps()?, &s.grid, &velocity)?;
    dir.write_json("lp_compare.json", &gap)?;
    Ok(finish(vec![Check::at_most("lp_gap", gap.gap, cfg.params.tolerances.lp_gap)]))
}

/// Inviscid one-sided derivatives; the LP grid comes from `params.one_sided`, not from `grid`.
fn one_sided(cfg: &ExperimentConfig, base: Option<&Path>, dir: &mut RunDir) -> TaskResult {
    let tol = &cfg.params.tolerances;
    let model = cfg.model(base)?;
    dir.write_json("assumptions.json", &check_assumptions(&model, ASSUMPTION_BOX, ASSUMPTION_SAMPLES, cfg.seed))?;
    let p_list = cfg.p_list(&model)?;
    let xi = match &cfg.params.xi {
        Some(xi) if xi.len() == model.dim() => xi.clone(),
        Some(xi) => {
            return Err(CliError::Validation(format!(
                "params.xi has {} components, expected {}",
                xi.len(),
                model.dim()
            )))
        }
        None if model.dim() == 1 => vec![1.0],
        None => return Err(CliError::Validation("this task needs `params.xi` in the config".into())),
    };
    let opts = cfg.params.one_sided.clone().unwrap_or_default();
    let reports =
        p_list.par_iter().map(|p| one_sided_dhbar_inviscid(&model, p, &xi, &opts)).collect::<Result<Vec<_>, _>>()?;
    dir.write_json("one_sided.json", &reports)?;

    let mut checks = vec![Check::at_most("ordering", max_of(reports.iter().map(|r| r.dminus - r.dplus)), tol.ordering)];
    if model.dim() == 1 {
        let rows: Vec<Vec<f64>> = reports.iter().map(|r| vec![r.p[0], r.dminus, r.dplus]).collect();
        emit_plotdata(dir, "one_sided", &rows)?;
        let mut flat = Vec::new();
        for r in &reports {
            if let Ok(o) = inviscid_oracle(&model, r.p[0]) {
                if r.p[0].abs() < o.flat_halfwidth {
                    flat.push(r.dminus.abs().max(r.dplus.abs()));
                }
            }
        }
        if !flat.is_empty() {
            checks.push(Check::at_most("flat_derivative", max_of(flat), tol.flat));
        }
    }
    let gaps: Vec<f64> = reports.iter().filter_map(|r| r.oracle_gap).collect();
    if !gaps.is_empty() {
        checks.push(Check::at_most("oracle_gap", max_of(gaps), tol.one_sided));
    }
    Ok(finish(checks))
}

fn accept(dir: &mut RunDir) -> TaskResult {
    let report = acceptance::run_all()?;
    dir.write_json("acceptance.json", &report)?;
    let summary = report.summary_lines();
    dir.write("acceptance.txt", (summary.join("\n") + "\n").as_bytes())?;
    Ok(TaskOutput { checks: report.check_lines(), passed: report.passed(), console: summary })
}
