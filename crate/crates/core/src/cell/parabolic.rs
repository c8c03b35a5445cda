use super::{check_setting, finish, hamiltonian_and_drift, node_points, CellSolution, Method, SolverOptions};
use crate::error::{LabError, Result};
use crate::hamiltonian::HamiltonianModel;
use crate::linalg::{BorderedBandLu, SparseRows};
use crate::torus::{gradient, pairwise_sum, GridField, TorusGrid};

/// Long-time march of `w_t + H(x, p + Dw) - eps Lap w = 0`, implicit in the diffusion and
/// explicit in the Hamiltonian.
///
/// A steady profile of the scheme solves the discrete cell problem exactly, so the limit
/// agrees with [`solve_cell`](super::solve_cell) up to the stopping tolerance. The constant
/// is the mean of `-(w^{k+1} - w^k)/dt` over the final tenth of the steps taken.
pub fn parabolic_march(
    model: &HamiltonianModel,
    grid: &TorusGrid,
    p: &[f64],
    eps: f64,
    opts: &SolverOptions,
) -> Result<CellSolution> {
    opts.validate()?;
    check_setting(model, grid, p, eps)?;
    let points = node_points(grid);
    let n = grid.len();
    let mut w = GridField::zeros(grid, 1);

    let du = gradient(&w)?;
    let (_, b0) = hamiltonian_and_drift(model, &points, p, du.values());
    let h_min = (0..grid.dim()).map(|a| grid.spacing(a)).fold(f64::INFINITY, f64::min);
    let step_for = |bmax: f64| {
        let mut dt = opts.parabolic_dt;
        if bmax > 0.0 {
            dt = dt.min(0.5 * eps / (bmax * bmax)).min(0.5 * h_min / bmax);
        }
        dt
    };
    let bmax0 = b0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    // Gradients grow from the flat start; leave room for that in the explicit step.
    let dt = step_for(bmax0.max(1.0) * 2.0);

    let mut sys = SparseRows::new(n);
    for i in 0..n {
        sys.add(i, i, 1.0);
        for (j, wgt) in grid.laplacian_entries(i) {
            sys.add(i, j, -dt * eps * wgt);
        }
    }
    let lu = BorderedBandLu::factor(&sys, &grid.wrap_border())?;

    let steps = (opts.parabolic_t / dt).ceil() as usize;
    let mut c_hist: Vec<f64> = Vec::with_capacity(steps);
    let mut spread = f64::INFINITY;
    let mut taken = 0;
    for k in 0..steps {
        let du = gradient(&w)?;
        let (h, b) = hamiltonian_and_drift(model, &points, p, du.values());
        let bmax = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if step_for(bmax) < 0.5 * dt {
            return Err(LabError::numerical_with(
                "parabolic march left its stability region",
                vec![format!("step {k}"), format!("max |b| = {bmax}")],
            ));
        }
        let rhs: Vec<f64> = w.values().iter().zip(&h).map(|(wv, hv)| wv - dt * hv).collect();
        let next = lu.solve(&rhs);
        let incr: Vec<f64> = next.iter().zip(w.values()).map(|(a, b)| -(a - b) / dt).collect();
        let lo = incr.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = incr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        spread = hi - lo;
        c_hist.push(pairwise_sum(&incr) / n as f64);
        if !spread.is_finite() {
            return Err(LabError::numerical("parabolic march blew up"));
        }
        // Re-centre to keep the iterate bounded; the constant drift is recorded in c_hist.
        let shift = next[0];
        w = GridField::scalar(grid.clone(), next.into_iter().map(|v| v - shift).collect())?;
        taken = k + 1;
        if spread <= opts.tol && taken >= 20 {
            break;
        }
    }
    let window = (taken / 10).max(1);
    let tail = &c_hist[taken - window..];
    let c = pairwise_sum(tail) / window as f64;
    let drift = tail.iter().fold(0.0_f64, |m, v| m.max((v - c).abs()));
    if spread > opts.tol || drift > opts.tol {
        return Err(LabError::numerical_with(
            "parabolic march did not reach a steady profile",
            vec![
                format!("last estimate c = {c}"),
                format!("increment spread {spread:e}"),
                format!("window drift {drift:e}"),
            ],
        ));
    }
    finish(model, w, p, eps, c, taken, Method::Parabolic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::solve_cell;

    #[test]
    fn free_start_is_stationary() {
        let m = HamiltonianModel::free(1).unwrap();
        let g = TorusGrid::new(&[32]).unwrap();
        let s = parabolic_march(&m, &g, &[0.0], 0.1, &SolverOptions::default()).unwrap();
        assert_eq!(s.c, 0.0);
        assert_eq!(s.method, Method::Parabolic);
    }

    #[test]
    fn pendulum_limit_matches_newton() {
        let m = HamiltonianModel::pendulum();
        let g = TorusGrid::new(&[64]).unwrap();
        let opts = SolverOptions::default();
        let par = parabolic_march(&m, &g, &[0.0], 0.2, &opts).unwrap();
        let newton = solve_cell(&m, &g, &[0.0], 0.2, &opts).unwrap();
        assert!((par.c - newton.c).abs() <= 1e-6, "{} vs {}", par.c, newton.c);
    }
}
