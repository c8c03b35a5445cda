use crate::error::{LabError, Result};
use crate::hamiltonian::HamiltonianModel;
use crate::linalg::{BorderedBandLu, SparseRows};
use crate::torus::{integrate, pairwise_sum, GridField, TorusGrid};

/// Principal eigenpair of `2 eps^2 Lap - V` on the grid.
#[derive(Clone, Debug)]
pub struct HopfCole {
    /// Largest eigenvalue, equal to the ergodic constant of `|xi|^2/2 - V` at `p = 0`.
    pub value: f64,
    /// Positive eigenfunction with `integral phi^2 = 1`.
    pub phi: GridField,
    pub iterations: usize,
}

impl HopfCole {
    /// `phi^2 / integral phi^2`, the invariant density predicted by the transform.
    pub fn density(&self) -> GridField {
        self.phi.map(|v| v * v)
    }
}

/// Hopf–Cole oracle for `H = |xi|^2/2 - V` at `p = 0`.
pub fn hopf_cole_eigenvalue(model: &HamiltonianModel, grid: &TorusGrid, eps: f64) -> Result<HopfCole> {
    if !model.is_quadratic_mechanical() {
        return Err(LabError::Precondition("the Hopf–Cole oracle needs H = |xi|^2/2 - V".into()));
    }
    if grid.dim() != model.dim() {
        return Err(LabError::Config("grid and model dimensions differ".into()));
    }
    let v: Vec<f64> = (0..grid.len()).map(|i| model.potential_at(&grid.point(i))).collect();
    hopf_cole_for_potential(grid, eps, &v)
}

/// Largest eigenvalue of `2 eps^2 Lap - diag(v)` by shifted inverse iteration with
/// Rayleigh-quotient shift updates.
pub fn hopf_cole_for_potential(grid: &TorusGrid, eps: f64, v: &[f64]) -> Result<HopfCole> {
    if !(eps > 0.0) {
        return Err(LabError::Precondition("Hopf–Cole oracle needs eps > 0".into()));
    }
    let n = grid.len();
    let mut m = SparseRows::new(n);
    for i in 0..n {
        for (j, w) in grid.laplacian_entries(i) {
            m.add(i, j, 2.0 * eps * eps * w);
        }
        m.add(i, i, -v[i]);
    }
    let border = grid.wrap_border();
    let dot = |a: &[f64], b: &[f64]| pairwise_sum(&a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>());
    let scale = (0..n).map(|i| m.row(i).iter().map(|e| e.1.abs()).sum::<f64>()).fold(0.0_f64, f64::max);

    // The spectrum lies below -min v, so this shift sits above the top eigenvalue.
    let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sigma = -vmin + 1e-3 * (1.0 + scale.sqrt());
    let mut x = vec![1.0; n];
    let norm0 = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|e| *e /= norm0);
    let mut lambda = f64::NAN;
    let mut lu: Option<BorderedBandLu> = None;
    for it in 1..=200 {
        if lu.is_none() {
            let mut shifted = m.clone();
            for i in 0..n {
                shifted.add(i, i, -sigma);
            }
            match BorderedBandLu::factor(&shifted, &border) {
                Ok(f) => lu = Some(f),
                // The shift hit an eigenvalue to working precision; x is already converged.
                Err(_) => break,
            }
        }
        let y = lu.as_ref().expect("factored").solve(&x);
        let ny = dot(&y, &y).sqrt();
        if !ny.is_finite() || ny == 0.0 {
            return Err(LabError::numerical_with(
                "inverse iteration broke down",
                vec![format!("iteration {it}"), format!("shift {sigma}")],
            ));
        }
        x = y.into_iter().map(|e| e / ny).collect();
        let mx = m.mul_vec(&x);
        lambda = dot(&x, &mx);
        let r: Vec<f64> = mx.iter().zip(&x).map(|(a, b)| a - lambda * b).collect();
        let rn = dot(&r, &r).sqrt();
        if rn <= 1e-14 * scale.max(1.0) {
            return finalize(grid, x, lambda, it);
        }
        if rn <= 1e-4 * scale.max(1.0) {
            // Rayleigh shift, nudged upward so the top eigenvalue stays the closest one.
            sigma = lambda + rn;
            lu = None;
        }
    }
    if lambda.is_finite() {
        return finalize(grid, x, lambda, 200);
    }
    Err(LabError::numerical("inverse iteration did not converge"))
}

fn finalize(grid: &TorusGrid, mut x: Vec<f64>, value: f64, iterations: usize) -> Result<HopfCole> {
    if pairwise_sum(&x) < 0.0 {
        x.iter_mut().for_each(|e| *e = -*e);
    }
    if let Some(pos) = x.iter().position(|&e| e <= 0.0) {
        return Err(LabError::numerical_with(
            "principal eigenvector is not positive",
            vec![format!("node {pos} value {:e}", x[pos])],
        ));
    }
    let phi = GridField::scalar(grid.clone(), x)?;
    let norm2 = integrate(&phi.map(|v| v * v))?;
    let phi = phi.scaled(1.0 / norm2.sqrt());
    Ok(HopfCole { value, phi, iterations })
}
