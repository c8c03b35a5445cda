//! Stochastic Mather measures on the grid.
//!
//! A [`GraphMeasure`] is the invariant density `theta` carried on the graph
//! `v = D_xi H(x, p + Du)`; a [`ProductMeasure`] is a weight table on `x`-nodes times a
//! velocity box. Both are tested against the nodal basis through [`holonomy_residual`].

mod product;

use std::path::Path;

use serde::Serialize;

use crate::cell::{assemble_operator, drift_field, solver_border, CellSolution};
use crate::error::{LabError, Result};
use crate::hamiltonian::HamiltonianModel;
use crate::linalg::BorderedBandLu;
use crate::torus::{integrate, io, pairwise_sum, GridField, TorusGrid};

pub use product::{ProductMeasure, VelocityGrid};

/// Aggregate negative mass tolerated (and clipped) in a computed density.
pub const NEGATIVE_MASS_LIMIT: f64 = 1e-10;

/// Callback receiving an atom `(x, v, w)`.
pub type AtomVisitor<'a> = dyn FnMut(&[f64], &[f64], f64) + 'a;

/// Common interface of the two measure representations.
pub trait Measure: Sized {
    fn eps(&self) -> f64;

    /// Calls `visit(x, v, w)` for every atom with positive weight, in a fixed order.
    /// The atom's mass is `w * atom_scale()`.
    fn for_each_atom(&self, visit: &mut AtomVisitor<'_>);

    fn atom_scale(&self) -> f64 {
        1.0
    }

    /// `r_k = integral of (v.D phi_k - eps_test Lap phi_k) dmu` for every nodal basis function.
    fn holonomy_vector(&self, eps_test: f64) -> Vec<f64>;

    fn scaled(&self, lambda: f64) -> Result<Self>;
}

/// Invariant density `theta` on the graph of the optimal feedback.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphMeasure {
    pub theta: GridField,
    /// `v(x) = D_xi H(x, p + Du(x))`, node-major.
    pub vfield: GridField,
    pub eps: f64,
    pub p: Vec<f64>,
    /// Negative mass removed by clipping before the final normalization.
    pub clipped_mass: f64,
}

impl GraphMeasure {
    pub fn grid(&self) -> &TorusGrid {
        self.theta.grid()
    }

    /// Node masses `theta_i prod h_k`.
    pub fn masses(&self) -> Vec<f64> {
        let vol = self.grid().cell_volume();
        self.theta.values().iter().map(|t| t * vol).collect()
    }

    pub fn to_json(&self, theta_ref: &str, vfield_ref: &str) -> serde_json::Value {
        #[derive(Serialize)]
        struct Out<'a> {
            eps: f64,
            p: &'a [f64],
            clipped_mass: f64,
            theta: &'a str,
            vfield: &'a str,
        }
        serde_json::to_value(Out {
            eps: self.eps,
            p: &self.p,
            clipped_mass: self.clipped_mass,
            theta: theta_ref,
            vfield: vfield_ref,
        })
        .expect("graph measure serializes")
    }

    /// Writes `<stem>.json`, `<stem>_theta.csv` and `<stem>_vfield.csv`; returns the file names.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<String>> {
        let theta_name = format!("{stem}_theta.csv");
        let v_name = format!("{stem}_vfield.csv");
        let json_name = format!("{stem}.json");
        io::write_field_csv(&self.theta, std::fs::File::create(dir.join(&theta_name))?)?;
        io::write_field_csv(&self.vfield, std::fs::File::create(dir.join(&v_name))?)?;
        let text = serde_json::to_string_pretty(&self.to_json(&theta_name, &v_name))?;
        std::fs::write(dir.join(&json_name), text + "\n")?;
        Ok(vec![json_name, theta_name, v_name])
    }
}

impl Measure for GraphMeasure {
    fn eps(&self) -> f64 {
        self.eps
    }

    fn for_each_atom(&self, visit: &mut AtomVisitor<'_>) {
        let grid = self.grid();
        for (i, &t) in self.theta.values().iter().enumerate() {
            if t > 0.0 {
                visit(&grid.point(i), self.vfield.at(i), t);
            }
        }
    }

    fn atom_scale(&self) -> f64 {
        self.grid().cell_volume()
    }

    fn holonomy_vector(&self, eps_test: f64) -> Vec<f64> {
        // Row i of L holds v_i.D phi_k(x_i) - eps Lap phi_k(x_i) in column k, so r = L^T m.
        let op = assemble_operator(self.grid(), self.vfield.values(), eps_test);
        op.transpose().mul_vec(&self.masses())
    }

    fn scaled(&self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(GraphMeasure {
            theta: self.theta.clone(),
            vfield: self.vfield.scaled(lambda),
            eps: lambda * self.eps,
            p: self.p.clone(),
            clipped_mass: self.clipped_mass,
        })
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(LabError::Domain(format!("scaling factor must be > 0, got {lambda}")));
    }
    Ok(())
}

/// `integral f(x, v) dmu`.
pub fn measure_integrate<M: Measure>(mu: &M, f: impl Fn(&[f64], &[f64]) -> f64) -> Result<f64> {
    let mut terms = Vec::new();
    let mut bad: Option<(Vec<f64>, Vec<f64>)> = None;
    mu.for_each_atom(&mut |x, v, m| {
        let y = f(x, v);
        if !y.is_finite() && bad.is_none() {
            bad = Some((x.to_vec(), v.to_vec()));
        }
        terms.push(y * m);
    });
    if let Some((x, v)) = bad {
        return Err(LabError::Domain(format!("observable is not finite at x = {x:?}, v = {v:?}")));
    }
    Ok(pairwise_sum(&terms) * mu.atom_scale())
}

/// Max-norm of the discrete holonomy functional over the nodal basis.
pub fn holonomy_residual<M: Measure>(mu: &M, eps_test: f64) -> f64 {
    mu.holonomy_vector(eps_test).iter().fold(0.0_f64, |m, r| m.max(r.abs()))
}

/// Velocity rescaling `v -> lambda v`, which maps eps-holonomic measures to
/// `lambda eps`-holonomic ones.
pub fn scale_measure<M: Measure>(mu: &M, lambda: f64) -> Result<M> {
    mu.scaled(lambda)
}

/// Kernel of the transpose of the linearized cell operator, normalized to a probability density.
///
/// The solve pins `theta_0 = 1` in place of the first adjoint row; rows of `L^T` sum to zero,
/// so the dropped row holds automatically when the kernel is simple. A second solve pinned at
/// another node detects a kernel of higher dimension.
pub fn invariant_density(model: &HamiltonianModel, cell: &CellSolution) -> Result<GraphMeasure> {
    if !(cell.eps > 0.0) {
        return Err(LabError::Precondition("invariant density needs eps > 0".into()));
    }
    let grid = cell.grid();
    let vfield = drift_field(model, &cell.p, &cell.u)?;
    let adjoint = assemble_operator(grid, vfield.values(), cell.eps).transpose();
    let n = grid.len();

    let pinned_solve = |pin: usize| -> Result<Vec<f64>> {
        let mut a = adjoint.clone();
        a.set_row(pin, vec![(pin, 1.0)]);
        let mut rhs = vec![0.0; n];
        rhs[pin] = 1.0;
        let lu = BorderedBandLu::factor(&a, &solver_border(grid))?;
        let raw = lu.solve(&rhs);
        let total = pairwise_sum(&raw) * grid.cell_volume();
        if !(total.is_finite() && total != 0.0) {
            return Err(LabError::numerical("adjoint kernel has zero total mass"));
        }
        Ok(raw.into_iter().map(|t| t / total).collect())
    };
    let mut theta = pinned_solve(0)?;
    let other = pinned_solve(n / 2)?;
    let scale = theta.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
    let spread = theta.iter().zip(&other).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    if spread > 1e-6 * scale {
        return Err(LabError::numerical_with(
            "adjoint kernel is not one-dimensional",
            vec![format!("pinned solves differ by {spread:e} (max theta {scale:e})")],
        ));
    }
    let defect = adjoint.mul_vec(&theta).iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let op_scale = (0..n).map(|i| adjoint.row(i).iter().map(|e| e.1.abs()).sum::<f64>()).fold(0.0_f64, f64::max);
    if defect > 1e-9 * op_scale * scale {
        return Err(LabError::numerical_with(
            "adjoint residual too large for a kernel vector",
            vec![format!("max |L^T theta| = {defect:e}")],
        ));
    }

    let vol = grid.cell_volume();
    let negative = pairwise_sum(&theta.iter().map(|t| (-t).max(0.0)).collect::<Vec<_>>()) * vol;
    if negative > NEGATIVE_MASS_LIMIT {
        return Err(LabError::numerical_with(
            "invariant density has negative mass; the grid under-resolves the drift",
            vec![format!("negative mass {negative:e}")],
        ));
    }
    if negative > 0.0 {
        theta.iter_mut().for_each(|t| *t = t.max(0.0));
        let total = pairwise_sum(&theta) * vol;
        theta.iter_mut().for_each(|t| *t /= total);
    }
    let theta = GridField::scalar(grid.clone(), theta)?;
    debug_assert!((integrate(&theta)? - 1.0).abs() < 1e-12);
    Ok(GraphMeasure { theta, vfield, eps: cell.eps, p: cell.p.clone(), clipped_mass: negative })
}

/// Largest `|D_xi H(x, xi)|` over the grid nodes and `|xi| <= p_radius + grad_bound`.
///
/// Momenta are sampled on a uniform line in 1-D and on 33 concentric circles of 128 points
/// otherwise; the boundary of the ball is always included.
pub fn support_radius(model: &HamiltonianModel, grid: &TorusGrid, p_radius: f64, grad_bound: f64) -> Result<f64> {
    if !(p_radius >= 0.0 && grad_bound >= 0.0) {
        return Err(LabError::Domain("support radius needs p_radius, grad_bound >= 0".into()));
    }
    if grid.dim() != model.dim() {
        return Err(LabError::Config("grid and model dimensions differ".into()));
    }
    let r = p_radius + grad_bound;
    let samples = momentum_ball(model.dim(), r);
    let mut best = 0.0_f64;
    let mut g = vec![0.0; model.dim()];
    for i in 0..grid.len() {
        let x = grid.point(i);
        for xi in &samples {
            model.dxi_h(&x, xi, &mut g);
            best = best.max(g.iter().map(|c| c * c).sum::<f64>().sqrt());
        }
    }
    Ok(best)
}

pub(crate) fn momentum_ball(dim: usize, r: f64) -> Vec<Vec<f64>> {
    match dim {
        1 => (0..=400).map(|k| vec![r * (k as f64 / 200.0 - 1.0)]).collect(),
        _ => {
            let mut out = vec![vec![0.0; dim]];
            for k in 1..=32 {
                let rho = r * k as f64 / 32.0;
                for a in 0..128 {
                    let t = 2.0 * std::f64::consts::PI * a as f64 / 128.0;
                    let mut xi = vec![0.0; dim];
                    xi[0] = rho * t.cos();
                    xi[1] = rho * t.sin();
                    out.push(xi);
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{solve_cell, SolverOptions};
    use crate::hamiltonian::TrigPoly;

    #[test]
    fn free_hamiltonian_density_is_uniform() {
        let m = HamiltonianModel::free(1).unwrap();
        let g = TorusGrid::new(&[32]).unwrap();
        for p in [0.0, 0.7] {
            let cell = solve_cell(&m, &g, &[p], 0.1, &SolverOptions::default()).unwrap();
            let mu = invariant_density(&m, &cell).unwrap();
            assert!(mu.theta.values().iter().all(|t| (t - 1.0).abs() <= 1e-12));
            let mean_v = measure_integrate(&mu, |_, v| v[0]).unwrap();
            assert!((mean_v - p).abs() < 1e-14);
        }
    }

    #[test]
    fn unit_scaling_is_the_identity() {
        let m = HamiltonianModel::pendulum();
        let g = TorusGrid::new(&[64]).unwrap();
        let cell = solve_cell(&m, &g, &[0.2], 0.2, &SolverOptions::default()).unwrap();
        let mu = invariant_density(&m, &cell).unwrap();
        assert_eq!(scale_measure(&mu, 1.0).unwrap(), mu);
        assert!(scale_measure(&mu, 0.0).is_err());
    }

    #[test]
    fn support_radius_examples() {
        let g = TorusGrid::new(&[64]).unwrap();
        let free = HamiltonianModel::free(1).unwrap();
        assert_eq!(support_radius(&free, &g, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(support_radius(&HamiltonianModel::pendulum(), &g, 0.0, 2.0).unwrap(), 2.0);
        let drifted =
            HamiltonianModel::drifted_quadratic(1, 1.0, vec![TrigPoly::sine(1, 1.0)], TrigPoly::constant(0.0)).unwrap();
        assert!((support_radius(&drifted, &g, 0.0, 2.0).unwrap() - 3.0).abs() < 1e-15);
    }
}
