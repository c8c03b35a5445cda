use serde::Serialize;

use super::{HamiltonianModel, Kinetic};
use crate::error::{LabError, Result};
use crate::linalg::DenseLu;

/// Gradient tolerance `|v - D_xi H(x, xi)|` of the numerical conjugate.
pub const CONJUGATE_TOL: f64 = 1e-10;
const MAX_ITER: usize = 200;

/// `L(x, v)` together with its maximizer and derivatives.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LagrangianValue {
    pub value: f64,
    /// Maximizer `xi*` of `xi.v - H(x, xi)`.
    pub argmax_xi: Vec<f64>,
    /// `D_v L(x, v)`, equal to `xi*`.
    pub dval_dv: Vec<f64>,
    /// `D_vv L(x, v)`, row-major; `+inf` on the diagonal where `D_xi xi H(x, xi*)` is singular.
    pub d2val_dv2: Vec<f64>,
}

/// `sup_xi xi.v - f(xi)` for a strictly convex `f` by damped Newton ascent from `xi = 0`.
///
/// `f(xi, grad, hess)` returns the value and fills the gradient and row-major Hessian.
/// Returns `(value, maximizer)`; converged when `|v - grad f(xi)| <= CONJUGATE_TOL`.
pub fn convex_conjugate<F>(n: usize, f: F, v: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: Fn(&[f64], &mut [f64], &mut [f64]) -> f64,
{
    let mut xi = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut hs = vec![0.0; n * n];
    let mut gt = vec![0.0; n];
    let mut ht = vec![0.0; n * n];
    let objective = |xi: &[f64], fv: f64| xi.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() - fv;
    let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();

    let f0 = f(&xi, &mut g, &mut hs);
    let mut obj = objective(&xi, f0);
    for iter in 0..MAX_ITER {
        let r: Vec<f64> = v.iter().zip(&g).map(|(a, b)| a - b).collect();
        let rn = norm(&r);
        if !rn.is_finite() || !obj.is_finite() {
            break;
        }
        if rn <= CONJUGATE_TOL {
            // One undamped polish step, kept only if it reduces the residual.
            if let Ok(lu) = DenseLu::factor(n, hs.clone()) {
                let mut d = r.clone();
                lu.solve_in_place(&mut d);
                let trial: Vec<f64> = xi.iter().zip(&d).map(|(a, b)| a + b).collect();
                let ft = f(&trial, &mut gt, &mut ht);
                let rt: Vec<f64> = v.iter().zip(&gt).map(|(a, b)| a - b).collect();
                if norm(&rt) < rn {
                    return Ok((objective(&trial, ft), trial));
                }
            }
            return Ok((obj, xi));
        }
        // Levenberg shift keeps the step an ascent direction where the Hessian degenerates.
        let scale = hs.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let mut shifted = hs.clone();
        let lambda = if crate::linalg::sym_eigenvalues(n, &hs)[0] > 1e-8 * (1.0 + scale) { 0.0 } else { 1e-8 + rn };
        for i in 0..n {
            shifted[i * n + i] += lambda;
        }
        let lu = DenseLu::factor(n, shifted)?;
        let mut d = r.clone();
        lu.solve_in_place(&mut d);
        let slope: f64 = r.iter().zip(&d).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = xi.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let ft = f(&trial, &mut gt, &mut ht);
            let ot = objective(&trial, ft);
            // Near the maximizer the objective gain drops below round-off; the residual
            // still certifies progress there.
            let rt = v.iter().zip(&gt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let gains = ot >= obj + 1e-4 * t * slope;
            let flat = ot >= obj - 4.0 * f64::EPSILON * (1.0 + obj.abs());
            if ot.is_finite() && (gains || (flat && rt <= (1.0 - 1e-4 * t) * rn)) {
                xi = trial;
                obj = ot;
                g.copy_from_slice(&gt);
                hs.copy_from_slice(&ht);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // The objective is flat to round-off along the step; accept a residual that is
            // already at the noise floor of the ascent.
            if rn <= 1e3 * CONJUGATE_TOL {
                return Ok((obj, xi));
            }
            return Err(LabError::numerical_with(
                "Legendre ascent line search failed",
                vec![format!("iteration {iter}"), format!("xi = {xi:?}"), format!("|v - DH| = {rn:e}")],
            ));
        }
    }
    Err(LabError::numerical_with(
        "Legendre ascent did not converge",
        vec![format!("last xi = {xi:?}"), format!("v = {v:?}")],
    ))
}

/// `L(x, v) = sup_xi xi.v - H(x, xi)`.
///
/// Quadratic kinetic terms use the closed-form conjugate; higher powers use
/// [`convex_conjugate`].
pub fn legendre(model: &HamiltonianModel, x: &[f64], v: &[f64]) -> Result<LagrangianValue> {
    model.check_point(x, v, "v")?;
    let n = model.dim();
    let mut b = vec![0.0; n];
    if let Some(drift) = model.drift() {
        for (bc, d) in b.iter_mut().zip(drift) {
            *bc = d.value(x);
        }
    }
    let w: Vec<f64> = v.iter().zip(&b).map(|(a, c)| a - c).collect();
    let not_convex = || LabError::Precondition("Legendre transform needs a Hamiltonian strictly convex in xi".into());
    let pot = model.potential_at(x);

    let (value, xi, hess_l) = match model.kinetic() {
        Kinetic::Power { q: 2, scale } => {
            if *scale <= 0.0 {
                return Err(not_convex());
            }
            let xi: Vec<f64> = w.iter().map(|c| c / scale).collect();
            let value = w.iter().map(|c| c * c).sum::<f64>() / (2.0 * scale) + pot;
            let mut hl = vec![0.0; n * n];
            for i in 0..n {
                hl[i * n + i] = 1.0 / scale;
            }
            (value, xi, hl)
        }
        Kinetic::Quadratic { a } => {
            if crate::linalg::sym_eigenvalues(n, a)[0] <= 0.0 {
                return Err(not_convex());
            }
            let lu = DenseLu::factor(n, a.clone())?;
            let mut xi = w.clone();
            lu.solve_in_place(&mut xi);
            let value = 0.5 * w.iter().zip(&xi).map(|(p, q)| p * q).sum::<f64>() + pot;
            (value, xi, lu.inverse())
        }
        Kinetic::Power { .. } => {
            let (value, xi) = convex_conjugate(
                n,
                |xi, g, hs| {
                    model.dxi_h(x, xi, g);
                    model.d2xi_h(x, xi, hs);
                    model.h(x, xi)
                },
                v,
            )?;
            let mut hs = vec![0.0; n * n];
            model.d2xi_h(x, &xi, &mut hs);
            let hl = match DenseLu::factor(n, hs) {
                Ok(lu) => lu.inverse(),
                Err(_) => {
                    let mut hl = vec![0.0; n * n];
                    for i in 0..n {
                        hl[i * n + i] = f64::INFINITY;
                    }
                    hl
                }
            };
            (value, xi, hl)
        }
    };
    Ok(LagrangianValue { value, dval_dv: xi.clone(), argmax_xi: xi, d2val_dv2: hess_l })
}

impl HamiltonianModel {
    /// `v . D_vv L(x, v) . v` evaluated through `xi* = D_v L(x, v)` without forming the inverse,
    /// so it stays finite where `D_vv L` blows up.
    pub fn v_dvv_l_v(&self, x: &[f64], xi_star: &[f64], v: &[f64]) -> f64 {
        let n = self.dim();
        if v.iter().all(|c| *c == 0.0) {
            return 0.0;
        }
        let mut hs = vec![0.0; n * n];
        self.d2xi_h(x, xi_star, &mut hs);
        match DenseLu::factor(n, hs) {
            Ok(lu) => {
                let mut w = v.to_vec();
                lu.solve_in_place(&mut w);
                w.iter().zip(v).map(|(a, b)| a * b).sum()
            }
            Err(_) => f64::INFINITY,
        }
    }
}
