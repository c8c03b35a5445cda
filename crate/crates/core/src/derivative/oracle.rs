//! Quadrature oracle for the inviscid effective Hamiltonian of `xi^2 / 2 - V(x)` on the circle.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::hamiltonian::HamiltonianModel;

/// Absolute tolerance of the quadratures and of the energy root.
pub const ORACLE_TOL: f64 = 1e-10;
/// Panels integrated independently before adaptive refinement.
const PANELS: usize = 64;
const MAX_DEPTH: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InviscidOracle {
    pub hbar: f64,
    /// `p* = integral sqrt(2 V)`: `Hbar` vanishes exactly on `|p| <= p*`.
    pub flat_halfwidth: f64,
    pub dhbar_dp: f64,
}

/// Simpson panel `[a, b]` with its endpoint and midpoint values and its one-panel estimate.
#[derive(Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

impl Panel {
    fn new(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> Self {
        Panel { a, b, fa, fm, fb, whole: (b - a) / 6.0 * (fa + 4.0 * fm + fb) }
    }
}

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, p: Panel, tol: f64, depth: usize) -> f64 {
        let m = 0.5 * (p.a + p.b);
        let left = Panel::new(p.a, m, p.fa, f(0.5 * (p.a + m)), p.fm);
        let right = Panel::new(m, p.b, p.fm, f(0.5 * (m + p.b)), p.fb);
        let delta = left.whole + right.whole - p.whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left.whole + right.whole + delta / 15.0;
        }
        rec(f, left, 0.5 * tol, depth - 1) + rec(f, right, 0.5 * tol, depth - 1)
    }
    rec(f, Panel::new(a, b, f(a), f(0.5 * (a + b)), f(b)), tol, MAX_DEPTH)
}

/// `integral_0^1 f`, split into fixed panels so kinks at potential minima stay local.
fn circle_integral(f: &dyn Fn(f64) -> f64) -> f64 {
    let h = 1.0 / PANELS as f64;
    (0..PANELS).map(|k| adaptive_simpson(f, k as f64 * h, (k + 1) as f64 * h, ORACLE_TOL / PANELS as f64)).sum()
}

/// `Hbar(p)`, the flat-piece half-width and `dHbar/dp` for a 1-D model `xi^2 / 2 - V` with `min V = 0`.
///
/// Outside the flat piece, `Hbar = E` solves `integral sqrt(2 (E + V)) = |p|` and
/// `dHbar/dp = sign(p) / integral (2 (E + V))^{-1/2}`.
pub fn inviscid_oracle(model: &HamiltonianModel, p: f64) -> Result<InviscidOracle> {
    if model.dim() != 1 || !model.is_quadratic_mechanical() {
        return Err(LabError::Precondition("the inviscid oracle needs a 1-D model of the form xi^2/2 - V(x)".into()));
    }
    if !p.is_finite() {
        return Err(LabError::Domain(format!("momentum must be finite, got {p}")));
    }
    let v = |x: f64| model.potential_at(&[x]).max(0.0);
    let flat_halfwidth = circle_integral(&|x| (2.0 * v(x)).sqrt());
    let target = p.abs();
    if target <= flat_halfwidth {
        return Ok(InviscidOracle { hbar: 0.0, flat_halfwidth, dhbar_dp: 0.0 });
    }
    let action = |e: f64| circle_integral(&|x| (2.0 * (e + v(x))).sqrt()) - target;
    let period = |e: f64| circle_integral(&|x| (2.0 * (e + v(x))).powf(-0.5));

    // Action >= sqrt(2E), so E = p^2 / 2 brackets the root up to quadrature round-off.
    let (mut lo, mut hi) = (0.0, 0.5 * target * target);
    for _ in 0..8 {
        if action(hi) >= 0.0 {
            break;
        }
        hi = 2.0 * hi + ORACLE_TOL;
    }
    if action(hi) < 0.0 {
        return Err(LabError::numerical_with(
            "inviscid oracle failed to bracket the energy",
            vec![format!("p = {p}, upper energy {hi}")],
        ));
    }
    // Bisection until Newton is safe, then Newton kept inside the bracket.
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if action(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Newton runs to its own fixed point; the quadratures are deterministic, so this converges
    // well below the acceptance tolerance on the residual.
    let mut e = 0.5 * (lo + hi);
    for _ in 0..50 {
        let f = action(e);
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = e;
        } else {
            hi = e;
        }
        let next = e - f / period(e);
        let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        let done = (next - e).abs() <= 1e-15 * (1.0 + e);
        e = next;
        if done {
            break;
        }
    }
    let residual = action(e);
    if residual.abs() > 10.0 * ORACLE_TOL {
        return Err(LabError::numerical_with(
            "inviscid oracle energy root did not converge",
            vec![format!("residual {residual:e} at E = {e}")],
        ));
    }
    Ok(InviscidOracle { hbar: e, flat_halfwidth, dhbar_dp: p.signum() / period(e) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::TrigPoly;

    #[test]
    fn simpson_is_exact_on_cubics_and_accurate_on_kinks() {
        let cubic = adaptive_simpson(&|x| x * x * x - x, 0.0, 2.0, 1e-12);
        assert!((cubic - 2.0).abs() < 1e-14);
        let kink = adaptive_simpson(&|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-12);
        assert!((kink - 0.29).abs() < 1e-11);
    }

    #[test]
    fn free_model_reduces_to_the_kinetic_energy() {
        let free = HamiltonianModel::free(1).unwrap();
        for p in [-1.3, 0.4, 2.0] {
            let o = inviscid_oracle(&free, p).unwrap();
            assert_eq!(o.flat_halfwidth, 0.0);
            assert!((o.hbar - 0.5 * p * p).abs() <= 1e-10);
            assert!((o.dhbar_dp - p).abs() <= 1e-9);
        }
        assert_eq!(inviscid_oracle(&free, 0.0).unwrap().hbar, 0.0);
    }

    #[test]
    fn quartic_and_two_dimensional_models_are_refused() {
        let quartic = HamiltonianModel::mechanical(1, 4, TrigPoly::cosine_well(1, 1.0)).unwrap();
        assert!(inviscid_oracle(&quartic, 1.0).is_err());
        assert!(inviscid_oracle(&HamiltonianModel::free(2).unwrap(), 1.0).is_err());
    }
}
