//! Discrete calculus on the torus. Every derivative in the crate goes through these stencils.

use super::field::GridField;
use crate::error::{LabError, Result};

fn require_scalar(f: &GridField, op: &str) -> Result<()> {
    if !f.is_scalar() {
        return Err(LabError::Config(format!("{op} expects a scalar field, got arity {}", f.arity())));
    }
    Ok(())
}

/// Central-difference gradient with periodic wrap.
pub fn gradient(field: &GridField) -> Result<GridField> {
    require_scalar(field, "gradient")?;
    let grid = field.grid();
    let n = grid.dim();
    let u = field.values();
    let mut out = vec![0.0; n * grid.len()];
    for i in 0..grid.len() {
        for axis in 0..n {
            out[i * n + axis] = grid.first_derivative_entries(i, axis).iter().map(|&(j, w)| w * u[j]).sum();
        }
    }
    Ok(GridField::from_parts_unchecked(grid.clone(), n, out))
}

/// Central-difference Laplacian with periodic wrap.
pub fn laplacian(field: &GridField) -> Result<GridField> {
    require_scalar(field, "laplacian")?;
    let grid = field.grid();
    let u = field.values();
    let out = (0..grid.len()).map(|i| grid.laplacian_entries(i).iter().map(|&(j, w)| w * u[j]).sum()).collect();
    Ok(GridField::from_parts_unchecked(grid.clone(), 1, out))
}

/// Discrete divergence, defined as minus the transpose of [`gradient`].
///
/// With this definition `integrate(phi * div F) = -integrate(grad phi . F)` holds for every
/// pair of grid fields up to round-off.
pub fn divergence(vfield: &GridField) -> Result<GridField> {
    let grid = vfield.grid();
    let n = grid.dim();
    if vfield.arity() != n {
        return Err(LabError::Config(format!("divergence expects an {n}-vector field, got arity {}", vfield.arity())));
    }
    let f = vfield.values();
    let mut out = vec![0.0; grid.len()];
    // (D^T g)_k = sum_i D_ik g_i, scattered from rows.
    for i in 0..grid.len() {
        for axis in 0..n {
            let gi = f[i * n + axis];
            for (k, w) in grid.first_derivative_entries(i, axis) {
                out[k] -= w * gi;
            }
        }
    }
    Ok(GridField::from_parts_unchecked(grid.clone(), 1, out))
}

/// Central second-difference Hessian, stored as an `n*n` row-major block per node.
///
/// Diagonal entries use the second-derivative stencil, mixed entries the product of
/// first-derivative stencils.
pub fn hessian(field: &GridField) -> Result<GridField> {
    require_scalar(field, "hessian")?;
    let grid = field.grid();
    let n = grid.dim();
    let u = field.values();
    let grad = gradient(field)?;
    let g = grad.values();
    let mut out = vec![0.0; n * n * grid.len()];
    for i in 0..grid.len() {
        for a in 0..n {
            out[i * n * n + a * n + a] = grid.second_derivative_entries(i, a).iter().map(|&(j, w)| w * u[j]).sum();
            for b in (a + 1)..n {
                let mixed: f64 = grid.first_derivative_entries(i, a).iter().map(|&(j, w)| w * g[j * n + b]).sum();
                out[i * n * n + a * n + b] = mixed;
                out[i * n * n + b * n + a] = mixed;
            }
        }
    }
    Ok(GridField::from_parts_unchecked(grid.clone(), n * n, out))
}

/// Rectangle-rule integral `sum f_i prod h_k` of a scalar field.
pub fn integrate(field: &GridField) -> Result<f64> {
    require_scalar(field, "integrate")?;
    Ok(pairwise_sum(field.values()) * field.grid().cell_volume())
}

/// `integrate(a * b)` for two scalar fields, or the node-wise dot product for vector fields.
pub fn inner(a: &GridField, b: &GridField) -> Result<f64> {
    a.same_grid(b)?;
    if a.arity() != b.arity() {
        return Err(LabError::Config("inner product of fields with different arity".into()));
    }
    let prods: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x * y).collect();
    Ok(pairwise_sum(&prods) * a.grid().cell_volume())
}

/// Fixed-order pairwise summation; the result does not depend on thread count or chunking.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{Stencil, TorusGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn max_err(a: &[f64], b: impl Fn(usize) -> f64) -> f64 {
        a.iter().enumerate().map(|(i, v)| (v - b(i)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn constants_have_zero_derivatives() {
        let g = TorusGrid::new(&[16, 8]).unwrap();
        let c = GridField::constant(&g, 3.25);
        assert!(gradient(&c).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(laplacian(&c).unwrap().max_abs() < 1e-10);
        let vc = GridField::new(g.clone(), 2, vec![1.5; 2 * g.len()]).unwrap();
        assert!(divergence(&vc).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_sine_is_second_order() {
        let err = |n: usize| {
            let g = TorusGrid::new(&[n]).unwrap();
            let f = GridField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
            let d = gradient(&f).unwrap();
            max_err(d.values(), |i| 2.0 * PI * (2.0 * PI * g.point(i)[0]).cos())
        };
        let (e1, e2) = (err(256), err(512));
        assert!(e1 <= 1e-3, "{e1}");
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() <= 0.2, "order {order}");
    }

    #[test]
    fn laplacian_of_sine_is_second_order() {
        let err = |n: usize| {
            let g = TorusGrid::new(&[n]).unwrap();
            let f = GridField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
            let d = laplacian(&f).unwrap();
            max_err(d.values(), |i| -4.0 * PI * PI * (2.0 * PI * g.point(i)[0]).sin())
        };
        let (e1, e2) = (err(256), err(512));
        assert!(e1 <= 2e-2, "{e1}");
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() <= 0.2, "order {order}");
    }

    #[test]
    fn laplacian_2d_product() {
        let err = |n: usize| {
            let g = TorusGrid::new(&[n, n]).unwrap();
            let prod = |x: &[f64]| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin();
            let f = GridField::from_fn(&g, prod);
            let d = laplacian(&f).unwrap();
            max_err(d.values(), |i| -8.0 * PI * PI * prod(&g.point(i)))
        };
        let (e1, e2) = (err(64), err(128));
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() <= 0.2, "order {order}");
        assert!(e1 < 8.0 * PI * PI * 4.0 * PI * PI / (12.0 * 64.0 * 64.0) * 1.1);
    }

    #[test]
    fn fourth_order_stencil_refines_at_rate_four() {
        let err = |n: usize| {
            let g = TorusGrid::with_stencil(&[n], Stencil::Central4).unwrap();
            let f = GridField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
            let d = gradient(&f).unwrap();
            max_err(d.values(), |i| 2.0 * PI * (2.0 * PI * g.point(i)[0]).cos())
        };
        let order = (err(64) / err(128)).log2();
        assert!((order - 4.0).abs() <= 0.2, "order {order}");
    }

    #[test]
    fn kinked_hat_has_order_one_gradient_error() {
        // Non-smooth periodic data: the gradient error at the kink does not shrink with h.
        let g = TorusGrid::new(&[256]).unwrap();
        let hat = |x: &[f64]| 0.5 - (x[0] - 0.5).abs();
        let f = GridField::from_fn(&g, hat);
        let d = gradient(&f).unwrap();
        // exact one-sided slopes are +-1; central difference at the peak gives 0
        assert!((d.values()[128] - 0.0).abs() < 1e-12);
        assert!((d.values()[64] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn integration_rules() {
        let g = TorusGrid::new(&[64]).unwrap();
        assert_eq!(integrate(&GridField::constant(&g, 1.0)).unwrap(), 1.0);
        let s = GridField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
        assert!(integrate(&s).unwrap().abs() < 1e-15);
        let f = |n: usize| {
            let g = TorusGrid::new(&[n]).unwrap();
            integrate(&GridField::from_fn(&g, |x| (2.0 * PI * x[0]).sin().exp())).unwrap()
        };
        assert!((f(64) - f(4096)).abs() <= 1e-12);
    }

    #[test]
    fn divergence_of_sine_matches_derivative() {
        let g = TorusGrid::new(&[256]).unwrap();
        let f = GridField::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
        let d = divergence(&f).unwrap();
        let e = max_err(d.values(), |i| 2.0 * PI * (2.0 * PI * g.point(i)[0]).cos());
        assert!(e < 1e-3);
    }

    #[test]
    fn summation_by_parts_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for sizes in [vec![32], vec![16, 12]] {
            for stencil in [Stencil::Central2, Stencil::Central4] {
                let g = TorusGrid::with_stencil(&sizes, stencil).unwrap();
                let n = g.dim();
                let phi =
                    GridField::scalar(g.clone(), (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
                let big_f =
                    GridField::new(g.clone(), n, (0..n * g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
                let lhs = inner(&phi, &divergence(&big_f).unwrap()).unwrap();
                let rhs = inner(&gradient(&phi).unwrap(), &big_f).unwrap();
                assert!((lhs + rhs).abs() <= 1e-13, "{}", lhs + rhs);
            }
        }
    }

    #[test]
    fn laplacian_is_symmetric_and_integrates_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = TorusGrid::with_stencil(&[12, 10], Stencil::Central4).unwrap();
        let a = GridField::scalar(g.clone(), (0..g.len()).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let b = GridField::scalar(g.clone(), (0..g.len()).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let ab = inner(&a, &laplacian(&b).unwrap()).unwrap();
        let ba = inner(&laplacian(&a).unwrap(), &b).unwrap();
        assert!((ab - ba).abs() < 1e-11);
        assert!(integrate(&laplacian(&a).unwrap()).unwrap().abs() < 1e-11);
        for i in 0..g.len() {
            for (j, w) in g.laplacian_entries(i) {
                let back = g.laplacian_entries(j).into_iter().find(|e| e.0 == i).unwrap().1;
                assert_eq!(w, back);
            }
        }
    }

    #[test]
    fn hessian_trace_is_laplacian() {
        let g = TorusGrid::new(&[16, 16]).unwrap();
        let f = GridField::from_fn(&g, |x| (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos());
        let h = hessian(&f).unwrap();
        let l = laplacian(&f).unwrap();
        for i in 0..g.len() {
            let tr = h.at(i)[0] + h.at(i)[3];
            assert!((tr - l.values()[i]).abs() < 1e-9);
            assert_eq!(h.at(i)[1], h.at(i)[2]);
        }
    }

    #[test]
    fn pairwise_sum_is_deterministic() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        assert_eq!(pairwise_sum(&xs).to_bits(), pairwise_sum(&xs.clone()).to_bits());
    }
}
