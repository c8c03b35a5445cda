use ergodic_core::cell::{hopf_cole_eigenvalue, solve_cell, SolverOptions};
use ergodic_core::derivative::{
    c_prime, c_prime_fd, derivative_sweep, grad_hbar_eps, hessian_integral_bound, inviscid_oracle,
    one_sided_dhbar_inviscid, rate_probe, semiconvexity_probe, write_derivative_csv, OneSidedOptions,
};
use ergodic_core::hamiltonian::{HamiltonianModel, TrigPoly};
use ergodic_core::lp::VelocitySpec;
use ergodic_core::mather::invariant_density;
use ergodic_core::torus::{Stencil, TorusGrid};

fn grid(n: usize) -> TorusGrid {
    TorusGrid::new(&[n]).unwrap()
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

/// Midpoint rule on a fine uniform mesh, independent of the adaptive quadrature under test.
fn midpoint(f: impl Fn(f64) -> f64) -> f64 {
    let n = 200_000;
    (0..n).map(|k| f((k as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64
}

fn pendulum_v(x: f64) -> f64 {
    1.0 - (2.0 * std::f64::consts::PI * x).cos()
}

#[test]
fn both_forms_agree_across_the_catalog() {
    let cases = [
        (HamiltonianModel::pendulum(), grid(128), vec![0.0]),
        (HamiltonianModel::pendulum(), grid(128), vec![0.6]),
        (HamiltonianModel::mechanical(1, 4, TrigPoly::cosine_well(1, 0.5)).unwrap(), grid(128), vec![0.0]),
        (
            HamiltonianModel::drifted_quadratic(1, 1.0, vec![TrigPoly::sine(1, 0.5)], TrigPoly::cosine_well(1, 0.3))
                .unwrap(),
            grid(128),
            vec![0.2],
        ),
        (
            HamiltonianModel::anisotropic_2d([[1.5, 0.3], [0.3, 1.0]], TrigPoly::cosine_well(2, 0.5)).unwrap(),
            TorusGrid::new(&[24, 24]).unwrap(),
            vec![0.1, -0.2],
        ),
    ];
    for (m, g, p) in cases {
        for r in derivative_sweep(&m, &g, &p, &[0.1, 0.2, 0.5], &opts()).unwrap() {
            assert!(r.discrepancy_forms <= 1e-10, "{:?} {r:?}", m.family());
            // Central-difference truncation h^2 |c'''| / 6 stays below this for these models.
            assert!(r.discrepancy_fd <= 1e-3, "{r:?}");
        }
    }
}

#[test]
fn free_model_has_zero_derivative_in_eps() {
    let m = HamiltonianModel::free(1).unwrap();
    for r in derivative_sweep(&m, &grid(32), &[0.0], &[0.05, 0.3], &opts()).unwrap() {
        assert_eq!((r.c_prime_formula_laplacian, r.c_prime_formula_lagrangian, r.c_prime_fd), (0.0, 0.0, 0.0));
    }
}

#[test]
fn formula_matches_the_eigenvalue_derivative() {
    let m = HamiltonianModel::pendulum();
    let g = TorusGrid::with_stencil(&[512], Stencil::Central4).unwrap();
    let cell = solve_cell(&m, &g, &[0.0], 0.1, &opts()).unwrap();
    let mu = invariant_density(&m, &cell).unwrap();
    let r = c_prime(&m, &cell, &mu, &opts()).unwrap();
    let h = 1e-4;
    let lam = |e: f64| hopf_cole_eigenvalue(&m, &g, e).unwrap().value;
    let oracle = (lam(0.1 + h) - lam(0.1 - h)) / (2.0 * h);
    assert!((r.c_prime_formula_laplacian - oracle).abs() <= 1e-5, "{} vs {oracle}", r.c_prime_formula_laplacian);
}

#[test]
fn finite_differences_converge_at_second_order() {
    let m = HamiltonianModel::pendulum();
    let g = grid(256);
    let cell = solve_cell(&m, &g, &[0.0], 0.2, &opts()).unwrap();
    let mu = invariant_density(&m, &cell).unwrap();
    let formula = c_prime(&m, &cell, &mu, &opts()).unwrap().c_prime_formula_laplacian;
    let gap = |h: f64| (c_prime_fd(&m, &cell, h, &opts()).unwrap() - formula).abs();
    let (g1, g2) = (gap(1e-3), gap(5e-4));
    let ratio = g1 / g2;
    assert!((2.5..=6.0).contains(&ratio), "gap ratio {ratio}");
    // The gap is the truncation h^2 |c'''| / 6, with c''' from the eigenvalue oracle.
    let hc = TorusGrid::with_stencil(&[512], Stencil::Central4).unwrap();
    let lam = |e: f64| hopf_cole_eigenvalue(&m, &hc, e).unwrap().value;
    let s = 2e-3;
    let third = (lam(0.2 + 2.0 * s) - 2.0 * lam(0.2 + s) + 2.0 * lam(0.2 - s) - lam(0.2 - 2.0 * s)) / (2.0 * s * s * s);
    let predicted = third.abs() * 1e-6 / 6.0;
    assert!((g1 - predicted).abs() <= 1e-2 * predicted, "gap {g1:e} vs truncation {predicted:e}");
}

#[test]
fn mechanical_models_have_nonpositive_derivative() {
    let models = [
        (HamiltonianModel::pendulum(), grid(128)),
        (HamiltonianModel::mechanical(1, 4, TrigPoly::cosine_well(1, 1.0)).unwrap(), grid(128)),
        (
            HamiltonianModel::mechanical(2, 2, TrigPoly::cosine_well(2, 0.5)).unwrap(),
            TorusGrid::new(&[24, 24]).unwrap(),
        ),
    ];
    for (m, g) in models {
        let p = vec![0.0; m.dim()];
        for r in derivative_sweep(&m, &g, &p, &[0.05, 0.1, 0.2, 0.5], &opts()).unwrap() {
            assert!(r.c_prime_formula_laplacian <= 1e-10, "{r:?}");
        }
    }
}

#[test]
fn derivative_csv_has_stable_columns() {
    let m = HamiltonianModel::pendulum();
    let reports = derivative_sweep(&m, &grid(64), &[0.0], &[0.2, 0.1], &opts()).unwrap();
    let mut buf = Vec::new();
    write_derivative_csv(&reports, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "eps,c,c_prime_lap,c_prime_lag,c_prime_fd,gap_forms,gap_fd,fd_step");
    assert!(lines.next().unwrap().starts_with("0.2,"));
    assert_eq!(lines.count(), 1);
}

#[test]
fn semiconvexity_inequality_and_eta_scaling() {
    let m = HamiltonianModel::pendulum();
    let probe = semiconvexity_probe(&m, &grid(256), &[0.0], 0.2, &[0.05, 0.025, 0.0125], &opts()).unwrap();
    assert!(probe.holds(), "{probe:?}");
    let exponent = probe.eta_exponent.unwrap();
    assert!((exponent - 2.0).abs() <= 0.2, "exponent {exponent}");
}

#[test]
fn vanishing_viscosity_rate_for_the_pendulum() {
    let m = HamiltonianModel::pendulum();
    let eps: Vec<f64> = (3..=7).map(|k| 2f64.powi(-k)).collect();
    let fit = rate_probe(&m, &grid(1024), &eps, None, &opts()).unwrap();
    assert_eq!(fit.c0_reference, 0.0);
    assert!(fit.slope_bound.is_finite() && fit.slope_bound < 10.0, "{fit:?}");
    assert_eq!(fit.sandwich_ok, Some(true));
    assert!(fit.c_values.iter().all(|&c| c <= 0.0));

    let free = HamiltonianModel::free(1).unwrap();
    let fit = rate_probe(&free, &grid(32), &[0.5, 0.25], None, &opts()).unwrap();
    assert_eq!(fit.slope_bound, 0.0);
}

#[test]
fn rotation_vector_is_the_gradient_of_hbar() {
    let free = HamiltonianModel::free(1).unwrap();
    let g = grad_hbar_eps(&free, &grid(32), &[0.7], 0.2, &opts()).unwrap();
    assert!((g.gradient[0] - 0.7).abs() <= 1e-12 && g.gap <= 1e-9, "{g:?}");

    let m = HamiltonianModel::pendulum();
    let g = grad_hbar_eps(&m, &grid(256), &[0.0], 0.2, &opts()).unwrap();
    assert!(g.gradient[0].abs() <= 1e-12 && g.fd_gradient[0].abs() <= 1e-8, "{g:?}");
    let g = grad_hbar_eps(&m, &grid(512), &[0.8], 0.2, &opts()).unwrap();
    assert!(g.gap <= 1e-5, "{g:?}");

    let aniso = HamiltonianModel::anisotropic_2d([[1.5, 0.3], [0.3, 1.0]], TrigPoly::cosine_well(2, 0.5)).unwrap();
    let g = grad_hbar_eps(&aniso, &TorusGrid::new(&[32, 32]).unwrap(), &[0.3, -0.2], 0.2, &opts()).unwrap();
    assert!(g.gap <= 1e-4, "{g:?}");
}

#[test]
fn hbar_eps_is_midpoint_convex_in_p() {
    let m = HamiltonianModel::pendulum();
    let g = grid(128);
    let c: Vec<f64> =
        [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|&p| solve_cell(&m, &g, &[p], 0.2, &opts()).unwrap().c).collect();
    for k in 1..4 {
        assert!(c[k] <= 0.5 * (c[k - 1] + c[k + 1]) + 1e-8);
    }
}

#[test]
fn oracle_flat_piece_and_rotation() {
    let m = HamiltonianModel::pendulum();
    let o = inviscid_oracle(&m, 0.5).unwrap();
    assert!((o.flat_halfwidth - 4.0 / std::f64::consts::PI).abs() <= 1e-9);
    assert_eq!((o.hbar, o.dhbar_dp), (0.0, 0.0));

    let o = inviscid_oracle(&m, 2.0).unwrap();
    let action = midpoint(|x| (2.0 * (o.hbar + pendulum_v(x))).sqrt());
    assert!((action - 2.0).abs() <= 1e-9, "action {action}");
    let slope = 1.0 / midpoint(|x| (2.0 * (o.hbar + pendulum_v(x))).powf(-0.5));
    assert!((o.dhbar_dp - slope).abs() <= 1e-9);
    assert_eq!(inviscid_oracle(&m, -2.0).unwrap().dhbar_dp, -o.dhbar_dp);
}

#[test]
fn one_sided_derivatives_from_the_optimal_face() {
    let m = HamiltonianModel::pendulum();
    let flat = one_sided_dhbar_inviscid(&m, &[0.5], &[1.0], &OneSidedOptions::default()).unwrap();
    assert!(flat.dminus.abs() <= 1e-6 && flat.dplus.abs() <= 1e-6, "{flat:?}");
    assert_eq!(flat.oracle_derivative, Some(0.0));

    let rot = one_sided_dhbar_inviscid(&m, &[2.0], &[1.0], &OneSidedOptions::default()).unwrap();
    assert!(rot.dminus <= rot.dplus + 1e-8);
    assert!(rot.oracle_gap.unwrap() <= 2e-2, "{rot:?}");

    let free = HamiltonianModel::free(1).unwrap();
    let opts = OneSidedOptions { nx: 16, velocity: VelocitySpec::fixed(2.8, 9), ..OneSidedOptions::default() };
    let r = one_sided_dhbar_inviscid(&free, &[0.7], &[-1.0], &opts).unwrap();
    assert!((r.dminus + 0.7).abs() <= 1e-8 && (r.dplus + 0.7).abs() <= 1e-8, "{r:?}");
}

#[test]
fn hessian_bound_holds_uniformly_along_the_sweep() {
    let m = HamiltonianModel::pendulum();
    let g = grid(512);
    let mut lhs = Vec::new();
    for eps in [0.2, 0.1, 0.05] {
        let cell = solve_cell(&m, &g, &[0.0], eps, &opts()).unwrap();
        let mu = invariant_density(&m, &cell).unwrap();
        let b = hessian_integral_bound(&m, &cell, &mu).unwrap();
        let d = c_prime(&m, &cell, &mu, &opts()).unwrap();
        assert!(b.holds, "{b:?}");
        assert_eq!(b.gamma, 1.0);
        let four_pi2 = 4.0 * std::f64::consts::PI.powi(2);
        assert!((b.rhs - four_pi2).abs() <= 1e-9 * four_pi2, "{b:?}");
        assert!(d.c_prime_formula_laplacian.abs() <= b.laplacian_l2 + 1e-12);
        assert!(b.laplacian_l2 <= b.lhs.sqrt() + 1e-12 && b.lhs.sqrt() <= b.rhs.sqrt());
        lhs.push(b.lhs);
    }
    // The integral climbs toward the V''-weighted mass at the well, below 4 pi^2, in shrinking steps.
    assert!(lhs[2] - lhs[1] < lhs[1] - lhs[0], "{lhs:?}");
}
