use ergodic_core::cell::{hopf_cole_eigenvalue, solve_cell, SolverOptions};
use ergodic_core::hamiltonian::{HamiltonianModel, TrigPoly};
use ergodic_core::mather::{
    holonomy_residual, invariant_density, measure_integrate, scale_measure, GraphMeasure, Measure,
};
use ergodic_core::torus::{integrate, GridField, Stencil, TorusGrid};
use proptest::prelude::*;

fn density(model: &HamiltonianModel, grid: &TorusGrid, p: &[f64], eps: f64) -> GraphMeasure {
    let cell = solve_cell(model, grid, p, eps, &SolverOptions::default()).unwrap();
    invariant_density(model, &cell).unwrap()
}

#[test]
fn pendulum_density_matches_squared_eigenfunction() {
    let m = HamiltonianModel::pendulum();
    let g = TorusGrid::with_stencil(&[512], Stencil::Central4).unwrap();
    let mu = density(&m, &g, &[0.0], 0.1);
    let phi2 = hopf_cole_eigenvalue(&m, &g, 0.1).unwrap().density();
    let err = mu.theta.values().iter().zip(phi2.values()).fold(0.0_f64, |e, (a, b)| e.max((a - b).abs()));
    assert!(err <= 1e-7, "max |theta - phi^2| = {err:e}");
}

#[test]
fn density_is_a_probability_and_exactly_holonomic() {
    let cases = [
        (HamiltonianModel::pendulum(), TorusGrid::new(&[256]).unwrap(), vec![0.3], 0.1),
        (
            HamiltonianModel::mechanical(1, 4, TrigPoly::cosine_well(1, 0.5)).unwrap(),
            TorusGrid::new(&[128]).unwrap(),
            vec![-0.2],
            0.2,
        ),
        (
            HamiltonianModel::anisotropic_2d([[1.5, 0.3], [0.3, 1.0]], TrigPoly::cosine_well(2, 0.5)).unwrap(),
            TorusGrid::new(&[24, 20]).unwrap(),
            vec![0.2, -0.1],
            0.2,
        ),
    ];
    for (m, g, p, eps) in cases {
        let mu = density(&m, &g, &p, eps);
        assert!((integrate(&mu.theta).unwrap() - 1.0).abs() <= 1e-12);
        assert!(mu.theta.values().iter().all(|&t| t >= -1e-12));
        assert!(mu.clipped_mass <= 1e-10);
        assert!(holonomy_residual(&mu, eps) <= 1e-10);
    }
}

#[test]
fn uniform_density_under_pendulum_drift_is_not_holonomic() {
    let m = HamiltonianModel::pendulum();
    let g = TorusGrid::new(&[128]).unwrap();
    let mut mu = density(&m, &g, &[0.0], 0.1);
    mu.theta = GridField::constant(&g, 1.0);
    assert!(holonomy_residual(&mu, 0.1) > 1e-2);
}

#[test]
fn scaling_multiplies_the_residual_by_lambda() {
    let m = HamiltonianModel::pendulum();
    let g = TorusGrid::new(&[128]).unwrap();
    let mut mu = density(&m, &g, &[0.0], 0.1);
    assert!(holonomy_residual(&scale_measure(&mu, 2.0).unwrap(), 0.2) <= 2e-10);
    // A measure with a residual well above round-off makes the relative check meaningful.
    mu.theta = GridField::constant(&g, 1.0);
    let base = holonomy_residual(&mu, 0.1);
    for lambda in [0.5, 2.0, 10.0] {
        let scaled = holonomy_residual(&scale_measure(&mu, lambda).unwrap(), lambda * 0.1);
        assert!((scaled - lambda * base).abs() <= 1e-12 * lambda * base);
    }
}

#[test]
fn integration_only_sees_the_graph() {
    let m = HamiltonianModel::pendulum();
    let g = TorusGrid::new(&[64]).unwrap();
    let mu = density(&m, &g, &[0.4], 0.2);
    let f = |_: &[f64], v: &[f64]| v[0] * v[0];
    let graph_v: Vec<Vec<f64>> = (0..g.len()).map(|i| mu.vfield.at(i).to_vec()).collect();
    let perturbed = |x: &[f64], v: &[f64]| {
        let i = (x[0] * 64.0).round() as usize % 64;
        if v == graph_v[i].as_slice() {
            f(x, v)
        } else {
            f(x, v) + 100.0
        }
    };
    assert_eq!(measure_integrate(&mu, f).unwrap(), measure_integrate(&mu, perturbed).unwrap());
    assert_eq!(measure_integrate(&mu, |_, _| 1.0).unwrap(), integrate(&mu.theta).unwrap());
    assert!((measure_integrate(&mu, |_, _| 1.0).unwrap() - 1.0).abs() <= 1e-14);
}

#[test]
fn non_finite_observable_is_reported() {
    let m = HamiltonianModel::free(1).unwrap();
    let g = TorusGrid::new(&[16]).unwrap();
    let mu = density(&m, &g, &[0.0], 0.2);
    assert!(measure_integrate(&mu, |_, _| f64::NAN).is_err());
}

#[test]
fn graph_measure_round_trips_its_files() {
    let m = HamiltonianModel::pendulum();
    let g = TorusGrid::new(&[32]).unwrap();
    let mu = density(&m, &g, &[0.0], 0.3);
    let dir = tempfile::tempdir().unwrap();
    let files = mu.write(dir.path(), "mu").unwrap();
    for f in &files {
        assert!(dir.path().join(f).exists());
    }
    let text = std::fs::read_to_string(dir.path().join("mu_theta.csv")).unwrap();
    let back = ergodic_core::torus::io::read_field_csv(text.as_bytes(), Stencil::Central2).unwrap();
    assert_eq!(back.values(), mu.theta.values());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adjoint_density_annihilates_every_test_field(coeffs in prop::collection::vec(-1.0f64..1.0, 64)) {
        let m = HamiltonianModel::pendulum();
        let g = TorusGrid::new(&[64]).unwrap();
        let mu = density(&m, &g, &[0.25], 0.2);
        let r = mu.holonomy_vector(0.2);
        let pairing: f64 = r.iter().zip(&coeffs).map(|(a, b)| a * b).sum();
        prop_assert!(pairing.abs() <= 1e-12);
    }
}
