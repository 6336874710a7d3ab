mod common;

use common::*;
use proptest::prelude::*;
use sysid_core::altmin::{alternate, AltMinOptions};
use sysid_core::model::simulate_observed;
use sysid_core::partial_obs::*;
use sysid_core::{Matrix, ObservedData, Vector};

fn rel_err(a: &DecisionPoint, b: &DecisionPoint) -> f64 {
    a.add_scaled(-1.0, b).norm() / b.norm().max(1e-12)
}

#[test]
fn adjoint_gradient_matches_central_differences() {
    let mut r = rng(21);
    for _ in 0..20 {
        let n = r_range(&mut r, 1, 3);
        let p = r_range(&mut r, 1, n);
        let horizon = r_range(&mut r, 2, 6);
        let (_, data) = noisy_observed(&mut r, n, p, horizon, 0.3);
        let z = decision_point(&mut r, n, horizon, 0.5);
        let (gamma, mu) = (0.5 + 2.0 * r_unit(&mut r), 0.5 + 2.0 * r_unit(&mut r));
        let ev = objective_and_gradient(&z, &data, gamma, mu).unwrap();
        let fd = fd_gradient(|w| partial_objective(w, &data, gamma, mu), &z, 1e-5);
        assert!(rel_err(&ev.gradient, &fd) <= 1e-6, "{}", rel_err(&ev.gradient, &fd));
        assert!((ev.value - partial_objective(&z, &data, gamma, mu)).abs() <= 1e-12 * ev.value.max(1.0));
    }
}

#[test]
fn curvature_matches_second_differences() {
    let mut r = rng(22);
    for _ in 0..20 {
        let (_, data) = noisy_observed(&mut r, 2, 1, 5, 0.3);
        let z = decision_point(&mut r, 2, 5, 0.5);
        let d = decision_point(&mut r, 2, 5, 1.0);
        let q = hessian_quadratic_form(&z, &d, &data, 1.5, 2.0).unwrap();
        let sd = second_difference(|w| partial_objective(w, &data, 1.5, 2.0), &z, &d, 1e-4);
        assert!((q - sd).abs() <= 1e-4 * q.abs().max(1e-8), "{q} {sd}");
    }
}

#[test]
fn hessian_product_matches_gradient_differences() {
    let mut r = rng(23);
    for _ in 0..10 {
        let (_, data) = noisy_observed(&mut r, 3, 2, 5, 0.3);
        let z = decision_point(&mut r, 3, 5, 0.5);
        let d = decision_point(&mut r, 3, 5, 1.0);
        let hd = hessian_vector_product(&z, &d, &data, 1.2, 0.8).unwrap();
        let eps = 1e-6;
        let gp = objective_and_gradient(&z.add_scaled(eps, &d), &data, 1.2, 0.8).unwrap().gradient;
        let gm = objective_and_gradient(&z.add_scaled(-eps, &d), &data, 1.2, 0.8).unwrap().gradient;
        let fd = gp.add_scaled(-1.0, &gm).scale(0.5 / eps);
        assert!(rel_err(&hd, &fd) <= 1e-6);
    }
}

#[test]
fn descent_stays_in_trust_ball_and_decreases() {
    let mut r = rng(24);
    for _ in 0..10 {
        let (_, data) = noisy_observed(&mut r, 2, 1, 6, 0.3);
        let (gamma, mu) = (2.0, 3.0);
        let radius = trust_ball(&data, gamma, mu).unwrap();
        let res = gradient_descent(
            &data,
            gamma,
            mu,
            &PgdOptions {
                max_iters: 2000,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(res.report.is_monotone());
        assert!(res.report.iterate_norm.iter().all(|&m| m <= radius + 1e-9));
    }
}

#[test]
fn descent_and_alternation_reach_same_stationary_point() {
    let data = simulate_observed(
        &Matrix::from_element(1, 1, 0.5),
        &Matrix::from_element(1, 1, 1.0),
        &Vector::from_element(1, 1.0),
        3,
    )
    .unwrap();
    let (gamma, mu) = (10.0, 10.0);
    let pgd = gradient_descent(
        &data,
        gamma,
        mu,
        &PgdOptions {
            grad_tol: 1e-8,
            ..Default::default()
        },
    )
    .unwrap();
    let alt = alternate(&data, gamma, mu, 0.0, &AltMinOptions::default()).unwrap();
    assert!(pgd.report.converged() && alt.report.converged(), "{:?} {:?} {:?}", pgd.report.termination, pgd.report.iterations(), pgd.report.grad_norm.last());
    assert!((&pgd.point.a - &alt.a).amax() <= 1e-6);
    let cross = stationarity_residual(&alt.a, &alt.states, &alt.adjoints, &data, gamma, mu).unwrap();
    assert!(cross <= 1e-6);
    assert!(pgd.stationarity <= 1e-6);
}

#[test]
fn lift_matches_pseudo_inverse_preimage() {
    let mut r = rng(25);
    let c = matrix(&mut r, 2, 3);
    let ys: Vec<Vector> = (0..4).map(|_| vector(&mut r, 2)).collect();
    let data = ObservedData::new(vector(&mut r, 3), c.clone(), ys.clone()).unwrap();
    let lifted = lifted_states(&data).unwrap();
    let pinv = c.clone().pseudo_inverse(1e-14).unwrap();
    for (t, y) in ys.iter().enumerate() {
        assert!((lifted.state(t + 2) - &pinv * y).norm() < 1e-12);
        assert!((&c * lifted.state(t + 2) - y).norm() < 1e-12);
    }
}

#[test]
fn multi_start_is_reproducible() {
    let mut r = rng(26);
    let (_, data) = noisy_observed(&mut r, 2, 1, 5, 0.3);
    let opts = PgdOptions {
        max_iters: 500,
        ..Default::default()
    };
    let a = multi_start(&data, 1.0, 1.0, &opts, 4, 9).unwrap();
    let b = multi_start(&data, 1.0, 1.0, &opts, 4, 9).unwrap();
    assert_eq!(a.point, b.point);
    let single = gradient_descent(&data, 1.0, 1.0, &opts).unwrap();
    assert!(a.report.final_objective() <= single.report.final_objective());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn form_equals_directional_hessian(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let (_, data) = noisy_observed(&mut r, 2, 2, 4, 0.5);
        let z = decision_point(&mut r, 2, 4, 0.7);
        let d = decision_point(&mut r, 2, 4, 1.0);
        let q = hessian_quadratic_form(&z, &d, &data, 0.7, 1.3).unwrap();
        let hd = hessian_vector_product(&z, &d, &data, 0.7, 1.3).unwrap();
        prop_assert!((q - hd.dot(&d)).abs() <= 1e-10 * q.abs().max(1.0));
    }

    #[test]
    fn descent_region_lies_in_ball(seed in 0u64..10_000, gamma in 0.1f64..10.0, mu in 0.1f64..10.0) {
        let mut r = rng(seed);
        let (_, data) = noisy_observed(&mut r, 2, 1, 4, 0.5);
        let bound = 0.5 * mu * data.observation_energy();
        let radius = trust_ball(&data, gamma, mu).unwrap();
        let scale = r_unit(&mut r);
        let z = decision_point(&mut r, 2, 4, scale);
        if objective(&z, &data, gamma, mu).unwrap() <= bound {
            prop_assert!(z.norm() <= radius * (1.0 + 1e-12));
        }
    }
}
