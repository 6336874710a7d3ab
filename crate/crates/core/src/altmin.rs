//! Alternating minimization: exact minimization over the states for fixed
//! `A`, then a proximally damped ridge update of `A` on those states.

use serde::Serialize;

use crate::error::{dim_err, Result};
use crate::full_obs;
use crate::linalg::spd_right_solve;
use crate::model::{check_positive, check_square, transition_moments, Matrix, ObservedData, Trajectory, Vector};
use crate::partial_obs::{self, joint_objective, stationarity_residual};
use crate::report::{DescentReport, Termination};
use crate::smoother::{smoother_solve, SmootherSolution};
use crate::Error;

/// `K_x = gamma/2 sum |x_{t+1} - A x_t|^2 + mu/2 sum_{t>=2} |y_t - C x_t|^2`.
pub fn state_cost(a: &Matrix, states: &[Vector], data: &ObservedData, gamma: f64, mu: f64) -> f64 {
    joint_objective(a, states, data, gamma, mu) - 0.5 * a.norm_squared()
}

/// Minimizer of `K_x` over `x_2..x_T` (with `x_1 = x`), through the smoother.
pub fn minimize_kx(a: &Matrix, data: &ObservedData, gamma: f64, mu: f64) -> Result<Vec<Vector>> {
    Ok(smoother_solve(a, data, gamma, mu)?.states)
}

/// `((rho/gamma) A_prev + S)((rho + 1)/gamma I + G)^{-1}` on the given states.
pub fn update_a(a_prev: &Matrix, states: &[Vector], gamma: f64, rho: f64) -> Result<Matrix> {
    check_positive("gamma", gamma)?;
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!("rho must be >= 0, got {rho}")));
    }
    if states.len() < 2 {
        return Err(dim_err("at least two states are required"));
    }
    let n = states[0].len();
    check_square("A_prev", a_prev, n)?;
    if states.iter().any(|x| x.len() != n) {
        return Err(dim_err(format!("states must have length {n}")));
    }
    let (cross, gram) = transition_moments(states);
    let rhs = a_prev * (rho / gamma) + cross;
    let lhs = gram + Matrix::identity(n, n) * ((rho + 1.0) / gamma);
    Ok(spd_right_solve(&rhs, &lhs).expect("(rho+1)/gamma I + G is positive definite"))
}

/// Options for [`alternate`].
#[derive(Debug, Clone, PartialEq)]
pub struct AltMinOptions {
    pub max_iters: usize,
    /// Stop once both `|A^{n+1} - A^n|_F` and the stationarity residual are below this.
    pub grad_tol: f64,
    /// `A^1`; `None` uses the lift estimator when `CC*` is invertible and 0 otherwise.
    pub init: Option<Matrix>,
}

impl Default for AltMinOptions {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            grad_tol: 1e-9,
            init: None,
        }
    }
}

/// Per-iteration accounting of the objective drop
/// `J(A^n, x^n) - J(A^{n+1}, x^{n+1})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub iteration: usize,
    pub drop: f64,
    /// `(rho + 1/2) |A^{n+1} - A^n|_F^2`.
    pub damping: f64,
    /// `gamma/2 sum |(A^{n+1} - A^n) x^n_t|^2`.
    pub regressor: f64,
    /// `gamma/2 sum |dx_{t+1} - A^{n+1} dx_t|^2`.
    pub dynamics: f64,
    /// `mu/2 sum |C dx_t|^2`.
    pub observation: f64,
}

impl LedgerEntry {
    /// `drop - (damping + regressor + dynamics + observation)`.
    pub fn imbalance(&self) -> f64 {
        self.drop - (self.damping + self.regressor + self.dynamics + self.observation)
    }

    /// Imbalance when the regressor term is left out of the right-hand side.
    pub fn imbalance_without_regressor(&self) -> f64 {
        self.drop - (self.damping + self.dynamics + self.observation)
    }
}

/// Result of [`alternate`].
#[derive(Debug, Clone, PartialEq)]
pub struct AltMinResult {
    pub a: Matrix,
    pub states: Vec<Vector>,
    pub adjoints: Vec<Vector>,
    pub report: DescentReport,
    pub ledger: Vec<LedgerEntry>,
    pub stationarity: f64,
}

fn initial_a(data: &ObservedData, gamma: f64) -> Matrix {
    match partial_obs::lift_estimator(data, gamma) {
        Ok(a) => a,
        Err(_) => Matrix::zeros(data.state_dim(), data.state_dim()),
    }
}

fn ledger_entry(
    iteration: usize,
    prev: (&Matrix, &[Vector], f64),
    next: (&Matrix, &[Vector], f64),
    data: &ObservedData,
    gamma: f64,
    mu: f64,
    rho: f64,
) -> LedgerEntry {
    let (a0, x0, j0) = prev;
    let (a1, x1, j1) = next;
    let da = a1 - a0;
    let dx: Vec<Vector> = x1.iter().zip(x0).map(|(n, o)| n - o).collect();
    let c = data.obs_matrix();
    let regressor: f64 = x0[..x0.len() - 1].iter().map(|x| (&da * x).norm_squared()).sum();
    let dynamics: f64 = dx.windows(2).map(|w| (&w[1] - a1 * &w[0]).norm_squared()).sum();
    let observation: f64 = dx[1..].iter().map(|d| (c * d).norm_squared()).sum();
    LedgerEntry {
        iteration,
        drop: j0 - j1,
        damping: (rho + 0.5) * da.norm_squared(),
        regressor: 0.5 * gamma * regressor,
        dynamics: 0.5 * gamma * dynamics,
        observation: 0.5 * mu * observation,
    }
}

/// Alternating scheme `x^n = argmin K_x(A^n, .)`, `A^{n+1} = update_a(A^n, x^n)`.
///
/// The report's `step` history holds `|A^{n+1} - A^n|_F` and `grad_norm` holds
/// the stationarity residual of each iterate.
pub fn alternate(data: &ObservedData, gamma: f64, mu: f64, rho: f64, opts: &AltMinOptions) -> Result<AltMinResult> {
    check_positive("gamma", gamma)?;
    check_positive("mu", mu)?;
    check_positive("grad_tol", opts.grad_tol)?;
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!("rho must be >= 0, got {rho}")));
    }
    let mut a = match &opts.init {
        Some(init) => {
            check_square("A^1", init, data.state_dim())?;
            init.clone()
        }
        None => initial_a(data, gamma),
    };
    let mut sol: SmootherSolution = smoother_solve(&a, data, gamma, mu)?;
    let mut value = joint_objective(&a, &sol.states, data, gamma, mu);
    let mut residual = stationarity_residual(&a, &sol.states, &sol.adjoints, data, gamma, mu)?;
    let mut report = DescentReport::new();
    let mut ledger = Vec::new();
    report.record(value, residual, a.norm());
    let mut termination = if residual <= opts.grad_tol {
        Termination::Converged
    } else {
        Termination::MaxIters
    };
    let mut iteration = 1;
    while termination != Termination::Converged && iteration < opts.max_iters {
        let next_a = update_a(&a, &sol.states, gamma, rho)?;
        let next_sol = smoother_solve(&next_a, data, gamma, mu)?;
        let next_value = joint_objective(&next_a, &next_sol.states, data, gamma, mu);
        ledger.push(ledger_entry(
            iteration,
            (&a, &sol.states, value),
            (&next_a, &next_sol.states, next_value),
            data,
            gamma,
            mu,
            rho,
        ));
        let change = (&next_a - &a).norm();
        residual = stationarity_residual(&next_a, &next_sol.states, &next_sol.adjoints, data, gamma, mu)?;
        a = next_a;
        sol = next_sol;
        value = next_value;
        iteration += 1;
        report.step.push(change);
        report.record(value, residual, a.norm());
        if !value.is_finite() {
            termination = Termination::Diverged;
        } else if change.max(residual) <= opts.grad_tol {
            termination = Termination::Converged;
        }
    }
    report.termination = termination;
    Ok(AltMinResult {
        a,
        states: sol.states,
        adjoints: sol.adjoints,
        report,
        ledger,
        stationarity: residual,
    })
}

/// Dual-control iteration `A^{n+1} = -sum p^n_{t+1} (x^n_t)*`, with `x^n` and
/// `p^n` from the smoother at `A^n`. No convergence is claimed for repeated use.
pub fn dual_control_step(a_n: &Matrix, data: &ObservedData, gamma: f64, mu: f64) -> Result<Matrix> {
    let sol = smoother_solve(a_n, data, gamma, mu)?;
    let n = data.state_dim();
    let mut next = Matrix::zeros(n, n);
    for t in 0..data.horizon() - 1 {
        next -= &sol.adjoints[t + 1] * sol.states[t].transpose();
    }
    Ok(next)
}

/// The quadratic `1/(2 gamma) sum |q_t|^2 + 1/2 sum (x_t . x_s) q_s . q_t + sum x_{t+1} . q_t`
/// whose minimizer over `q_1..q_{T-1}` is `p_2..p_T` at a stationary point.
pub fn stationary_dual_value(states: &[Vector], gamma: f64, q: &[Vector]) -> Result<f64> {
    let traj = Trajectory::new(states.to_vec())?;
    full_obs::dual_objective(&traj, gamma, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate_observed;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn scalar_instance() -> ObservedData {
        simulate_observed(&scalar(0.5), &scalar(1.0), &Vector::from_element(1, 1.0), 3).unwrap()
    }

    fn vecs(v: &[f64]) -> Vec<Vector> {
        v.iter().map(|&x| Vector::from_element(1, x)).collect()
    }

    #[test]
    fn update_hand_value() {
        let a = update_a(&scalar(0.0), &vecs(&[1.0, 0.5, 0.25]), 1.0, 1.0).unwrap();
        assert!((a[(0, 0)] - 0.625 / 3.25).abs() < 1e-15);
    }

    #[test]
    fn undamped_update_is_ridge() {
        let states = vec![
            Vector::from_row_slice(&[1.0, 0.0]),
            Vector::from_row_slice(&[0.3, 0.7]),
            Vector::from_row_slice(&[-0.2, 0.4]),
            Vector::from_row_slice(&[0.5, 0.1]),
        ];
        let a = update_a(&Matrix::from_element(2, 2, 9.0), &states, 2.5, 0.0).unwrap();
        let ridge = full_obs::ridge(&Trajectory::new(states).unwrap(), 2.5).unwrap();
        assert!((a - ridge).norm() < 1e-14);
    }

    #[test]
    fn heavy_damping_freezes_update() {
        let prev = scalar(0.8);
        let a = update_a(&prev, &vecs(&[1.0, 0.5, 0.25]), 1.0, 1e12).unwrap();
        assert!((a - prev).norm() < 1e-11);
    }

    #[test]
    fn exact_data_exact_states() {
        let data = scalar_instance();
        let states = minimize_kx(&scalar(0.5), &data, 1.0, 1.0).unwrap();
        assert!(state_cost(&scalar(0.5), &states, &data, 1.0, 1.0) < 1e-30);
        assert!((states[2][0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_data_is_fixed_point() {
        let data = ObservedData::new(Vector::zeros(1), scalar(1.0), vec![Vector::zeros(1); 2]).unwrap();
        let res = alternate(&data, 1.0, 1.0, 0.0, &AltMinOptions::default()).unwrap();
        assert!(res.report.converged());
        assert_eq!(res.report.iterations(), 1);
        assert_eq!(res.a[(0, 0)], 0.0);
        assert_eq!(res.report.final_objective(), Some(0.0));
        assert_eq!(dual_control_step(&scalar(0.0), &data, 1.0, 1.0).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn scalar_run_converges_with_balanced_ledger() {
        let data = scalar_instance();
        for rho in [0.0, 1.0, 10.0] {
            let res = alternate(&data, 10.0, 10.0, rho, &AltMinOptions::default()).unwrap();
            assert!(res.report.converged());
            assert!(res.stationarity <= 1e-8);
            assert!(res.report.is_monotone_within(1e-14));
            for e in &res.ledger {
                assert!(e.imbalance().abs() <= 1e-10, "{e:?}");
            }
        }
    }

    #[test]
    fn dual_step_two_routes() {
        let data = scalar_instance();
        let a0 = scalar(0.0);
        let x = minimize_kx(&a0, &data, 2.0, 3.0).unwrap();
        let direct: f64 = (0..2).map(|t| 2.0 * (x[t + 1][0] - 0.0 * x[t][0]) * x[t][0]).sum();
        let step = dual_control_step(&a0, &data, 2.0, 3.0).unwrap();
        assert!((step[(0, 0)] - direct).abs() < 1e-12);
    }

    #[test]
    fn dual_step_fixed_point() {
        let data = scalar_instance();
        let res = alternate(&data, 5.0, 5.0, 0.0, &AltMinOptions::default()).unwrap();
        let step = dual_control_step(&res.a, &data, 5.0, 5.0).unwrap();
        assert!((step - &res.a).norm() <= res.stationarity + 1e-12);
    }
}
