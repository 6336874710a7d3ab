//! Identification under partial observation `y_t = C x_t`.
//!
//! The decision variable is `Z = (A, v_1..v_{T-1})` with states generated by
//! `x_{t+1} = A x_t + v_t`, `x_1 = x`, and objective
//!
//! ```text
//! J(Z) = 1/2 tr(A A*) + gamma/2 sum_t |v_t|^2 + mu/2 sum_{t=2}^T |y_t - C x_t|^2
//! ```
//!
//! Gradients come from the adjoint sequence
//! `p_t = A* p_{t+1} - mu C*(y_t - C x_t)`, `p_T = -mu C*(y_T - C x_T)`.
//! `p_1` is computed with `y_1 = C x` (zero innovation); it does not enter
//! the gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::full_obs;
use crate::linalg::{self, spd_solve_vec};
use crate::model::{check_positive, check_square, Matrix, ObservedData, Trajectory, Vector};
use crate::report::{DescentReport, Termination};

/// Relative rank threshold for `C C*`.
pub const OBS_RANK_TOL: f64 = 1e-12;

/// Minimum-norm preimages `x_1 = x`, `x_t = C*(CC*)^{-1} y_t`.
pub fn lifted_states(data: &ObservedData) -> Result<Trajectory> {
    let c = data.obs_matrix();
    let cct = c * c.transpose();
    let rank = linalg::numerical_rank(&cct, OBS_RANK_TOL);
    if rank < cct.nrows() {
        return Err(Error::DependentObservations {
            rank,
            rows: cct.nrows(),
        });
    }
    let mut states = vec![data.initial().clone()];
    for y in data.observations() {
        let w = spd_solve_vec(&cct, y).ok_or(Error::DependentObservations {
            rank,
            rows: cct.nrows(),
        })?;
        states.push(c.transpose() * w);
    }
    Trajectory::new(states)
}

/// Ridge estimate on the lifted states.
pub fn lift_estimator(data: &ObservedData, gamma: f64) -> Result<Matrix> {
    full_obs::ridge(&lifted_states(data)?, gamma)
}

/// `Z = (A, v_1..v_{T-1})`; also used for gradients and directions.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionPoint {
    pub a: Matrix,
    pub v: Vec<Vector>,
}

/// Gradient `DJ(Z)`, shaped like the decision point.
pub type GradientValue = DecisionPoint;

impl DecisionPoint {
    pub fn zeros(n: usize, horizon: usize) -> Self {
        Self {
            a: Matrix::zeros(n, n),
            v: vec![Vector::zeros(n); horizon - 1],
        }
    }

    /// Decision point reproducing a given state path: `v_t = x_{t+1} - A x_t`.
    pub fn from_states(a: Matrix, states: &[Vector]) -> Self {
        let v = states.windows(2).map(|w| &w[1] - &a * &w[0]).collect();
        Self { a, v }
    }

    /// `tr(A A*) + sum |v_t|^2`.
    pub fn norm_squared(&self) -> f64 {
        self.a.norm_squared() + self.v.iter().map(|v| v.norm_squared()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.a.dot(&other.a) + self.v.iter().zip(&other.v).map(|(a, b)| a.dot(b)).sum::<f64>()
    }

    /// `self + alpha * dir`.
    pub fn add_scaled(&self, alpha: f64, dir: &Self) -> Self {
        Self {
            a: &self.a + &dir.a * alpha,
            v: self.v.iter().zip(&dir.v).map(|(v, d)| v + d * alpha).collect(),
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            a: &self.a * alpha,
            v: self.v.iter().map(|v| v * alpha).collect(),
        }
    }

    fn check_shape(&self, data: &ObservedData) -> Result<()> {
        let n = data.state_dim();
        check_square("A", &self.a, n)?;
        if self.v.len() != data.horizon() - 1 || self.v.iter().any(|v| v.len() != n) {
            return Err(dim_err(format!(
                "controls must be {} vectors of length {n}",
                data.horizon() - 1
            )));
        }
        Ok(())
    }
}

/// `x_1 = x`, `x_{t+1} = A x_t + v_t`.
pub fn forward_states(z: &DecisionPoint, initial: &Vector) -> Vec<Vector> {
    let mut states = Vec::with_capacity(z.v.len() + 1);
    states.push(initial.clone());
    for (t, v) in z.v.iter().enumerate() {
        let next = &z.a * &states[t] + v;
        states.push(next);
    }
    states
}

/// Adjoint sequence `p_1..p_T` for given `A` and states.
pub fn adjoint_states(a: &Matrix, states: &[Vector], data: &ObservedData, mu: f64) -> Vec<Vector> {
    let horizon = data.horizon();
    let c = data.obs_matrix();
    let ct = c.transpose();
    let mut adj = vec![Vector::zeros(data.state_dim()); horizon];
    adj[horizon - 1] = -(&ct * (data.y(horizon) - c * &states[horizon - 1])) * mu;
    for t in (1..horizon).rev() {
        let innovation = data.y_or_initial(t) - c * &states[t - 1];
        adj[t - 1] = a.transpose() * &adj[t] - (&ct * innovation) * mu;
    }
    adj
}

/// `1/2 tr(AA*) + gamma/2 sum |x_{t+1} - A x_t|^2 + mu/2 sum |y_t - C x_t|^2`,
/// the objective written in `(A, x)` coordinates.
pub fn joint_objective(a: &Matrix, states: &[Vector], data: &ObservedData, gamma: f64, mu: f64) -> f64 {
    let c = data.obs_matrix();
    let dynamics: f64 = states.windows(2).map(|w| (&w[1] - a * &w[0]).norm_squared()).sum();
    let fit: f64 = (2..=data.horizon())
        .map(|t| (data.y(t) - c * &states[t - 1]).norm_squared())
        .sum();
    0.5 * a.norm_squared() + 0.5 * gamma * dynamics + 0.5 * mu * fit
}

/// Objective value, gradient, and the forward/adjoint sequences at `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: GradientValue,
    pub states: Vec<Vector>,
    pub adjoints: Vec<Vector>,
}

fn objective_at(z: &DecisionPoint, data: &ObservedData, gamma: f64, mu: f64) -> f64 {
    objective_on_states(z, &forward_states(z, data.initial()), data, gamma, mu)
}

fn objective_on_states(z: &DecisionPoint, states: &[Vector], data: &ObservedData, gamma: f64, mu: f64) -> f64 {
    let c = data.obs_matrix();
    let fit: f64 = (2..=data.horizon())
        .map(|t| (data.y(t) - c * &states[t - 1]).norm_squared())
        .sum();
    0.5 * z.a.norm_squared()
        + 0.5 * gamma * z.v.iter().map(|v| v.norm_squared()).sum::<f64>()
        + 0.5 * mu * fit
}

/// `J(Z)` alone.
pub fn objective(z: &DecisionPoint, data: &ObservedData, gamma: f64, mu: f64) -> Result<f64> {
    z.check_shape(data)?;
    Ok(objective_at(z, data, gamma, mu))
}

/// `J(Z)` and `DJ(Z) = (A + sum p_{t+1} x_t*, gamma v_t + p_{t+1})`.
pub fn objective_and_gradient(z: &DecisionPoint, data: &ObservedData, gamma: f64, mu: f64) -> Result<Evaluation> {
    check_positive("gamma", gamma)?;
    check_positive("mu", mu)?;
    z.check_shape(data)?;
    Ok(evaluate(z, data, gamma, mu))
}

fn evaluate(z: &DecisionPoint, data: &ObservedData, gamma: f64, mu: f64) -> Evaluation {
    let states = forward_states(z, data.initial());
    let adjoints = adjoint_states(&z.a, &states, data, mu);
    let mut da = z.a.clone();
    for t in 0..z.v.len() {
        da += &adjoints[t + 1] * states[t].transpose();
    }
    let dv = z
        .v
        .iter()
        .enumerate()
        .map(|(t, v)| v * gamma + &adjoints[t + 1])
        .collect();
    let value = objective_on_states(z, &states, data, gamma, mu);
    Evaluation {
        value,
        gradient: DecisionPoint { a: da, v: dv },
        states,
        adjoints,
    }
}

// x~_1 = 0, x~_{t+1} = A x~_t + A~ x_t + v~_t
fn tangent_states(z: &DecisionPoint, dir: &DecisionPoint, states: &[Vector]) -> Vec<Vector> {
    let mut tan = Vec::with_capacity(states.len());
    tan.push(Vector::zeros(states[0].len()));
    for t in 0..dir.v.len() {
        let next = &z.a * &tan[t] + &dir.a * &states[t] + &dir.v[t];
        tan.push(next);
    }
    tan
}

/// Second derivative along a direction:
/// `tr(A~A~*) + 2 sum p_{t+1}.A~ x~_t + gamma sum |v~_t|^2 + mu sum |C x~_t|^2`.
pub fn hessian_quadratic_form(
    z: &DecisionPoint,
    dir: &DecisionPoint,
    data: &ObservedData,
    gamma: f64,
    mu: f64,
) -> Result<f64> {
    z.check_shape(data)?;
    dir.check_shape(data)?;
    let states = forward_states(z, data.initial());
    let adjoints = adjoint_states(&z.a, &states, data, mu);
    Ok(quadratic_form_with(z, dir, data, gamma, mu, &states, &adjoints))
}

fn quadratic_form_with(
    z: &DecisionPoint,
    dir: &DecisionPoint,
    data: &ObservedData,
    gamma: f64,
    mu: f64,
    states: &[Vector],
    adjoints: &[Vector],
) -> f64 {
    let tan = tangent_states(z, dir, states);
    let c = data.obs_matrix();
    let cross: f64 = (0..dir.v.len())
        .map(|t| adjoints[t + 1].dot(&(&dir.a * &tan[t])))
        .sum();
    let controls: f64 = dir.v.iter().map(|v| v.norm_squared()).sum();
    let observed: f64 = tan[1..].iter().map(|x| (c * x).norm_squared()).sum();
    dir.a.norm_squared() + 2.0 * cross + gamma * controls + mu * observed
}

/// Hessian applied to a direction, from the linearized forward and adjoint
/// systems: `p~_t = A* p~_{t+1} + A~* p_{t+1} + mu C*C x~_t`,
/// `p~_T = mu C*C x~_T`.
pub fn hessian_vector_product(
    z: &DecisionPoint,
    dir: &DecisionPoint,
    data: &ObservedData,
    gamma: f64,
    mu: f64,
) -> Result<DecisionPoint> {
    z.check_shape(data)?;
    dir.check_shape(data)?;
    let states = forward_states(z, data.initial());
    let adjoints = adjoint_states(&z.a, &states, data, mu);
    Ok(hvp_with(z, dir, data, gamma, mu, &states, &adjoints))
}

fn hvp_with(
    z: &DecisionPoint,
    dir: &DecisionPoint,
    data: &ObservedData,
    gamma: f64,
    mu: f64,
    states: &[Vector],
    adjoints: &[Vector],
) -> DecisionPoint {
    let horizon = data.horizon();
    let tan = tangent_states(z, dir, states);
    let c = data.obs_matrix();
    let ctc = c.transpose() * c;
    let mut tan_adj = vec![Vector::zeros(data.state_dim()); horizon];
    tan_adj[horizon - 1] = &ctc * &tan[horizon - 1] * mu;
    for t in (1..horizon).rev() {
        tan_adj[t - 1] =
            z.a.transpose() * &tan_adj[t] + dir.a.transpose() * &adjoints[t] + &ctc * &tan[t - 1] * mu;
    }
    let mut ha = dir.a.clone();
    for t in 0..dir.v.len() {
        ha += &tan_adj[t + 1] * states[t].transpose() + &adjoints[t + 1] * tan[t].transpose();
    }
    let hv = dir
        .v
        .iter()
        .enumerate()
        .map(|(t, v)| v * gamma + &tan_adj[t + 1])
        .collect();
    DecisionPoint { a: ha, v: hv }
}

/// Radius of the ball `|Z| <= sqrt(mu / min(1, gamma) * sum |y_t|^2)` that
/// contains every point with `J(Z) <= mu/2 sum |y_t|^2`.
pub fn trust_ball(data: &ObservedData, gamma: f64, mu: f64) -> Result<f64> {
    check_positive("gamma", gamma)?;
    check_positive("mu", mu)?;
    Ok((mu / gamma.min(1.0) * data.observation_energy()).sqrt())
}

/// Step selection for [`gradient_descent`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepRule {
    /// Backtracking with sufficient decrease `J(Z - s g) <= J(Z) - c s |g|^2`.
    /// Each search starts from twice the previous accepted step, capped at `max_step`.
    Armijo {
        shrink: f64,
        sufficient_decrease: f64,
        max_step: f64,
    },
    /// Fixed step `1 / L`, with `L` the largest curvature magnitude at the
    /// current iterate from `power_iters` power-iteration steps; capped at 1.
    Curvature { power_iters: usize },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Armijo {
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgdOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_rule: StepRule,
    /// Smallest step tried before reporting a failed search.
    pub min_step: f64,
    /// Starting point; `None` means `Z = (0, 0)`.
    pub init: Option<DecisionPoint>,
}

impl Default for PgdOptions {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            grad_tol: 1e-8,
            step_rule: StepRule::default(),
            min_step: 1e-16,
            init: None,
        }
    }
}

/// Result of [`gradient_descent`].
#[derive(Debug, Clone, PartialEq)]
pub struct PgdResult {
    pub point: DecisionPoint,
    pub states: Vec<Vector>,
    pub adjoints: Vec<Vector>,
    pub report: DescentReport,
    pub stationarity: f64,
}

fn largest_curvature(
    z: &DecisionPoint,
    data: &ObservedData,
    gamma: f64,
    mu: f64,
    eval: &Evaluation,
    iters: usize,
) -> f64 {
    let mut dir = eval.gradient.clone();
    if dir.norm() == 0.0 {
        dir = DecisionPoint {
            a: Matrix::from_element(z.a.nrows(), z.a.ncols(), 1.0),
            v: z.v.iter().map(|v| Vector::from_element(v.len(), 1.0)).collect(),
        };
    }
    dir = dir.scale(1.0 / dir.norm());
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        let hd = hvp_with(z, &dir, data, gamma, mu, &eval.states, &eval.adjoints);
        estimate = hd.dot(&dir).abs().max(estimate);
        let norm = hd.norm();
        if norm == 0.0 {
            break;
        }
        estimate = estimate.max(norm);
        dir = hd.scale(1.0 / norm);
    }
    estimate
}

/// Gradient descent `Z^{n+1} = Z^n - rho_n DJ(Z^n)` from `Z^1 = (0, 0)` (or
/// `opts.init`), stopping when `|DJ| <= grad_tol`.
pub fn gradient_descent(data: &ObservedData, gamma: f64, mu: f64, opts: &PgdOptions) -> Result<PgdResult> {
    check_positive("gamma", gamma)?;
    check_positive("mu", mu)?;
    check_positive("grad_tol", opts.grad_tol)?;
    let mut z = match &opts.init {
        Some(init) => {
            init.check_shape(data)?;
            init.clone()
        }
        None => DecisionPoint::zeros(data.state_dim(), data.horizon()),
    };
    let mut report = DescentReport::new();
    let mut eval = evaluate(&z, data, gamma, mu);
    report.record(eval.value, eval.gradient.norm(), z.norm());
    let mut last_step = match opts.step_rule {
        StepRule::Armijo { max_step, .. } => max_step,
        StepRule::Curvature { .. } => 1.0,
    };
    let mut termination = Termination::MaxIters;
    for _ in 0..opts.max_iters {
        let gnorm = eval.gradient.norm();
        if gnorm <= opts.grad_tol {
            termination = Termination::Converged;
            break;
        }
        let accepted = match opts.step_rule {
            StepRule::Armijo {
                shrink,
                sufficient_decrease,
                max_step,
            } => {
                let mut step = (2.0 * last_step).min(max_step);
                loop {
                    let trial = z.add_scaled(-step, &eval.gradient);
                    let value = objective_at(&trial, data, gamma, mu);
                    if value <= eval.value - sufficient_decrease * step * gnorm * gnorm {
                        break Some((step, trial));
                    }
                    step *= shrink;
                    if step < opts.min_step {
                        break None;
                    }
                }
            }
            StepRule::Curvature { power_iters } => {
                let curvature = largest_curvature(&z, data, gamma, mu, &eval, power_iters);
                let step = if curvature > 0.0 { (1.0 / curvature).min(1.0) } else { 1.0 };
                Some((step, z.add_scaled(-step, &eval.gradient)))
            }
        };
        let Some((step, next)) = accepted else {
            termination = Termination::StepSearchFailed;
            break;
        };
        last_step = step;
        z = next;
        eval = evaluate(&z, data, gamma, mu);
        report.step.push(step);
        report.record(eval.value, eval.gradient.norm(), z.norm());
        if !eval.value.is_finite() {
            termination = Termination::Diverged;
            break;
        }
    }
    if termination == Termination::MaxIters && eval.gradient.norm() <= opts.grad_tol {
        termination = Termination::Converged;
    }
    report.termination = termination;
    let stationarity = stationarity_residual(&z.a, &eval.states, &eval.adjoints, data, gamma, mu)?;
    Ok(PgdResult {
        point: z,
        states: eval.states,
        adjoints: eval.adjoints,
        report,
        stationarity,
    })
}

/// Runs [`gradient_descent`] from `Z = (0, 0)` and from `starts - 1` random
/// points inside the descent region `J(Z) <= mu/2 sum |y|^2`, returning the
/// run with the lowest final objective.
pub fn multi_start(
    data: &ObservedData,
    gamma: f64,
    mu: f64,
    opts: &PgdOptions,
    starts: usize,
    seed: u64,
) -> Result<PgdResult> {
    let mut best = gradient_descent(data, gamma, mu, opts)?;
    let bound = 0.5 * mu * data.observation_energy();
    let radius = trust_ball(data, gamma, mu)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, horizon) = (data.state_dim(), data.horizon());
    for _ in 1..starts {
        let raw = DecisionPoint {
            a: Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)),
            v: (0..horizon - 1)
                .map(|_| Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
                .collect(),
        };
        let norm = raw.norm();
        if norm == 0.0 || radius == 0.0 {
            continue;
        }
        let mut init = raw.scale(0.5 * radius / norm);
        while objective_at(&init, data, gamma, mu) > bound {
            init = init.scale(0.5);
        }
        let run_opts = PgdOptions {
            init: Some(init),
            ..opts.clone()
        };
        let run = gradient_descent(data, gamma, mu, &run_opts)?;
        if run.report.final_objective().unwrap_or(f64::INFINITY) < best.report.final_objective().unwrap_or(f64::INFINITY) {
            best = run;
        }
    }
    Ok(best)
}

/// Largest violation of the stationarity system: `|A + sum p_{t+1} x_t*|`,
/// `|x_{t+1} - A x_t + p_{t+1}/gamma|`, the adjoint recursion (with
/// `y_1 = C x`), its terminal condition, and `x_1 = x`.
pub fn stationarity_residual(
    a: &Matrix,
    states: &[Vector],
    adjoints: &[Vector],
    data: &ObservedData,
    gamma: f64,
    mu: f64,
) -> Result<f64> {
    let horizon = data.horizon();
    let n = data.state_dim();
    check_square("A", a, n)?;
    if states.len() != horizon || adjoints.len() != horizon {
        return Err(dim_err(format!(
            "expected {horizon} states and adjoints, got {} and {}",
            states.len(),
            adjoints.len()
        )));
    }
    if states.iter().chain(adjoints).any(|v| v.len() != n) {
        return Err(dim_err(format!("states and adjoints must have length {n}")));
    }
    let c = data.obs_matrix();
    let ct = c.transpose();
    let mut coupling = a.clone();
    for t in 0..horizon - 1 {
        coupling += &adjoints[t + 1] * states[t].transpose();
    }
    let mut worst = coupling.norm();
    worst = worst.max((&states[0] - data.initial()).norm());
    for t in 0..horizon - 1 {
        let r = &states[t + 1] - a * &states[t] + &adjoints[t + 1] / gamma;
        worst = worst.max(r.norm());
    }
    for t in 1..horizon {
        let innovation = data.y_or_initial(t) - c * &states[t - 1];
        let r = &adjoints[t - 1] - a.transpose() * &adjoints[t] + (&ct * innovation) * mu;
        worst = worst.max(r.norm());
    }
    let terminal = &adjoints[horizon - 1] + (&ct * (data.y(horizon) - c * &states[horizon - 1])) * mu;
    Ok(worst.max(terminal.norm()))
}
