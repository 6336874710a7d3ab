//! Identification of `A` from a fully observed trajectory.
//!
//! The ridge objective is `J(A) = 1/2 tr(A A*) + gamma/2 sum |x_{t+1} - A x_t|^2`
//! with unique minimizer `A^gamma = S (I/gamma + G)^{-1}`, where
//! `S = sum x_{t+1} x_t*` and `G = sum x_t x_t*` (both over `t = 1..T-1`).

use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, spd_right_solve, spd_solve};
use crate::model::{check_positive, check_square, Matrix, Trajectory, Vector};
use crate::report::{DescentReport, Termination};

/// Relative singular-value cutoff used to decide whether `G` is invertible.
pub const GRAM_RANK_TOL: f64 = 1e-12;

fn require_full_rank(gram: &Matrix) -> Result<()> {
    let rank = linalg::numerical_rank(gram, GRAM_RANK_TOL);
    if rank < gram.nrows() {
        return Err(Error::RankDeficient {
            rank,
            dim: gram.nrows(),
        });
    }
    Ok(())
}

fn regularized_gram(gram: &Matrix, gamma: f64) -> Matrix {
    gram + Matrix::identity(gram.nrows(), gram.ncols()) / gamma
}

/// Unpenalized least squares `S G^{-1}`.
pub fn least_squares(traj: &Trajectory) -> Result<Matrix> {
    let (cross, gram) = traj.moments();
    require_full_rank(&gram)?;
    spd_right_solve(&cross, &gram).ok_or(Error::RankDeficient {
        rank: linalg::numerical_rank(&gram, GRAM_RANK_TOL),
        dim: gram.nrows(),
    })
}

/// Ridge estimate `A^gamma = S (I/gamma + G)^{-1}`.
pub fn ridge(traj: &Trajectory, gamma: f64) -> Result<Matrix> {
    check_positive("gamma", gamma)?;
    let (cross, gram) = traj.moments();
    Ok(ridge_from_moments(&cross, &gram, gamma))
}

pub(crate) fn ridge_from_moments(cross: &Matrix, gram: &Matrix, gamma: f64) -> Matrix {
    spd_right_solve(cross, &regularized_gram(gram, gamma))
        .expect("I/gamma + G is positive definite")
}

/// Coefficients `p_2..p_T` of the dual representation `A^gamma = -sum p_{t+1} x_t*`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCoefficients {
    coeffs: Vec<Vector>,
    pub gamma: f64,
}

impl DualCoefficients {
    /// `p_t` for `t` in `2..=T`.
    pub fn p(&self, t: usize) -> &Vector {
        &self.coeffs[t - 2]
    }

    /// `p_2..p_T`.
    pub fn as_slice(&self) -> &[Vector] {
        &self.coeffs
    }

    /// `-sum_{t=1}^{T-1} p_{t+1} x_t*`.
    pub fn reconstruct(&self, traj: &Trajectory) -> Matrix {
        let n = traj.dim();
        let mut a = Matrix::zeros(n, n);
        for (t, p) in self.coeffs.iter().enumerate() {
            a -= p * traj.state(t + 1).transpose();
        }
        a
    }
}

fn state_kernel(traj: &Trajectory) -> Matrix {
    let m = traj.horizon() - 1;
    Matrix::from_fn(m, m, |i, j| traj.state(i + 1).dot(traj.state(j + 1)))
}

/// Dual payoff `K_gamma(q)` for controls `q_1..q_{T-1}`.
pub fn dual_objective(traj: &Trajectory, gamma: f64, q: &[Vector]) -> Result<f64> {
    let m = traj.horizon() - 1;
    if q.len() != m || q.iter().any(|v| v.len() != traj.dim()) {
        return Err(dim_err(format!(
            "dual controls must be {m} vectors of length {}",
            traj.dim()
        )));
    }
    let kernel = state_kernel(traj);
    let mut value = 0.0;
    for t in 0..m {
        value += q[t].norm_squared() / (2.0 * gamma);
        value += traj.state(t + 2).dot(&q[t]);
        for s in 0..m {
            value += 0.5 * kernel[(t, s)] * q[s].dot(&q[t]);
        }
    }
    Ok(value)
}

/// Solves `p_{t+1}/gamma + sum_s (x_t . x_s) p_{s+1} = -x_{t+1}` and returns the
/// coefficients together with the optimal dual value.
///
/// The `(T-1)n` system is `(I/gamma + K) (x) I_n` with `K` the state kernel, so
/// it is solved as `T-1` equations with `n` right-hand sides.
pub fn dual_solve(traj: &Trajectory, gamma: f64) -> Result<(DualCoefficients, f64)> {
    check_positive("gamma", gamma)?;
    let m = traj.horizon() - 1;
    let n = traj.dim();
    let system = regularized_gram(&state_kernel(traj), gamma);
    let rhs = Matrix::from_fn(m, n, |t, i| -traj.state(t + 2)[i]);
    let sol = spd_solve(&system, &rhs).expect("I/gamma + K is positive definite");
    let coeffs: Vec<Vector> = (0..m).map(|t| sol.row(t).transpose()).collect();
    let value = dual_objective(traj, gamma, &coeffs)?;
    Ok((DualCoefficients { coeffs, gamma }, value))
}

/// `J(A)` and its gradient `A (I + gamma G) - gamma S`.
pub fn objective_and_gradient(a: &Matrix, traj: &Trajectory, gamma: f64) -> Result<(f64, Matrix)> {
    check_square("A", a, traj.dim())?;
    check_positive("gamma", gamma)?;
    let (cross, gram) = traj.moments();
    let value = 0.5 * a.norm_squared()
        + 0.5
            * gamma
            * traj
                .states()
                .windows(2)
                .map(|w| (&w[1] - a * &w[0]).norm_squared())
                .sum::<f64>();
    Ok((value, gradient_from_moments(a, &cross, &gram, gamma)))
}

fn gradient_from_moments(a: &Matrix, cross: &Matrix, gram: &Matrix, gamma: f64) -> Matrix {
    a + a * gram * gamma - cross * gamma
}

// J expressed through the moments; exact for the quadratic objective.
fn objective_from_moments(a: &Matrix, cross: &Matrix, gram: &Matrix, energy_next: f64, gamma: f64) -> f64 {
    let fit = energy_next - 2.0 * a.dot(cross) + (a * gram).dot(a);
    0.5 * a.norm_squared() + 0.5 * gamma * fit
}

/// Upper end of the admissible fixed-step interval, `2 / (1 + gamma sum |x_t|^2)`.
pub fn step_bound(traj: &Trajectory, gamma: f64) -> f64 {
    2.0 / (1.0 + gamma * traj.regressor_energy())
}

/// Options for the fixed-step gradient descent on `J(A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GdOptions {
    /// Fixed step; `None` uses half of [`step_bound`].
    pub step: Option<f64>,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Starting matrix; `None` starts from zero.
    pub init: Option<Matrix>,
}

impl Default for GdOptions {
    fn default() -> Self {
        Self {
            step: None,
            max_iters: 1_000_000,
            grad_tol: 1e-10,
            init: None,
        }
    }
}

/// Objective growth beyond this factor of the starting value is reported as divergence.
const DIVERGENCE_FACTOR: f64 = 1e12;

/// Iterates `A^{n+1} = A^n - step * DJ(A^n)` until `|DJ| <= grad_tol`.
///
/// Steps above [`step_bound`] are accepted and their effect is visible in
/// `DescentReport::objective_increases`.
pub fn gradient_descent(traj: &Trajectory, gamma: f64, opts: &GdOptions) -> Result<(Matrix, DescentReport)> {
    check_positive("gamma", gamma)?;
    check_positive("grad_tol", opts.grad_tol)?;
    let step = opts.step.unwrap_or_else(|| 0.5 * step_bound(traj, gamma));
    check_positive("step", step)?;
    let n = traj.dim();
    let mut a = match &opts.init {
        Some(init) => {
            check_square("initial A", init, n)?;
            init.clone()
        }
        None => Matrix::zeros(n, n),
    };
    let (cross, gram) = traj.moments();
    let energy_next: f64 = traj.states()[1..].iter().map(|x| x.norm_squared()).sum();

    let mut report = DescentReport::new();
    let mut grad = gradient_from_moments(&a, &cross, &gram, gamma);
    let first = objective_from_moments(&a, &cross, &gram, energy_next, gamma);
    report.record(first, grad.norm(), a.norm());
    let ceiling = DIVERGENCE_FACTOR * (first.abs() + 1.0);
    for _ in 0..opts.max_iters {
        if grad.norm() <= opts.grad_tol {
            report.termination = Termination::Converged;
            return Ok((a, report));
        }
        a -= &grad * step;
        grad = gradient_from_moments(&a, &cross, &gram, gamma);
        let value = objective_from_moments(&a, &cross, &gram, energy_next, gamma);
        report.step.push(step);
        report.record(value, grad.norm(), a.norm());
        if !value.is_finite() || value > ceiling {
            report.termination = Termination::Diverged;
            return Ok((a, report));
        }
    }
    report.termination = if grad.norm() <= opts.grad_tol {
        Termination::Converged
    } else {
        Termination::MaxIters
    };
    Ok((a, report))
}

/// Number of rank-one updates between full refactorizations of the gain.
pub const REFACTOR_INTERVAL: usize = 64;

/// Ridge estimate maintained recursively in the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeState {
    horizon: usize,
    gamma: f64,
    /// `B^T = (I/gamma + sum_{t<T} x_t x_t*)^{-1}`.
    gain: Matrix,
    /// `(B^T)^{-1}`, kept for periodic refactorization.
    precision: Matrix,
    estimate: Matrix,
    since_refactor: usize,
}

impl RidgeState {
    /// Batch construction from `x_1..x_T`.
    pub fn from_trajectory(traj: &Trajectory, gamma: f64) -> Result<Self> {
        check_positive("gamma", gamma)?;
        let (cross, gram) = traj.moments();
        let precision = regularized_gram(&gram, gamma);
        let n = traj.dim();
        let gain = spd_solve(&precision, &Matrix::identity(n, n)).expect("positive definite");
        let estimate = ridge_from_moments(&cross, &gram, gamma);
        Ok(Self {
            horizon: traj.horizon(),
            gamma,
            gain,
            precision,
            estimate,
            since_refactor: 0,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gain(&self) -> &Matrix {
        &self.gain
    }

    pub fn estimate(&self) -> &Matrix {
        &self.estimate
    }

    /// Extends the horizon by one transition `(x_T, x_{T+1})`:
    /// `B^{T+1}` by Sherman-Morrison, then
    /// `A^{T+1} = A^T + (x_{T+1} - A^T x_T) x_T* B^{T+1}`.
    pub fn recursive_update(&self, current: &Vector, next: &Vector) -> Result<Self> {
        let n = self.estimate.nrows();
        if current.len() != n || next.len() != n {
            return Err(dim_err(format!(
                "transition vectors must have length {n}, got {} and {}",
                current.len(),
                next.len()
            )));
        }
        let precision = &self.precision + current * current.transpose();
        let since_refactor = self.since_refactor + 1;
        let mut gain = if since_refactor >= REFACTOR_INTERVAL {
            spd_solve(&precision, &Matrix::identity(n, n)).expect("positive definite")
        } else {
            let bx = &self.gain * current;
            &self.gain - &bx * bx.transpose() / (1.0 + current.dot(&bx))
        };
        linalg::symmetrize(&mut gain);
        let innovation = next - &self.estimate * current;
        let estimate = &self.estimate + innovation * (current.transpose() * &gain);
        Ok(Self {
            horizon: self.horizon + 1,
            gamma: self.gamma,
            gain,
            precision,
            estimate,
            since_refactor: since_refactor % REFACTOR_INTERVAL,
        })
    }
}

/// Truncated large-`gamma` expansion
/// `LS (I + sum_{j=1}^{J} (-1)^j gamma^{-j} G^{-j})`.
pub fn neumann_expansion(traj: &Trajectory, gamma: f64, order: usize) -> Result<Matrix> {
    check_positive("gamma", gamma)?;
    let (_, gram) = traj.moments();
    let ls = least_squares(traj)?;
    let mut term = ls.clone();
    let mut total = ls;
    for j in 1..=order {
        term = spd_right_solve(&term, &gram).ok_or(Error::RankDeficient {
            rank: linalg::numerical_rank(&gram, GRAM_RANK_TOL),
            dim: gram.nrows(),
        })?;
        let sign = if j % 2 == 1 { -1.0 } else { 1.0 };
        total += &term * (sign * gamma.powi(-(j as i32)));
    }
    Ok(total)
}

/// Minimum-Frobenius-norm matrix consistent with the transitions, `S G^+`.
pub fn min_norm_consistent(traj: &Trajectory) -> Matrix {
    let (cross, gram) = traj.moments();
    cross * linalg::pseudo_inverse(&gram, GRAM_RANK_TOL)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RidgePathPoint {
    pub gamma: f64,
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub estimate: Matrix,
    /// `|A^gamma - A_mn|_F`.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinNormDiagnostics {
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub min_norm: Matrix,
    pub path: Vec<RidgePathPoint>,
    /// Distances non-increasing along the sorted `gamma` sequence.
    pub monotone: bool,
}

/// Ridge path along an increasing `gamma` sequence, compared with the
/// minimum-norm consistent matrix.
pub fn min_norm_limit(traj: &Trajectory, gammas: &[f64]) -> Result<MinNormDiagnostics> {
    let min_norm = min_norm_consistent(traj);
    let (cross, gram) = traj.moments();
    let mut sorted = gammas.to_vec();
    for &g in &sorted {
        check_positive("gamma", g)?;
    }
    sorted.sort_by(f64::total_cmp);
    let path: Vec<RidgePathPoint> = sorted
        .iter()
        .map(|&gamma| {
            let estimate = ridge_from_moments(&cross, &gram, gamma);
            let distance = (&estimate - &min_norm).norm();
            RidgePathPoint {
                gamma,
                estimate,
                distance,
            }
        })
        .collect();
    // 1e-14 relative slack for round-off once the path has converged
    let monotone = path
        .windows(2)
        .all(|w| w[1].distance <= w[0].distance * (1.0 + 1e-12) + 1e-14);
    Ok(MinNormDiagnostics {
        min_norm,
        path,
        monotone,
    })
}
