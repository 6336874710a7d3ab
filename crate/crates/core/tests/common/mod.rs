//! Shared generators and independent reference computations for the
//! integration tests. Nothing here calls into the solvers under test except
//! to build inputs.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sysid_core::model::{simulate_full, simulate_observed};
use sysid_core::partial_obs::DecisionPoint;
use sysid_core::{Matrix, ObservedData, Trajectory, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn r_range(r: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    r.random_range(lo..=hi)
}

pub fn r_unit(r: &mut ChaCha8Rng) -> f64 {
    r.random_range(0.0..1.0)
}

pub fn matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Random matrix rescaled to spectral norm `radius`.
pub fn contraction(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Matrix {
    let m = matrix(rng, n, n);
    let s = m.singular_values().max();
    if s == 0.0 {
        m
    } else {
        m * (radius / s)
    }
}

/// Trajectory of a random contraction from a random start.
pub fn trajectory(rng: &mut ChaCha8Rng, n: usize, horizon: usize) -> (Matrix, Trajectory) {
    let a = contraction(rng, n, 0.9);
    let x = vector(rng, n);
    let traj = simulate_full(&a, &x, horizon).unwrap();
    (a, traj)
}

/// Trajectory with a random (non-dynamical) state sequence.
pub fn free_trajectory(rng: &mut ChaCha8Rng, n: usize, horizon: usize) -> Trajectory {
    Trajectory::new((0..horizon).map(|_| vector(rng, n)).collect()).unwrap()
}

/// Observations of a random system with independent noise added.
pub fn noisy_observed(rng: &mut ChaCha8Rng, n: usize, p: usize, horizon: usize, noise: f64) -> (Matrix, ObservedData) {
    let a = contraction(rng, n, 0.8);
    let c = matrix(rng, p, n);
    let x = vector(rng, n);
    let clean = simulate_observed(&a, &c, &x, horizon).unwrap();
    let ys = clean
        .observations()
        .iter()
        .map(|y| y + vector(rng, p) * noise)
        .collect();
    (a, ObservedData::new(x, c, ys).unwrap())
}

pub fn decision_point(rng: &mut ChaCha8Rng, n: usize, horizon: usize, scale: f64) -> DecisionPoint {
    DecisionPoint {
        a: matrix(rng, n, n) * scale,
        v: (0..horizon - 1).map(|_| vector(rng, n) * scale).collect(),
    }
}

fn vec_col(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Ridge estimate from the Kronecker normal equations
/// `(I + gamma sum (x_t x_t^T (x) I)) vec A = gamma vec S`.
pub fn kron_ridge(traj: &Trajectory, gamma: f64) -> Matrix {
    let n = traj.dim();
    let states = traj.states();
    let mut lhs = Matrix::identity(n * n, n * n);
    let mut s = Matrix::zeros(n, n);
    for w in states.windows(2) {
        lhs += (&w[0] * w[0].transpose()).kronecker(&Matrix::identity(n, n)) * gamma;
        s += &w[1] * w[0].transpose();
    }
    let sol = lhs.lu().solve(&(vec_col(&s) * gamma)).unwrap();
    Matrix::from_column_slice(n, n, sol.as_slice())
}

/// Full-observation objective written out term by term.
pub fn full_objective(a: &Matrix, traj: &Trajectory, gamma: f64) -> f64 {
    let fit: f64 = traj.states().windows(2).map(|w| (&w[1] - a * &w[0]).norm_squared()).sum();
    0.5 * a.norm_squared() + 0.5 * gamma * fit
}

/// Partial-observation objective from its definition.
pub fn partial_objective(z: &DecisionPoint, data: &ObservedData, gamma: f64, mu: f64) -> f64 {
    let mut x = data.initial().clone();
    let mut fit = 0.0;
    for (k, v) in z.v.iter().enumerate() {
        x = &z.a * &x + v;
        fit += (data.y(k + 2) - data.obs_matrix() * &x).norm_squared();
    }
    let controls: f64 = z.v.iter().map(|v| v.norm_squared()).sum();
    0.5 * z.a.norm_squared() + 0.5 * gamma * controls + 0.5 * mu * fit
}

/// Coordinates of a decision point, `A` column-major then the controls.
pub fn flatten(z: &DecisionPoint) -> Vec<f64> {
    let mut out: Vec<f64> = z.a.as_slice().to_vec();
    for v in &z.v {
        out.extend(v.iter());
    }
    out
}

pub fn unflatten(like: &DecisionPoint, flat: &[f64]) -> DecisionPoint {
    let n = like.a.nrows();
    let a = Matrix::from_column_slice(n, n, &flat[..n * n]);
    let v = like
        .v
        .iter()
        .enumerate()
        .map(|(k, _)| Vector::from_column_slice(&flat[n * n + k * n..n * n + (k + 1) * n]))
        .collect();
    DecisionPoint { a, v }
}

/// Central-difference gradient.
pub fn fd_gradient(f: impl Fn(&DecisionPoint) -> f64, z: &DecisionPoint, eps: f64) -> DecisionPoint {
    let base = flatten(z);
    let mut grad = vec![0.0; base.len()];
    for i in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[i] += eps;
        minus[i] -= eps;
        grad[i] = (f(&unflatten(z, &plus)) - f(&unflatten(z, &minus))) / (2.0 * eps);
    }
    unflatten(z, &grad)
}

/// Second difference `(f(z + e d) - 2 f(z) + f(z - e d)) / e^2`.
pub fn second_difference(f: impl Fn(&DecisionPoint) -> f64, z: &DecisionPoint, d: &DecisionPoint, eps: f64) -> f64 {
    (f(&z.add_scaled(eps, d)) - 2.0 * f(z) + f(&z.add_scaled(-eps, d))) / (eps * eps)
}

/// Dense solve of the stationarity system in `(x_1..x_T, p_1..p_T)` for fixed `A`:
/// `x_1 = x`, `x_{t+1} - A x_t + p_{t+1}/gamma = 0`,
/// `p_t - A* p_{t+1} + mu C*(y_t - C x_t) = 0` (with `y_1 = C x`),
/// `p_T + mu C*(y_T - C x_T) = 0`.
pub fn dense_euler(a: &Matrix, data: &ObservedData, gamma: f64, mu: f64) -> (Vec<Vector>, Vec<Vector>) {
    let n = data.state_dim();
    let horizon = data.horizon();
    let c = data.obs_matrix();
    let ctc = c.transpose() * c;
    let dim = 2 * n * horizon;
    let xi = |t: usize| (t - 1) * n;
    let pi = |t: usize| n * horizon + (t - 1) * n;
    let mut m = Matrix::zeros(dim, dim);
    let mut rhs = Vector::zeros(dim);
    let mut row = 0;
    // x_1 = x
    m.view_mut((row, xi(1)), (n, n)).copy_from(&Matrix::identity(n, n));
    rhs.rows_mut(row, n).copy_from(data.initial());
    row += n;
    for t in 1..horizon {
        m.view_mut((row, xi(t + 1)), (n, n)).copy_from(&Matrix::identity(n, n));
        m.view_mut((row, xi(t)), (n, n)).copy_from(&(-a));
        m.view_mut((row, pi(t + 1)), (n, n)).copy_from(&(Matrix::identity(n, n) / gamma));
        row += n;
    }
    for t in 1..=horizon {
        let y = if t == 1 { c * data.initial() } else { data.y(t).clone() };
        // p_t - A* p_{t+1} - mu C*C x_t = -mu C* y_t
        m.view_mut((row, pi(t)), (n, n)).copy_from(&Matrix::identity(n, n));
        if t < horizon {
            m.view_mut((row, pi(t + 1)), (n, n)).copy_from(&(-a.transpose()));
        }
        m.view_mut((row, xi(t)), (n, n)).copy_from(&(&ctc * -mu));
        rhs.rows_mut(row, n).copy_from(&(c.transpose() * y * -mu));
        row += n;
    }
    let sol = m.lu().solve(&rhs).unwrap();
    let xs = (1..=horizon).map(|t| sol.rows(xi(t), n).into_owned()).collect();
    let ps = (1..=horizon).map(|t| sol.rows(pi(t), n).into_owned()).collect();
    (xs, ps)
}

/// Minimizer of the backward-control functional: for controls `z_2..z_T`,
/// `q_T = -mu C* y_T + C* z_T`, `q_t = A* q_{t+1} - mu C* y_t + C* z_t`,
/// `q_1 = A* q_2`, and the cost `-q_1 . x + 1/(2 gamma) sum_{t>=2} |q_t|^2 + 1/(2 mu) sum |z_t|^2`.
/// The quadratic is recovered by polarization and minimized densely.
/// Returns `(z_2..z_T, q_1..q_T)`.
pub fn backward_control_oracle(a: &Matrix, data: &ObservedData, gamma: f64, mu: f64) -> (Vec<Vector>, Vec<Vector>) {
    let p = data.obs_dim();
    let horizon = data.horizon();
    let m = p * (horizon - 1);
    let states = |z: &Vector| -> Vec<Vector> {
        let c = data.obs_matrix();
        let n = data.state_dim();
        let mut q = vec![Vector::zeros(n); horizon];
        let zt = |t: usize| z.rows((t - 2) * p, p).into_owned();
        q[horizon - 1] = c.transpose() * (zt(horizon) - data.y(horizon) * mu);
        for t in (2..horizon).rev() {
            q[t - 1] = a.transpose() * &q[t] + c.transpose() * (zt(t) - data.y(t) * mu);
        }
        q[0] = a.transpose() * &q[1];
        q
    };
    let cost = |z: &Vector| -> f64 {
        let q = states(z);
        -q[0].dot(data.initial())
            + q[1..].iter().map(|v| v.norm_squared()).sum::<f64>() / (2.0 * gamma)
            + z.norm_squared() / (2.0 * mu)
    };
    let zero = Vector::zeros(m);
    let f0 = cost(&zero);
    let e = |i: usize| {
        let mut v = Vector::zeros(m);
        v[i] = 1.0;
        v
    };
    let mut h = Matrix::zeros(m, m);
    let mut g = Vector::zeros(m);
    let fi: Vec<f64> = (0..m).map(|i| cost(&e(i))).collect();
    let fmi: Vec<f64> = (0..m).map(|i| cost(&(-e(i)))).collect();
    for i in 0..m {
        h[(i, i)] = fi[i] + fmi[i] - 2.0 * f0;
        g[i] = 0.5 * (fi[i] - fmi[i]);
    }
    for i in 0..m {
        for j in 0..i {
            let fij = cost(&(e(i) + e(j)));
            let hij = fij - f0 - g[i] - g[j] - 0.5 * h[(i, i)] - 0.5 * h[(j, j)];
            h[(i, j)] = hij;
            h[(j, i)] = hij;
        }
    }
    let z = h.lu().solve(&(-g)).unwrap();
    let q = states(&z);
    let zs = (0..horizon - 1).map(|k| z.rows(k * p, p).into_owned()).collect();
    (zs, q)
}

pub fn max_dist(a: &[Vector], b: &[Vector]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
