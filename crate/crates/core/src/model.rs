//! Trajectory containers and simulation of `x_{t+1} = A x_t`, `y_t = C x_t`.
//!
//! All public accessors use 1-based time indices `t = 1..=T`; storage is
//! 0-based internally.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

fn all_finite<'a>(it: impl IntoIterator<Item = &'a f64>) -> bool {
    it.into_iter().all(|v| v.is_finite())
}

/// A fully observed state sequence `x_1..x_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<Vector>,
}

impl Trajectory {
    pub fn new(states: Vec<Vector>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "horizon T must be at least 2, got {}",
                states.len()
            )));
        }
        let n = states[0].len();
        if n == 0 {
            return Err(dim_err("state dimension must be positive"));
        }
        if let Some((t, s)) = states.iter().enumerate().find(|(_, s)| s.len() != n) {
            return Err(dim_err(format!(
                "state x_{} has length {}, expected {}",
                t + 1,
                s.len(),
                n
            )));
        }
        if !states.iter().all(|s| all_finite(s.iter())) {
            return Err(Error::NonFinite("trajectory"));
        }
        Ok(Self { states })
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    /// State `x_t`, `t` in `1..=T`.
    pub fn state(&self, t: usize) -> &Vector {
        &self.states[t - 1]
    }

    pub fn states(&self) -> &[Vector] {
        &self.states
    }

    pub fn into_states(self) -> Vec<Vector> {
        self.states
    }

    /// `(sum x_{t+1} x_t*, sum x_t x_t*)` over `t = 1..T-1`.
    pub fn moments(&self) -> (Matrix, Matrix) {
        transition_moments(&self.states)
    }

    /// `sum_{t=1}^{T-1} |x_t|^2`.
    pub fn regressor_energy(&self) -> f64 {
        self.states[..self.states.len() - 1]
            .iter()
            .map(|x| x.norm_squared())
            .sum()
    }
}

/// `(sum x_{t+1} x_t*, sum x_t x_t*)` for `t = 1..T-1` of an arbitrary sequence.
pub fn transition_moments(states: &[Vector]) -> (Matrix, Matrix) {
    let n = states[0].len();
    let mut cross = Matrix::zeros(n, n);
    let mut gram = Matrix::zeros(n, n);
    for w in states.windows(2) {
        cross += &w[1] * w[0].transpose();
        gram += &w[0] * w[0].transpose();
    }
    (cross, gram)
}

/// Partial observations `(x, C, y_2..y_T)` of an autonomous system.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    initial: Vector,
    obs_matrix: Matrix,
    observations: Vec<Vector>,
}

impl ObservedData {
    /// `observations` holds `y_2..y_T`, so the horizon is `observations.len() + 1`.
    pub fn new(initial: Vector, obs_matrix: Matrix, observations: Vec<Vector>) -> Result<Self> {
        let n = initial.len();
        if n == 0 {
            return Err(dim_err("state dimension must be positive"));
        }
        if obs_matrix.ncols() != n {
            return Err(dim_err(format!(
                "C has {} columns but x has length {}",
                obs_matrix.ncols(),
                n
            )));
        }
        if obs_matrix.nrows() == 0 {
            return Err(dim_err("C must have at least one row"));
        }
        if observations.is_empty() {
            return Err(Error::InvalidParameter(
                "horizon T must be at least 2 (need y_2)".into(),
            ));
        }
        let p = obs_matrix.nrows();
        if let Some((k, y)) = observations.iter().enumerate().find(|(_, y)| y.len() != p) {
            return Err(dim_err(format!(
                "observation y_{} has length {}, expected {}",
                k + 2,
                y.len(),
                p
            )));
        }
        if !all_finite(initial.iter())
            || !all_finite(obs_matrix.iter())
            || !observations.iter().all(|y| all_finite(y.iter()))
        {
            return Err(Error::NonFinite("observed data"));
        }
        Ok(Self {
            initial,
            obs_matrix,
            observations,
        })
    }

    /// Full observation of a trajectory: `C = I`, `y_t = x_t`.
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self {
            initial: traj.state(1).clone(),
            obs_matrix: Matrix::identity(traj.dim(), traj.dim()),
            observations: traj.states()[1..].to_vec(),
        }
    }

    pub fn initial(&self) -> &Vector {
        &self.initial
    }

    pub fn obs_matrix(&self) -> &Matrix {
        &self.obs_matrix
    }

    pub fn state_dim(&self) -> usize {
        self.initial.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_matrix.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.observations.len() + 1
    }

    /// Observation `y_t` for `t` in `2..=T`.
    pub fn y(&self, t: usize) -> &Vector {
        &self.observations[t - 2]
    }

    /// Observation used by the recursions at time `t` in `1..=T`; `y_1` is
    /// taken as `C x`, which makes the first innovation vanish.
    pub fn y_or_initial(&self, t: usize) -> Vector {
        if t == 1 {
            &self.obs_matrix * &self.initial
        } else {
            self.y(t).clone()
        }
    }

    /// `y_2..y_T`.
    pub fn observations(&self) -> &[Vector] {
        &self.observations
    }

    /// `sum_{t=2}^T |y_t|^2`.
    pub fn observation_energy(&self) -> f64 {
        self.observations.iter().map(|y| y.norm_squared()).sum()
    }
}

/// Weights and iteration controls shared by the descent schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub gamma: f64,
    pub mu: f64,
    pub rho: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            mu: 1.0,
            rho: 0.0,
            max_iters: 100_000,
            grad_tol: 1e-9,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("gamma", self.gamma)?;
        check_positive("mu", self.mu)?;
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rho must be finite and >= 0, got {}",
                self.rho
            )));
        }
        check_positive("grad_tol", self.grad_tol)?;
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be finite and > 0, got {value}"
        )))
    }
}

pub(crate) fn check_square(name: &str, m: &Matrix, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(dim_err(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Iterates `x_{t+1} = A x_t` from `x_1 = x` for `T` steps.
pub fn simulate_full(a: &Matrix, x: &Vector, horizon: usize) -> Result<Trajectory> {
    check_square("A", a, x.len())?;
    if horizon < 2 {
        return Err(Error::InvalidParameter(format!(
            "horizon T must be at least 2, got {horizon}"
        )));
    }
    let mut states = Vec::with_capacity(horizon);
    states.push(x.clone());
    for t in 1..horizon {
        let next = a * &states[t - 1];
        states.push(next);
    }
    Trajectory::new(states)
}

/// Simulates the system and records `y_t = C x_t` for `t = 2..T`.
pub fn simulate_observed(a: &Matrix, c: &Matrix, x: &Vector, horizon: usize) -> Result<ObservedData> {
    if c.ncols() != x.len() {
        return Err(dim_err(format!(
            "C has {} columns but x has length {}",
            c.ncols(),
            x.len()
        )));
    }
    let traj = simulate_full(a, x, horizon)?;
    let ys = traj.states()[1..].iter().map(|s| c * s).collect();
    ObservedData::new(x.clone(), c.clone(), ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, v)
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    #[test]
    fn scalar_simulation() {
        let tr = simulate_full(&m(1, 1, &[0.5]), &v(&[1.0]), 3).unwrap();
        let xs: Vec<f64> = tr.states().iter().map(|s| s[0]).collect();
        assert_eq!(xs, vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn identity_dynamics_keep_state() {
        let tr = simulate_full(&Matrix::identity(2, 2), &v(&[1.0, 2.0]), 4).unwrap();
        assert!(tr.states().iter().all(|s| *s == v(&[1.0, 2.0])));
    }

    #[test]
    fn nilpotent_collapse() {
        let tr = simulate_full(&m(1, 1, &[0.0]), &v(&[7.0]), 3).unwrap();
        let xs: Vec<f64> = tr.states().iter().map(|s| s[0]).collect();
        assert_eq!(xs, vec![7.0, 0.0, 0.0]);
    }

    #[test]
    fn observed_examples() {
        let d = simulate_observed(&m(1, 1, &[0.5]), &m(1, 1, &[1.0]), &v(&[1.0]), 3).unwrap();
        assert_eq!(d.y(2)[0], 0.5);
        assert_eq!(d.y(3)[0], 0.25);

        let d = simulate_observed(&m(1, 1, &[0.5]), &m(1, 1, &[0.0]), &v(&[1.0]), 3).unwrap();
        assert!(d.observations().iter().all(|y| y[0] == 0.0));

        let d = simulate_observed(&Matrix::identity(2, 2), &m(1, 2, &[1.0, 0.0]), &v(&[3.0, 4.0]), 3)
            .unwrap();
        assert_eq!(d.y(2)[0], 3.0);
        assert_eq!(d.y(3)[0], 3.0);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(
            simulate_full(&Matrix::identity(2, 2), &v(&[1.0]), 3),
            Err(Error::Dimension(_))
        ));
        assert!(simulate_full(&Matrix::identity(1, 1), &v(&[1.0]), 1).is_err());
        assert!(matches!(
            simulate_observed(&Matrix::identity(2, 2), &m(1, 1, &[1.0]), &v(&[1.0, 1.0]), 3),
            Err(Error::Dimension(_))
        ));
        assert!(Trajectory::new(vec![v(&[1.0]), v(&[1.0, 2.0])]).is_err());
        assert!(Trajectory::new(vec![v(&[f64::NAN]), v(&[1.0])]).is_err());
    }

    #[test]
    fn hyperparams_validation() {
        assert!(HyperParams::default().validate().is_ok());
        let bad = HyperParams { gamma: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = HyperParams { rho: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
