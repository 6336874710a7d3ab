//! Riccati decoupling of the forward-backward system for fixed `A`.
//!
//! The minimizer of
//! `K_x = gamma/2 sum |x_{t+1} - A x_t|^2 + mu/2 sum |y_t - C x_t|^2`
//! over `x_2..x_T` satisfies `x_t = r_t - Sigma_t p_t`, where `Sigma_t` and
//! `r_t` run forward and `p_t` runs backward.

use serde::Serialize;

use crate::error::Result;
use crate::linalg::{self, spd_solve};
use crate::model::{check_positive, check_square, Matrix, ObservedData, Vector};

/// Forward gains `Sigma_1..Sigma_T` and drift `r_1..r_T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmootherGains {
    #[serde(rename = "Sigma", serialize_with = "crate::io::ser_matrices")]
    pub sigma: Vec<Matrix>,
    #[serde(rename = "r", serialize_with = "crate::io::ser_vectors")]
    pub drift: Vec<Vector>,
    // (C Sigma_t C* + I/mu)^{-1}, kept for the backward pass.
    #[serde(skip)]
    innovation_inv: Vec<Matrix>,
}

impl SmootherGains {
    pub fn horizon(&self) -> usize {
        self.sigma.len()
    }

    /// `Sigma_t`, 1-based.
    pub fn sigma(&self, t: usize) -> &Matrix {
        &self.sigma[t - 1]
    }

    /// `r_t`, 1-based.
    pub fn r(&self, t: usize) -> &Vector {
        &self.drift[t - 1]
    }

    /// `(I + mu C*C Sigma_t)^{-1}` through `I - C*(C Sigma_t C* + I/mu)^{-1} C Sigma_t`.
    pub fn backward_factor(&self, c: &Matrix, t: usize) -> Matrix {
        let n = c.ncols();
        Matrix::identity(n, n) - c.transpose() * &self.innovation_inv[t - 1] * c * self.sigma(t)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn inverse_spd(m: &Matrix) -> Matrix {
    let id = Matrix::identity(m.nrows(), m.nrows());
    spd_solve(m, &id).expect("C Sigma C* + I/mu is positive definite")
}

/// Forward recursions for `Sigma_t` and `r_t`, with `y_1 = C x`.
pub fn riccati_gains(a: &Matrix, data: &ObservedData, gamma: f64, mu: f64) -> Result<SmootherGains> {
    check_positive("gamma", gamma)?;
    check_positive("mu", mu)?;
    let n = data.state_dim();
    check_square("A", a, n)?;
    Ok(gains_unchecked(a, data, gamma, mu))
}

fn gains_unchecked(a: &Matrix, data: &ObservedData, gamma: f64, mu: f64) -> SmootherGains {
    let n = data.state_dim();
    let horizon = data.horizon();
    let c = data.obs_matrix();
    let ct = c.transpose();
    let p = c.nrows();
    let id_p = Matrix::identity(p, p) / mu;
    let noise = Matrix::identity(n, n) / gamma;

    let mut sigma = Vec::with_capacity(horizon);
    let mut drift = Vec::with_capacity(horizon);
    let mut innovation_inv = Vec::with_capacity(horizon);
    sigma.push(Matrix::zeros(n, n));
    drift.push(data.initial().clone());
    for t in 1..=horizon {
        let s = &sigma[t - 1];
        let w = inverse_spd(&(c * s * &ct + &id_p));
        if t < horizon {
            let gain = a * s * &ct * &w;
            let mut next = a * s * a.transpose() + &noise - &gain * c * s * a.transpose();
            linalg::symmetrize(&mut next);
            let r = &drift[t - 1];
            let next_r = a * r + &gain * (data.y_or_initial(t) - c * r);
            sigma.push(next);
            drift.push(next_r);
        }
        innovation_inv.push(w);
    }
    SmootherGains {
        sigma,
        drift,
        innovation_inv,
    }
}

/// States, adjoints and gains of the smoother.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmootherSolution {
    #[serde(serialize_with = "crate::io::ser_vectors")]
    pub states: Vec<Vector>,
    #[serde(serialize_with = "crate::io::ser_vectors")]
    pub adjoints: Vec<Vector>,
    pub gains: SmootherGains,
}

/// Backward pass `p_t = (I + mu C*C Sigma_t)^{-1}(A* p_{t+1} - mu C*(y_t - C r_t))`
/// and reconstruction `x_t = r_t - Sigma_t p_t`.
pub fn smoother_solve(a: &Matrix, data: &ObservedData, gamma: f64, mu: f64) -> Result<SmootherSolution> {
    let gains = riccati_gains(a, data, gamma, mu)?;
    let horizon = data.horizon();
    let c = data.obs_matrix();
    let ct = c.transpose();
    let mut adjoints = vec![Vector::zeros(data.state_dim()); horizon];
    for t in (1..=horizon).rev() {
        let innovation = data.y_or_initial(t) - c * gains.r(t);
        let mut rhs = -(&ct * innovation) * mu;
        if t < horizon {
            rhs += a.transpose() * &adjoints[t];
        }
        adjoints[t - 1] = gains.backward_factor(c, t) * rhs;
    }
    let states = (1..=horizon)
        .map(|t| gains.r(t) - gains.sigma(t) * &adjoints[t - 1])
        .collect();
    Ok(SmootherSolution {
        states,
        adjoints,
        gains,
    })
}
