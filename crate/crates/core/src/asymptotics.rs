//! Large-penalty behaviour of the partial-observation problem with `mu = gamma`
//! on exact data `y_t = C xbar_t`, `xbar_{t+1} = Abar xbar_t`.
//!
//! The stationary triple expands as `A = Abar + A_1/gamma + ...`,
//! `x_t = xbar_t + x^1_t/gamma + ...`, `p_t = p^0_t + ...`, and the first
//! correction is computed through the normalized gains below.

use serde::Serialize;

use crate::altmin::{alternate, AltMinOptions};
use crate::error::{dim_err, Error, Result};
use crate::full_obs;
use crate::linalg::{self, spd_solve};
use crate::model::{check_square, simulate_full, simulate_observed, Matrix, Vector};
use crate::report::Termination;

/// Rank threshold for the linear map defining `A_1`.
pub const EXPANSION_RANK_TOL: f64 = 1e-10;

/// Gains of the smoother with `gamma = mu = 1`, plus the derived `Gamma_t`, `Lambda_t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedGains {
    #[serde(rename = "Sigma", serialize_with = "crate::io::ser_matrices")]
    pub sigma: Vec<Matrix>,
    #[serde(rename = "Gamma", serialize_with = "crate::io::ser_matrices")]
    pub gamma: Vec<Matrix>,
    #[serde(rename = "Lambda", serialize_with = "crate::io::ser_matrices")]
    pub lambda: Vec<Matrix>,
}

impl NormalizedGains {
    pub fn horizon(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self, t: usize) -> &Matrix {
        &self.sigma[t - 1]
    }

    pub fn gamma(&self, t: usize) -> &Matrix {
        &self.gamma[t - 1]
    }

    pub fn lambda(&self, t: usize) -> &Matrix {
        &self.lambda[t - 1]
    }

    /// `Phi(t, s) = Gamma_t ... Gamma_s` for `s <= t`, and `I` for `s = t + 1`.
    pub fn phi(&self, t: usize, s: usize) -> Matrix {
        assert!(s >= 1 && s <= t + 1 && t <= self.horizon(), "phi({t}, {s}) out of range");
        let n = self.sigma[0].nrows();
        let mut out = Matrix::identity(n, n);
        for k in s..=t {
            out = self.gamma(k) * out;
        }
        out
    }
}

/// `Sigma_{t+1} = Abar (Sigma_t - Sigma_t C*(C Sigma_t C* + I)^{-1} C Sigma_t) Abar* + I`,
/// `Gamma_t = Abar (I - Sigma_t C*(C Sigma_t C* + I)^{-1} C)`,
/// `Lambda_t = C*(C Sigma_t C* + I)^{-1} C`.
pub fn normalized_gains(abar: &Matrix, c: &Matrix, horizon: usize) -> Result<NormalizedGains> {
    let n = abar.nrows();
    check_square("Abar", abar, n)?;
    if c.ncols() != n {
        return Err(dim_err(format!("C must have {n} columns, got {}", c.ncols())));
    }
    if horizon < 2 {
        return Err(dim_err("horizon must be at least 2"));
    }
    let p = c.nrows();
    let ct = c.transpose();
    let id_n = Matrix::identity(n, n);
    let mut sigma = vec![Matrix::zeros(n, n)];
    let mut gamma = Vec::with_capacity(horizon);
    let mut lambda = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let s = &sigma[t];
        let inner = c * s * &ct + Matrix::identity(p, p);
        let w = spd_solve(&inner, &Matrix::identity(p, p)).expect("C Sigma C* + I is positive definite");
        let g = abar * (&id_n - s * &ct * &w * c);
        let mut l = &ct * &w * c;
        linalg::symmetrize(&mut l);
        if t + 1 < horizon {
            let mut next = &g * s * abar.transpose() + &id_n;
            linalg::symmetrize(&mut next);
            sigma.push(next);
        }
        gamma.push(g);
        lambda.push(l);
    }
    Ok(NormalizedGains { sigma, gamma, lambda })
}

/// First-order correction `A_1` together with `r^1`, `p^0` and `x^1 = r^1 - Sigma p^0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstOrderCorrection {
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub a1: Matrix,
    #[serde(serialize_with = "crate::io::ser_vectors")]
    pub r1: Vec<Vector>,
    #[serde(serialize_with = "crate::io::ser_vectors")]
    pub p0: Vec<Vector>,
    #[serde(serialize_with = "crate::io::ser_vectors")]
    pub x1: Vec<Vector>,
    #[serde(serialize_with = "crate::io::ser_vectors")]
    pub base_states: Vec<Vector>,
    pub gains: NormalizedGains,
}

impl FirstOrderCorrection {
    /// `p^0_{t+1} = sum_{s=t}^{T-1} Phi*(s, t+1) Lambda_{s+1} r^1_{s+1}`, for `t` in `1..T`.
    pub fn adjoint_from_sum(&self, t: usize) -> Vector {
        let horizon = self.gains.horizon();
        let mut out = Vector::zeros(self.a1.nrows());
        for s in t..horizon {
            out += self.gains.phi(s, t + 1).transpose() * self.gains.lambda(s + 1) * &self.r1[s];
        }
        out
    }
}

// Block (t, sigma) of the A_1 map: sum_{s=max(sigma,t)}^{T-1} Phi*(s,t+1) Lambda_{s+1} Phi(s,sigma+1).
fn kernel_block(gains: &NormalizedGains, t: usize, sigma: usize) -> Matrix {
    let horizon = gains.horizon();
    let n = gains.sigma[0].nrows();
    let mut out = Matrix::zeros(n, n);
    for s in t.max(sigma)..horizon {
        out += gains.phi(s, t + 1).transpose() * gains.lambda(s + 1) * gains.phi(s, sigma + 1);
    }
    out
}

/// Solves `Abar = -sum_{t,sigma} M_{t,sigma} A_1 xbar_sigma xbar_t*` for `A_1` by
/// vectorizing the `n^2` unknowns, then propagates `r^1` forward and `p^0` backward.
pub fn first_order_correction(abar: &Matrix, c: &Matrix, x: &Vector, horizon: usize) -> Result<FirstOrderCorrection> {
    let gains = normalized_gains(abar, c, horizon)?;
    let n = abar.nrows();
    if x.len() != n {
        return Err(dim_err(format!("x must have length {n}, got {}", x.len())));
    }
    let base = simulate_full(abar, x, horizon)?.into_states();

    // vec(M A X) = (X^T (x) M) vec(A), column-major vec, X = xbar_sigma xbar_t*.
    let dim = n * n;
    let mut map = Matrix::zeros(dim, dim);
    for t in 1..horizon {
        for sigma in 1..horizon {
            let m = kernel_block(&gains, t, sigma);
            let xt = &base[sigma - 1] * base[t - 1].transpose();
            map -= xt.transpose().kronecker(&m);
        }
    }
    let rank = linalg::numerical_rank(&map, EXPANSION_RANK_TOL);
    if rank < dim {
        return Err(Error::DegenerateExpansion { rank, dim });
    }
    let rhs = Vector::from_column_slice(abar.as_slice());
    let sol = map
        .lu()
        .solve(&rhs)
        .ok_or(Error::DegenerateExpansion { rank, dim })?;
    let a1 = Matrix::from_column_slice(n, n, sol.as_slice());

    let mut r1 = vec![Vector::zeros(n)];
    for t in 1..horizon {
        let next = gains.gamma(t) * &r1[t - 1] + &a1 * &base[t - 1];
        r1.push(next);
    }
    let mut p0 = vec![Vector::zeros(n); horizon];
    p0[horizon - 1] = gains.lambda(horizon) * &r1[horizon - 1];
    for t in (1..horizon).rev() {
        p0[t - 1] = gains.gamma(t).transpose() * &p0[t] + gains.lambda(t) * &r1[t - 1];
    }
    let x1 = (0..horizon).map(|t| &r1[t] - &gains.sigma[t] * &p0[t]).collect();
    Ok(FirstOrderCorrection {
        a1,
        r1,
        p0,
        x1,
        base_states: base,
        gains,
    })
}

/// Minimum-norm matrix carrying the exact state path: `X_+ X^+`.
pub fn min_norm_on_path(abar: &Matrix, x: &Vector, horizon: usize) -> Result<Matrix> {
    Ok(full_obs::min_norm_consistent(&simulate_full(abar, x, horizon)?))
}

/// One grid point of [`expansion_validation`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionPoint {
    pub gamma: f64,
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub estimate: Matrix,
    /// `|A^gamma - Abar_mn|_F`.
    pub distance_to_min_norm: f64,
    /// `gamma (A^gamma - Abar)`.
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub scaled_deviation: Matrix,
    /// `|gamma (A^gamma - Abar) - A_1|_F / |A_1|_F`, when `A_1` exists.
    pub relative_gap: Option<f64>,
    pub termination: Termination,
    pub iterations: usize,
    pub stationarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionDiagnostics {
    #[serde(serialize_with = "crate::io::ser_matrix")]
    pub min_norm: Matrix,
    /// `None` when the map for `A_1` is singular.
    #[serde(serialize_with = "ser_opt_matrix")]
    pub a1: Option<Matrix>,
    pub points: Vec<ExpansionPoint>,
    /// Largest relative gap over the two largest grid values.
    pub top_gap: Option<f64>,
    /// Whether `|A^gamma - Abar_mn|` is non-increasing along the grid.
    pub monotone_distance: bool,
}

fn ser_opt_matrix<S: serde::Serializer>(m: &Option<Matrix>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::Serialize as _;
    m.as_ref().map(linalg::to_rows).serialize(s)
}

/// Runs [`alternate`] with `mu = gamma` on exact data for each grid value and
/// compares against the minimum-norm limit and the first-order correction.
///
/// The run at each grid value starts from the previous grid value's estimate.
/// A run that stops on the iteration budget is reported in its entry.
pub fn expansion_validation(
    abar: &Matrix,
    c: &Matrix,
    x: &Vector,
    horizon: usize,
    gamma_grid: &[f64],
    opts: &AltMinOptions,
) -> Result<ExpansionDiagnostics> {
    check_square("Abar", abar, x.len())?;
    if gamma_grid.is_empty() {
        return Err(Error::InvalidParameter("gamma grid is empty".into()));
    }
    if gamma_grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) || gamma_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "gamma grid must be positive and strictly increasing".into(),
        ));
    }
    let data = simulate_observed(abar, c, x, horizon)?;
    let min_norm = min_norm_on_path(abar, x, horizon)?;
    let a1 = match first_order_correction(abar, c, x, horizon) {
        Ok(fo) => Some(fo.a1),
        Err(Error::DegenerateExpansion { .. }) => None,
        Err(e) => return Err(e),
    };
    let mut points = Vec::with_capacity(gamma_grid.len());
    let mut warm = opts.init.clone();
    for &gamma in gamma_grid {
        let run_opts = AltMinOptions {
            init: warm.clone(),
            ..opts.clone()
        };
        let run = alternate(&data, gamma, gamma, 0.0, &run_opts)?;
        let scaled = (&run.a - abar) * gamma;
        let relative_gap = a1.as_ref().map(|a1| (&scaled - a1).norm() / a1.norm().max(f64::MIN_POSITIVE));
        points.push(ExpansionPoint {
            gamma,
            distance_to_min_norm: (&run.a - &min_norm).norm(),
            estimate: run.a.clone(),
            scaled_deviation: scaled,
            relative_gap,
            termination: run.report.termination,
            iterations: run.report.iterations(),
            stationarity: run.stationarity,
        });
        warm = Some(run.a);
    }
    let top_gap = if a1.is_some() {
        points
            .iter()
            .rev()
            .take(2)
            .map(|p| p.relative_gap.unwrap_or(f64::INFINITY))
            .reduce(f64::max)
    } else {
        None
    };
    let monotone_distance = points
        .windows(2)
        .all(|w| w[1].distance_to_min_norm <= w[0].distance_to_min_norm);
    Ok(ExpansionDiagnostics {
        min_norm,
        a1,
        points,
        top_gap,
        monotone_distance,
    })
}
