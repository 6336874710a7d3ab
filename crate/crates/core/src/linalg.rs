//! Small dense helpers on top of `nalgebra`.
//!
//! Symmetric positive-definite systems are always solved through a Cholesky
//! factorization; explicit inverses are never formed.

use nalgebra::Cholesky;

use crate::model::{Matrix, Vector};

/// Default relative threshold for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Solves `spd * X = rhs` for a symmetric positive-definite `spd`.
pub fn spd_solve(spd: &Matrix, rhs: &Matrix) -> Option<Matrix> {
    Cholesky::new(spd.clone()).map(|ch| ch.solve(rhs))
}

/// Solves `spd * x = rhs` for a single right-hand side.
pub fn spd_solve_vec(spd: &Matrix, rhs: &Vector) -> Option<Vector> {
    Cholesky::new(spd.clone()).map(|ch| ch.solve(rhs))
}

/// Returns `rhs * spd^{-1}` for a symmetric positive-definite `spd`.
pub fn spd_right_solve(rhs: &Matrix, spd: &Matrix) -> Option<Matrix> {
    // X spd = rhs  <=>  spd X* = rhs*
    spd_solve(spd, &rhs.transpose()).map(|x| x.transpose())
}

/// Number of singular values at least `rel_tol` times the largest one.
/// A matrix whose largest singular value is zero (or that is empty) has rank 0.
pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s >= rel_tol * smax).count()
}

/// Moore-Penrose pseudo-inverse with a relative singular-value cutoff.
pub fn pseudo_inverse(m: &Matrix, rel_tol: f64) -> Matrix {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = rel_tol * smax;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += v_t.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

/// Replaces `m` by `(m + m*) / 2`.
pub fn symmetrize(m: &mut Matrix) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.norm()
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Nested row representation, used by the JSON formats.
pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

/// Builds a matrix from nested rows. Returns `None` for ragged or empty input.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first()?.len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_row_major(m: &Matrix) -> Vec<f64> {
    to_rows(m).into_iter().flatten().collect()
}

pub fn from_row_major(nrows: usize, ncols: usize, data: &[f64]) -> Option<Matrix> {
    (data.len() == nrows * ncols).then(|| Matrix::from_row_slice(nrows, ncols, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_solve_matches_inverse() {
        let spd = Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let rhs = Matrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let x = spd_right_solve(&rhs, &spd).unwrap();
        assert!((x * &spd - rhs).norm() < 1e-14);
    }

    #[test]
    fn rank_of_zero_and_rank_one() {
        assert_eq!(numerical_rank(&Matrix::zeros(3, 3), 1e-10), 0);
        let v = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(numerical_rank(&(&v * v.transpose()), 1e-10), 1);
    }

    #[test]
    fn pinv_of_projector_block() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let p = pseudo_inverse(&m, 1e-12);
        assert!((p - Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0])).norm() < 1e-15);
    }
}
