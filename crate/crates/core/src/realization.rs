//! Realization theory: Markov parameters `G_t = C A^{t-1} B`, block Hankel
//! matrices, observability/controllability, Silverman's rank test and a
//! balanced SVD (Ho-type) minimal realization.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::model::{check_square, Matrix};

/// Number of column extensions `j = 1..=SILVERMAN_SHIFTS` tested per depth.
pub const SILVERMAN_SHIFTS: usize = 3;

/// Impulse response `G_0..G_N`, each block `p x m`, with `G_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    m: usize,
    p: usize,
    blocks: Vec<Matrix>,
}

impl ImpulseResponse {
    /// `blocks[0]` is `G_0` and must be zero.
    pub fn new(m: usize, p: usize, blocks: Vec<Matrix>) -> Result<Self> {
        if m == 0 || p == 0 {
            return Err(dim_err("input and output dimensions must be positive"));
        }
        if blocks.is_empty() {
            return Err(dim_err("impulse response needs at least G_0"));
        }
        if let Some((t, b)) = blocks
            .iter()
            .enumerate()
            .find(|(_, b)| b.nrows() != p || b.ncols() != m)
        {
            return Err(dim_err(format!(
                "block G_{t} is {}x{}, expected {p}x{m}",
                b.nrows(),
                b.ncols()
            )));
        }
        if blocks[0].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidParameter("G_0 must be the zero matrix".into()));
        }
        if blocks.iter().any(|b| b.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("impulse response"));
        }
        Ok(Self { m, p, blocks })
    }

    /// Builds `G_0 = 0, G_1, ..., G_N` from the nonzero-index blocks.
    pub fn from_markov(m: usize, p: usize, tail: Vec<Matrix>) -> Result<Self> {
        let mut blocks = vec![Matrix::zeros(p, m)];
        blocks.extend(tail);
        Self::new(m, p, blocks)
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn output_dim(&self) -> usize {
        self.p
    }

    /// Largest available index `N`.
    pub fn len(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `G_t`, `t` in `0..=N`.
    pub fn block(&self, t: usize) -> &Matrix {
        &self.blocks[t]
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    pub fn to_json(&self) -> ImpulseResponseJson {
        ImpulseResponseJson {
            m: self.m,
            p: self.p,
            blocks: self.blocks.iter().map(linalg::to_row_major).collect(),
        }
    }

    pub fn from_json(raw: &ImpulseResponseJson) -> Result<Self> {
        let blocks = raw
            .blocks
            .iter()
            .enumerate()
            .map(|(t, b)| {
                linalg::from_row_major(raw.p, raw.m, b).ok_or_else(|| {
                    Error::Format(format!(
                        "block {t} has {} entries, expected p*m={}",
                        b.len(),
                        raw.p * raw.m
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(raw.m, raw.p, blocks)
    }
}

/// Serialized form `{ "m": .., "p": .., "blocks": [[row-major G_0], ...] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseResponseJson {
    pub m: usize,
    pub p: usize,
    pub blocks: Vec<Vec<f64>>,
}

/// State-space triple `(A, B, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemRealization {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl SystemRealization {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let n = a.nrows();
        check_square("A", &a, n)?;
        if b.nrows() != n {
            return Err(dim_err(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(dim_err(format!("C has {} columns, expected {n}", c.ncols())));
        }
        Ok(Self { a, b, c })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }
}

/// `G_0 = 0` and `G_t = C A^{t-1} B` for `t = 1..=count`.
pub fn markov_params(sys: &SystemRealization, count: usize) -> Result<ImpulseResponse> {
    if count == 0 {
        return Err(Error::InvalidParameter("need at least one Markov parameter".into()));
    }
    let mut tail = Vec::with_capacity(count);
    let mut power_b = sys.b.clone();
    for _ in 0..count {
        tail.push(&sys.c * &power_b);
        power_b = &sys.a * power_b;
    }
    ImpulseResponse::from_markov(sys.input_dim(), sys.output_dim(), tail)
}

/// Block Hankel matrix with block `(i, j)` equal to `G_{i+j-1+shift}`.
fn hankel_shifted(g: &ImpulseResponse, rows: usize, cols: usize, shift: usize) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter("Hankel depths must be positive".into()));
    }
    let needed = rows + cols - 1 + shift;
    if g.len() < needed {
        return Err(dim_err(format!(
            "Hankel {rows}x{cols} (shift {shift}) needs G_1..G_{needed}, only G_{} available",
            g.len()
        )));
    }
    let (p, m) = (g.p, g.m);
    let mut h = Matrix::zeros(rows * p, cols * m);
    for i in 0..rows {
        for j in 0..cols {
            h.view_mut((i * p, j * m), (p, m))
                .copy_from(g.block(i + j + 1 + shift));
        }
    }
    Ok(h)
}

/// Block Hankel matrix `H_{r,r'}` of size `(r p) x (r' m)`.
pub fn hankel(g: &ImpulseResponse, rows: usize, cols: usize) -> Result<Matrix> {
    hankel_shifted(g, rows, cols, 0)
}

/// Observability `[C; CA; ...; CA^{r-1}]` and controllability
/// `[B, AB, ..., A^{r'-1} B]` matrices.
pub fn structure_matrices(sys: &SystemRealization, rows: usize, cols: usize) -> Result<(Matrix, Matrix)> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter("depths must be positive".into()));
    }
    let n = sys.order();
    let (p, m) = (sys.output_dim(), sys.input_dim());
    let mut obs = Matrix::zeros(rows * p, n);
    let mut block = sys.c.clone();
    for i in 0..rows {
        obs.view_mut((i * p, 0), (p, n)).copy_from(&block);
        block = block * &sys.a;
    }
    let mut ctr = Matrix::zeros(n, cols * m);
    let mut block = sys.b.clone();
    for j in 0..cols {
        ctr.view_mut((0, j * m), (n, m)).copy_from(&block);
        block = &sys.a * block;
    }
    Ok((obs, ctr))
}

/// Kalman test: observable and controllable at depth `n`.
pub fn is_minimal(sys: &SystemRealization, rank_tol: f64) -> bool {
    let n = sys.order();
    match structure_matrices(sys, n, n) {
        Ok((obs, ctr)) => {
            linalg::numerical_rank(&obs, rank_tol) == n && linalg::numerical_rank(&ctr, rank_tol) == n
        }
        Err(_) => false,
    }
}

/// One depth of the Silverman test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SilvermanCheck {
    pub depth: usize,
    /// `rank H_{r,r}`.
    pub rank: usize,
    /// `rank H_{r+1, r+j}` for `j = 1..=SILVERMAN_SHIFTS`.
    pub extended_ranks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SilvermanResult {
    /// Minimal order, or `None` when the ranks did not stabilize up to `max_depth`.
    pub order: Option<usize>,
    /// `rank H_{r,r}` for each tested depth.
    pub ranks: Vec<usize>,
    pub checks: Vec<SilvermanCheck>,
}

/// Smallest depth `r <= max_depth` with
/// `rank H_{r,r} = rank H_{r+1,r+j}` for `j = 1..=3`.
///
/// Requires `G_1..G_{2 max_depth + 3}`.
pub fn silverman_order(g: &ImpulseResponse, max_depth: usize, rank_tol: f64) -> Result<SilvermanResult> {
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("rank_tol must be > 0, got {rank_tol}")));
    }
    if max_depth == 0 {
        return Err(Error::InvalidParameter("max_depth must be positive".into()));
    }
    let needed = 2 * max_depth + SILVERMAN_SHIFTS;
    if g.len() < needed {
        return Err(dim_err(format!(
            "Silverman test to depth {max_depth} needs G_1..G_{needed}, only G_{} available",
            g.len()
        )));
    }
    let mut checks = Vec::new();
    let mut ranks = Vec::new();
    for depth in 1..=max_depth {
        let rank = linalg::numerical_rank(&hankel(g, depth, depth)?, rank_tol);
        let extended_ranks = (1..=SILVERMAN_SHIFTS)
            .map(|j| hankel(g, depth + 1, depth + j).map(|h| linalg::numerical_rank(&h, rank_tol)))
            .collect::<Result<Vec<_>>>()?;
        let stable = extended_ranks.iter().all(|&r| r == rank);
        ranks.push(rank);
        checks.push(SilvermanCheck {
            depth,
            rank,
            extended_ranks,
        });
        if stable {
            return Ok(SilvermanResult {
                order: Some(rank),
                ranks,
                checks,
            });
        }
    }
    Ok(SilvermanResult {
        order: None,
        ranks,
        checks,
    })
}

/// Balanced SVD realization of order `n` from `G_1..G_N`, `N >= 2n`.
///
/// `H_{r,r'} = U S V*` is truncated to rank `n`; observability is
/// `U_n S_n^{1/2}`, controllability `S_n^{1/2} V_n*`; `C` and `B` are their first
/// block row / column and `A` is the least-squares solution of the shifted
/// Hankel equation. Depths are `n + 1` when enough blocks are available.
pub fn minimal_realization(g: &ImpulseResponse, order: usize, rank_tol: f64) -> Result<SystemRealization> {
    if order == 0 {
        return Err(Error::InvalidParameter("order must be positive".into()));
    }
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("rank_tol must be > 0, got {rank_tol}")));
    }
    let avail = g.len();
    if avail < 2 * order {
        return Err(dim_err(format!(
            "order {order} needs G_1..G_{}, only G_{avail} available",
            2 * order
        )));
    }
    let rows = (order + 1).min(avail / 2);
    let cols = (order + 1).min(avail - rows);
    let h = hankel(g, rows, cols)?;
    let shifted = hankel_shifted(g, rows, cols, 1)?;

    let rank = linalg::numerical_rank(&h, rank_tol);
    if rank < order {
        return Err(Error::InconsistentOrder { rank, order });
    }
    let svd = h.svd(true, true);
    // nalgebra does not guarantee sorted singular values
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let idx = &idx[..order];
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let u_n = Matrix::from_fn(u.nrows(), order, |i, k| u[(i, idx[k])]);
    let v_n = Matrix::from_fn(v_t.ncols(), order, |j, k| v_t[(idx[k], j)]);
    let sqrt_s: Vec<f64> = idx.iter().map(|&k| svd.singular_values[k].sqrt()).collect();

    let obs = Matrix::from_fn(u_n.nrows(), order, |i, k| u_n[(i, k)] * sqrt_s[k]);
    let ctr = Matrix::from_fn(order, v_n.nrows(), |k, j| sqrt_s[k] * v_n[(j, k)]);
    let c = obs.rows(0, g.p).into_owned();
    let b = ctr.columns(0, g.m).into_owned();
    let core = u_n.transpose() * shifted * v_n;
    let a = Matrix::from_fn(order, order, |i, j| core[(i, j)] / (sqrt_s[i] * sqrt_s[j]));
    SystemRealization::new(a, b, c)
}
