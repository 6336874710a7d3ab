use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rank-deficient data: Gram matrix has numerical rank {rank} < {dim}")]
    RankDeficient { rank: usize, dim: usize },

    #[error("observation rows dependent: C C* has numerical rank {rank} < {rows}")]
    DependentObservations { rank: usize, rows: usize },

    #[error("inconsistent order: Hankel numerical rank {rank} is below requested order {order}")]
    InconsistentOrder { rank: usize, order: usize },

    #[error("degenerate expansion: linear map for A1 has numerical rank {rank} of {dim}")]
    DegenerateExpansion { rank: usize, dim: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
