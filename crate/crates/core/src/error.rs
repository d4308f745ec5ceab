use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected d={expected}, found d={found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point {0} is not inside the unit ball")]
    OutsideBall(String),

    #[error("b is not contractive: {0}")]
    NotContractive(String),

    #[error("b is constant; the operation needs a non-constant symbol")]
    ConstantSymbol,

    #[error("b is quasi-extreme: {0}")]
    QuasiExtreme(String),

    #[error("verdict is inconclusive: {0}")]
    Inconclusive(String),

    #[error("1 - b vanishes at a queried point (|1 - b(z)| = {0:e})")]
    HerglotzSingularity(f64),

    #[error("numerical breakdown: {0}")]
    Numerical(String),

    #[error("zero input: {0}")]
    ZeroInput(&'static str),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
