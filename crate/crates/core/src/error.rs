use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("local state {site} has zero norm")]
    ZeroNorm { site: usize },

    #[error("malformed gate: {0}")]
    MalformedGate(String),

    #[error("invalid truncation: chi_max must be at least 1")]
    InvalidChiMax,

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("bond {bond} spectrum is stale; canonicalize the state before reading entropies")]
    StaleSpectra { bond: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("system too large for dense evolution: L = {len}, limit {limit}")]
    TooLarge { len: usize, limit: usize },

    #[error("state norm collapsed to {norm:e}")]
    NormCollapse { norm: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("linear algebra failure: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
