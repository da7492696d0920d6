use thiserror::Error;

/// Errors produced by the tensor, regression and pipeline routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid mode index {mode} for a tensor of order {order}")]
    InvalidMode { mode: usize, order: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The location-scale fit drove the inverse scale past its bound, i.e. the
    /// residuals can be made exactly zero.
    #[error("perfect fit: residual scale collapsed to zero (inverse scale {0:e})")]
    PerfectFit(f64),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("stream has no observed entries")]
    FullyMasked,

    #[error("mask is not image-wise; use the entry-wise update")]
    NotImageWise,

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
