use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dataset has {available} rows but {requested} were requested without replacement")]
    InsufficientSamples { requested: usize, available: usize },

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("numerical overflow in {context}")]
    Overflow { context: &'static str },

    #[error("quadrature did not converge: relative change {achieved:e} at order {order}")]
    QuadratureNotConverged { achieved: f64, order: usize },

    #[error("{method} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("density grid too narrow: reconstructed mass {mass:.6} after widening")]
    GridTooNarrow { mass: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown column `{column}`; available columns: {available}")]
    UnknownColumn { column: String, available: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
