use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need more than {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("covariance error: {0}")]
    Covariance(String),

    #[error("block scheme error: {0}")]
    Scheme(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("spectral density negative beyond tolerance: f({lambda}) = {value}; increase the autocovariance truncation order")]
    TruncationOrder { lambda: f64, value: f64 },

    #[error("fixed-point solver did not converge at z = {z} after {iterations} iterations (last residual {last_residual:e})")]
    Solver {
        z: Complex64,
        iterations: usize,
        last_residual: f64,
        residual_trace: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::UnsupportedModel(msg.into())
    }
}
