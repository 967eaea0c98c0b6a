use thiserror::Error;

use crate::orthogonalize::OrthoTrace;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("row {row}: every neighbor distance is zero, bandwidth is undefined")]
    DegenerateNeighborhood { row: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure {
        what: &'static str,
        iterations: usize,
        residual: f64,
        trace: Option<Box<OrthoTrace>>,
    },

    #[error("conjugated kernel is not symmetric (max deviation {deviation:e})")]
    NotConjugateSymmetric { deviation: f64 },

    #[error("row {row} underflowed to the exponent floor; c2 is too large")]
    RowUnderflow { row: usize },

    #[error("{path}, line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Trace attached to a fixed-point failure, if any.
    pub fn trace(&self) -> Option<&OrthoTrace> {
        match self {
            Error::ConvergenceFailure { trace, .. } => trace.as_deref(),
            _ => None,
        }
    }
}
