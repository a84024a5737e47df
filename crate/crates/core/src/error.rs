use thiserror::Error;

/// Errors raised by basis construction, operator assembly and time integration.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid too coarse in direction {direction}: {given} nodes given, at least {required} required")]
    GridTooCoarse {
        direction: usize,
        required: usize,
        given: usize,
    },

    #[error("vertical eigensolver failed for wavevector ({n1}, {n2}) ({family})")]
    EigenFailure { n1: i64, n2: i64, family: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid mismatch: field sampled on grid {got}, basis grid is {expected}")]
    GridMismatch { expected: String, got: String },

    #[error("basis mismatch: trajectory was produced on basis {expected}, got {got}")]
    BasisMismatch { expected: String, got: String },

    #[error("dense convection tensor unavailable for m = {m} (limit {limit})")]
    TensorUnavailable { m: usize, limit: usize },

    #[error("Picard iteration did not converge at t = {t} after {iterations} iterations (residual {residual:e})")]
    PicardNotConverged { t: f64, iterations: usize, residual: f64 },

    #[error("non-finite or runaway state at t = {t} (norm {norm:e}, threshold {threshold:e})")]
    NonFiniteState { t: f64, norm: f64, threshold: f64 },

    #[error("insufficient refinement: {0}")]
    InsufficientRefinement(String),

    #[error("too few records: need at least {required}, got {got}")]
    TooFewRecords { required: usize, got: usize },

    #[error("time grid mismatch: {0}")]
    TimeGridMismatch(String),

    #[error("manufactured solution references mode {index} outside a basis of size {m}")]
    CaseNotInSpan { index: usize, m: usize },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
