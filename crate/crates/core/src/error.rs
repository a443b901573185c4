use thiserror::Error;

/// Errors raised by the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("header line {line}: {message}")]
    HeaderParse { line: usize, message: String },

    #[error("signal decode failed at byte offset {offset}: {message}")]
    Decode { offset: usize, message: String },

    #[error("annotation decode failed at byte offset {offset}: {message}")]
    Annotation { offset: usize, message: String },

    #[error("unsupported storage format {0} (supported: 212, 16)")]
    UnsupportedFormat(u32),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unstable filter section: pole magnitude {0:.6} >= 1")]
    UnstableFilter(f64),

    #[error("solver did not converge within {iterations} iterations (max KKT violation {max_violation:.3e})")]
    NonConvergence { iterations: usize, max_violation: f64 },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
