use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for every fallible operation in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data is malformed (non-finite values, impossible geometry).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An API was driven through an unsupported state sequence.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// An internal invariant failed; indicates a bug, not a usage error.
    #[error("internal error: {0}")]
    Internal(String),

    /// The requested metric has no defined value for these inputs.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A file does not conform to its expected on-disk format.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// A manifest line failed to parse or validate.
    #[error("manifest error at line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    /// A model file block failed its integrity check.
    #[error("integrity error in block '{block}': {reason}")]
    Integrity { block: String, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn invalid_state(msg: impl Into<String>) -> Self {
        Error::InvalidState(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}
