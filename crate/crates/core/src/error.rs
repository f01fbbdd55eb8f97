
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("C({n},{k}) = {count} supports exceeds the enumeration limit {limit}; use branch-and-bound")]
    EnumerationTooLarge {
        n: usize,
        k: usize,
        count: u128,
        limit: u128,
    },

    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("file truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("header dimensions invalid: {0}")]
    HeaderDimensions(String),

    #[error("non-finite value in {tensor}")]
    NonFiniteValue { tensor: &'static str },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },


    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
