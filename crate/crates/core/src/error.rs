use thiserror::Error;

/// Errors produced anywhere in the solver suite.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition (shape, symmetry, range).
    #[error("validation error: {0}")]
    Validation(String),

    /// Malformed text input. `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Problem too large for a dense/exhaustive method.
    #[error("resource limit: {0}")]
    Resource(String),

    /// A non-finite or non-real value appeared during evaluation.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Caller broke an API contract (e.g. passing a biased instance to the annealer).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
