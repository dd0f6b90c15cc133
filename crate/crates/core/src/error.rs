use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A fixed-point iteration failed to reach its tolerance.
    #[error("no contraction after {iterations} iterations (residual {residual:e}): {context}")]
    NoContraction {
        context: String,
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("blow-up: {0}")]
    BlowUp(String),

    #[error("unbounded search: {0}")]
    UnboundedSearch(String),

    /// A property guaranteed by the continuous theory failed in a run.
    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    /// Process exit status: 1 for configuration and IO problems, 2 when a
    /// solver gave up, 3 when a guaranteed property failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NoContraction { .. } => 2,
            Error::InvariantViolation(_) | Error::BlowUp(_) | Error::Divergence(_) => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
