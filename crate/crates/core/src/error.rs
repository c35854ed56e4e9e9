use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{path}: bad magic number: expected {expected:#010x}, found {actual:#010x}")]
    Magic {
        path: PathBuf,
        expected: u32,
        actual: u32,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("{path}: truncated input, needed {needed} bytes at offset {offset}")]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("training failed: non-finite gradient at step {step}")]
    NonFiniteGradient { step: u64 },

    #[error("margin function never reaches {target} on the supplied grid (max {max})")]
    MarginUnreachable { target: f64, max: f64 },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error came from malformed or unreadable input data.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Magic { .. }
                | Error::Format(_)
                | Error::Consistency(_)
                | Error::Truncated { .. }
                | Error::Io { .. }
        )
    }
}
