use std::io;
use std::path::PathBuf;

use enks_core::FilterError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("{filter} failed at step {step}: {source}")]
    Step {
        filter: String,
        step: usize,
        #[source]
        source: FilterError,
    },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        HarnessError::Data {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit status: 2 for bad configuration or arguments, 3 for a
    /// numerical breakdown, 1 for I/O and malformed data files.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Filter(e) if e.is_numeric() => 3,
            HarnessError::Filter(_) => 2,
            HarnessError::Step { source, .. } if source.is_numeric() => 3,
            HarnessError::Step { .. } => 2,
            HarnessError::Io { .. } | HarnessError::Data { .. } => 1,
        }
    }
}
