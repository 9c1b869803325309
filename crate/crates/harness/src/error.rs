use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed file: {reason}", path.display())]
    Malformed { path: PathBuf, reason: String },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("{failed} of {total} runs failed")]
    PartialFailure { failed: usize, total: usize },
    #[error(transparent)]
    Core(#[from] simmax_core::Error),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::PartialFailure { .. } => 3,
            HarnessError::Core(simmax_core::Error::NonConvergence { .. }) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
