use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or arguments supplied by the user.
    #[error("configuration error: {0}")]
    Config(String),

    /// A function was called outside of its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller broke a shape or ordering contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A NaN or infinity reached the optimizer.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training aborted at step {step}, iteration {iteration}: {reason}")]
    TrainingAbort {
        step: usize,
        iteration: u64,
        reason: String,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
