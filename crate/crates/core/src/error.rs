use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An exhaustive routine was asked to enumerate a ground set that is too large.
    #[error("capacity exceeded: {what} (n = {n}, limit {limit})")]
    Capacity { what: &'static str, n: usize, limit: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    /// Configuration or command-line input rejected before any work was done.
    #[error("{0}")]
    Usage(String),

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// Usage and input problems map to 1, numerical and training failures to 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::Training { .. } | Error::DegenerateMetric(_) => 2,
            _ => 1,
        }
    }
}
