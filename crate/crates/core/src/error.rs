use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("degenerate template: {0}")]
    DegenerateTemplate(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("solver did not converge after {iterations} iterations (final gap estimate {gap:.3e})")]
    Convergence { iterations: usize, gap: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: validation-type failures, numeric failures and
    /// solver non-convergence each get a distinct code.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::DegenerateTemplate(_)
            | Error::Config(_)
            | Error::Parse { .. } => 2,
            Error::Numeric(_) => 3,
            Error::Convergence { .. } => 4,
            Error::Io { .. } => 5,
        }
    }
}
