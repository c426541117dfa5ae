use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error(transparent)]
    Core(#[from] mkalloc::Error),
}

impl CliError {
    /// 0 success, 1 usage or parse, 2 infeasible, 3 non-convergence,
    /// 4 failed `--check`.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(mkalloc::Error::Infeasible { .. } | mkalloc::Error::InfeasibleInstance { .. }) => 2,
            CliError::Core(mkalloc::Error::NonConvergence { .. }) => 3,
            CliError::CheckFailed(_) => 4,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
