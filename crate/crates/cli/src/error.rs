use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] qaint_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for contract violations, 3 for degenerate input, 4 when the
    /// decompressed data and the indices disagree.
    pub fn exit_code(&self) -> i32 {
        use qaint_core::Error as E;
        match self {
            CliError::Core(E::Degenerate(_)) => 3,
            CliError::Core(E::Inconsistent(_)) => 4,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
