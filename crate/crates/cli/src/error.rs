use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] lplab::Error),

    #[error("{path}: {source}")]
    Input { path: PathBuf, source: lplab::Error },

    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },

    #[error("{} check(s) failed: {}", .0.len(), .0.join("; "))]
    Assertion(Vec<String>),
}

impl CliError {
    pub const EXIT_ERROR: i32 = 1;
    pub const EXIT_ASSERTION: i32 = 2;
    pub const EXIT_USAGE: i32 = 64;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => Self::EXIT_USAGE,
            CliError::Assertion(_) => Self::EXIT_ASSERTION,
            CliError::Core(_) | CliError::Input { .. } | CliError::File { .. } => Self::EXIT_ERROR,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
