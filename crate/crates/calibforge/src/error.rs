use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Exit code for bad input: missing files, malformed data, invalid arguments.
pub const EXIT_USER: i32 = 1;
/// Exit code for failures that are not the caller's fault.
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] calibforge_core::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn read(path: &Path, source: io::Error) -> Self {
        CliError::Read { path: path.to_path_buf(), source }
    }

    pub fn write(path: &Path, source: io::Error) -> Self {
        CliError::Write { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        CliError::Format { path: path.to_path_buf(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Write { .. } | CliError::Internal(_) => EXIT_INTERNAL,
            CliError::Core(calibforge_core::Error::Numeric(_)) => EXIT_INTERNAL,
            _ => EXIT_USER,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
