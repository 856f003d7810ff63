use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Harness failure, mapped onto the process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}

impl From<qtnn_core::Error> for CliError {
    fn from(e: qtnn_core::Error) -> Self {
        match e {
            qtnn_core::Error::Format { .. } => CliError::Data(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
