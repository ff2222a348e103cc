use std::io;
use std::path::PathBuf;

use cvqss_core::postprocess::PostprocessError;
use thiserror::Error;

/// Failures of the harness, each tied to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no positive key rate: {0}")]
    NoKey(String),
    #[error("estimation failure: {0}")]
    Estimation(#[from] PostprocessError),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::NoKey(_) => 3,
            CliError::Estimation(_) => 4,
            CliError::Io { .. } => 5,
        }
    }

    pub fn config(e: impl ToString) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
