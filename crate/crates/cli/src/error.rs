use std::path::{Path, PathBuf};

use herald_core::error::{AnalysisError, ConfigError, PhotonicsError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: malformed event log: {reason}", path.display())]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("insufficient data: {0}")]
    Insufficient(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Malformed { .. } => 3,
            CliError::Insufficient(_) => 4,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::GridOutOfRange { .. }
            | AnalysisError::DegenerateConfusion
            | AnalysisError::ReadoutFidelityOutOfRange(_) => CliError::Config(e.to_string()),
            _ => CliError::Insufficient(e.to_string()),
        }
    }
}

impl From<PhotonicsError> for CliError {
    fn from(e: PhotonicsError) -> Self {
        CliError::Insufficient(e.to_string())
    }
}
