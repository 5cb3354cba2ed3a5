use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),
}

impl SimError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        SimError::ScenarioInvalid(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> u8 {
        match self {
            SimError::ScenarioInvalid(_) => 2,
            SimError::Io { .. } => 3,
            SimError::OracleMismatch(_) => 4,
        }
    }
}
