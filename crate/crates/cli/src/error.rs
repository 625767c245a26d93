use std::path::Path;

use thiserror::Error;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] postcut_core::Error),

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("stale artifact {path}: checksum differs from {manifest}; rerun `{stage}`")]
    Stale {
        path: String,
        manifest: String,
        stage: String,
    },

    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(postcut_core::Error::Io { .. }) | CliError::Io { .. } => EXIT_IO,
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
            _ => EXIT_VALIDATION,
        }
    }
}
