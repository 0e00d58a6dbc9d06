use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const RESOURCE_LIMIT: i32 = 2;
    pub const CRITERION_FAILURE: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("resource limit: {0}")]
    ResourceLimit(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record: {0}")]
    Record(String),
    #[error("verification failed: {0}")]
    CriterionFailure(String),
    #[error(transparent)]
    Core(collapse_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ResourceLimit(_) | CliError::Core(collapse_core::Error::ResourceLimit(_)) => {
                exit::RESOURCE_LIMIT
            }
            CliError::CriterionFailure(_) => exit::CRITERION_FAILURE,
            _ => exit::VALIDATION,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<collapse_core::Error> for CliError {
    fn from(e: collapse_core::Error) -> Self {
        match e {
            collapse_core::Error::InvalidArgument(m) => CliError::Config(m),
            collapse_core::Error::Unsupported(m) => CliError::Unsupported(m),
            collapse_core::Error::ResourceLimit(m) => CliError::ResourceLimit(m),
            other => CliError::Core(other),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
