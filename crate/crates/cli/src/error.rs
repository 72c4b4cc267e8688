use gp_grief::GriefError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("model file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Numerical(#[from] GriefError),
}

impl CliError {
    /// 0 is success; 1 covers usage, configuration and input problems; 2 is a
    /// numerical failure inside the model.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(
                GriefError::NumericalOverflow { .. }
                | GriefError::EigenFailure { .. }
                | GriefError::NotPositiveDefinite(_)
                | GriefError::RankZero,
            ) => 2,
            _ => 1,
        }
    }

    pub(crate) fn input(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Input {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
