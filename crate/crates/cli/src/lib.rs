//! Command-line front end: config parsing, dispatch, and bit-stable
//! serialization of trajectories, fixed points, spectral reports, and
//! experiment tables.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

/// Errors mapped to process exit codes: config 2, numerical 3, I/O 4.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Numerical(groupdyn_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<groupdyn_core::Error> for AppError {
    fn from(err: groupdyn_core::Error) -> Self {
        match err {
            groupdyn_core::Error::InvalidConfig(msg) => AppError::Config(msg),
            other => AppError::Numerical(other),
        }
    }
}

impl AppError {
    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Config(_) => "config",
            AppError::Numerical(_) => "numerical",
            AppError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numerical(_) => 3,
            AppError::Io(_) => 4,
        }
    }
}
