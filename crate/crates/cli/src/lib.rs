//! Library side of the `onh` command: experiment configuration, dataset
//! construction from synthetic cohorts, cross-validated evaluation and the
//! artifact formats shared by the subcommands.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod phantom_dir;

use thiserror::Error;

/// Exit status 1 for bad input discovered before any work starts, 2 for
/// failures while running.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Runtime(_) => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
