//! Command implementations behind the `bioprofile` binary.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cmd_generate, cmd_interpret, cmd_study, Overrides};
pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("run failed: {0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Run(_) => 4,
        }
    }
}
