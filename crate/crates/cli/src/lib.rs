//! Command-line pipeline over `refnet`: configuration, provenance-stamped
//! artifacts and the subcommands behind the `refnet` binary.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Command, Outcome};
pub use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

impl CliError {
    pub fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Stage {
            stage,
            message: e.to_string(),
        }
    }

    /// 2 for configuration problems, 1 for failures inside a stage.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { .. } => 1,
        }
    }
}
