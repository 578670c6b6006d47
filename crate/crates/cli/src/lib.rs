//! Experiment harness for the `bfvi` command-line tool.
//!
//! Each subcommand is a plain function in [`commands`] so that tests and
//! the acceptance suite can drive it without spawning a process. Exit codes
//! are part of the interface:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O failure while writing results |
//! | 2 | invalid configuration, data or missing run |
//! | 3 | training diverged (record saved with `failed = true`) |
//! | 4 | MCMC R̂ gate failed (record saved, not ground-truth ready) |

use std::path::Path;

pub mod commands;
pub mod config;
pub mod ingest;
pub mod record;
pub mod registry;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Diverged(String),
    #[error("{0}")]
    Gate(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> CliError {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Gate(_) => 4,
        }
    }
}
