//! Command-line front end: TOML configs, line-delimited event logs, run
//! manifests and the `run`, `analyze`, `g2` and `sweep` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod eventlog;
pub mod manifest;

pub use commands::{execute, Cli};
pub use error::CliError;
pub use eventlog::LogFile;
pub use manifest::RunManifest;
