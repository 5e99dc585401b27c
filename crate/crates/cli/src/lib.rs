//! Command-line front end for `homodyne-core`: JSON run configs, trace and
//! result CSV files, and the `homodyne` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod results;

pub use commands::run_cli;
pub use config::RunConfig;
pub use error::CliError;
