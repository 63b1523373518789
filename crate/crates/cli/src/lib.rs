//! Scenario files, experiment runners and CSV output for the `noma-ee`
//! command-line tool.

pub mod commands;
pub mod config;
pub mod output;
pub mod validate;

pub use commands::CliError;
pub use config::{load, Scenario};
