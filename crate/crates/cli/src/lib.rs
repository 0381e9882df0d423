//! Batch front end: config ingestion, the five commands and the canned
//! example runs.

pub mod commands;
pub mod config;
pub mod error;
pub mod examples;

pub use commands::{effective_config, run, Command, Output};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use examples::{cmd_example, ExampleReport};
