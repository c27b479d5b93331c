//! Command-line driver and HTTP service for drugnet artifact stores.

pub mod args;
pub mod commands;
pub mod error;
pub mod server;

pub use args::Cli;
pub use error::CliError;
