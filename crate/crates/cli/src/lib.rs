//! The `sitekeep` command-line tool.

pub mod app;
pub mod config;

pub use app::{main_with, Cli, CliError};
