//! Command-line harness around the `cpcp` library: synthetic tensor
//! generators, text file formats, and the `generate`, `bounds`, `decompose`,
//! `diagnose` and `bench` subcommands.

pub mod app;
pub mod commands;
pub mod config;
pub mod error;
pub mod generate;
pub mod io;

pub use error::{CliError, Result};
