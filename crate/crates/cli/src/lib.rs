//! Command-line front end: CSV ingestion, analysis commands and simulation driving.

pub mod args;
pub mod commands;
pub mod error;
pub mod report;
pub mod table;

pub use error::{CliError, Result};
