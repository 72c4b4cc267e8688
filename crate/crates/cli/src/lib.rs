//! Command-line front end for `gp-grief`: CSV ingestion, JSON configuration,
//! a binary model format and the train / sample / predict / study commands.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;

pub use error::{CliError, Result};
