//! Command-line front end for `collapse-core`: config files, output writers,
//! run manifests and the verification suites.

pub mod commands;
pub mod config;
mod error;
pub mod manifest;
pub mod output;
pub mod suites;

pub use error::{exit, CliError, Result};
