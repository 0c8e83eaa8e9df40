//! Std companion to `tpe-core`: file formats, run configs and manifests,
//! rayon-backed runners and the `tpe` command-line tool.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod parallel;

pub use error::{CliError, Result};
