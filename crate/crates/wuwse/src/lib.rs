//! File formats and the command-line driver around `wuwse-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod manifest;
pub mod noise;
pub mod report;
pub mod wav;

pub use error::CliError;
