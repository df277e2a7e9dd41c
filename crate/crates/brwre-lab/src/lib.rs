//! Experiment orchestration, statistics and the command-line front end.

pub mod acceptance;
pub mod cli;
pub mod config;
pub mod envfile;
pub mod error;
pub mod experiments;
pub mod output;
pub mod stats;

pub use error::{LabError, LabResult};
