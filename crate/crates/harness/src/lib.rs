//! Experiment harness for the sim-max / Information Bottleneck study:
//! configuration, checksummed artifacts, and the command pipeline behind
//! the `simmax` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod seeds;

pub use config::{ExperimentConfig, Preset};
pub use error::{HarnessError, Result};
