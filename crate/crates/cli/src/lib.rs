//! Experiment harness: key=value run configs, seeded gamma sweeps written as
//! per-round CSVs, and log-log SVG plots of error-rate curves.

pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;

pub use error::{CliError, Result};
