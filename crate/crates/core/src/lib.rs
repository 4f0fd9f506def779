//! Multiclass bandit learning with delayed and missing feedback.

pub mod datasets;
pub mod delay;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
