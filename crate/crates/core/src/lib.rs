//! Two-stage gradient-boosted inversion of trabecular outflow parameters,
//! with the data generators, posterior profiling, risk rules and statistics
//! around it.

pub mod artifact;
pub mod cohorts;
pub mod config;
pub mod error;
pub mod features;
pub mod gbt;
pub mod inference;
pub mod pcds;
pub mod physics;
pub mod pipeline;
pub mod risk;
pub mod sampling;
pub mod stats;
pub mod units;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
