//! Datasets, metrics, persistence, configuration and the command line for
//! the two-stage hierarchical EBM.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod idx;
pub mod metrics;
pub mod mmd;
pub mod pgm;
pub mod pipeline;
pub mod toy;

pub use error::{HarnessError, Result};
