//! Benchmark harness for catastrophic forgetting in time-series forecasters.
//!
//! A forecaster is fine-tuned on dataset A, then on dataset B; its error on
//! both is measured after each stage and the change on A is reported as
//! backward transfer. Datasets are seeded sums of sinusoids.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod continual;
pub mod error;
pub mod forecaster;
pub mod optim;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod synthgen;

pub use error::{Error, Result};
