//! Dataset handling, experiment orchestration, and demos for `sparse-gp`.

pub mod config;
pub mod data;
pub mod demos;
pub mod error;
pub mod experiment;

pub use config::ExperimentConfig;
pub use error::{BenchError, Result};
pub use experiment::{emit_results, run_experiment, ExperimentOutcome, RunResult};
