//! Monte-Carlo experiments, result files and MNIST ingestion for the
//! `icr-bench` command-line tool.

pub mod config;
pub mod emit;
pub mod error;
pub mod experiment;
pub mod idx;
pub mod mnist;
pub mod pgm;

pub use config::{ExperimentConfig, ExperimentKind, Method, RunOptions};
pub use emit::{ExperimentOutput, MetricsRow};
pub use error::{BenchError, Result};
