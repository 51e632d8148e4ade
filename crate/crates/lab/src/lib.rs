//! Experiment harness for `raspen-core`: flat config files, parallel runs over
//! the configured cross product, CSV/JSON output and comparison against
//! reference tables.

pub mod compare;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fields;

pub use config::{ExperimentConfig, Method};
pub use error::{LabError, Result};
pub use experiment::{run_experiment, run_with_threads, write_outputs, ExperimentOutput, RunInfo, RunRow};
