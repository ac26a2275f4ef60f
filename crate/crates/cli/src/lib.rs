//! Experiment harness for the `egd` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod verify;

pub use config::{ConfigError, Experiment, ExperimentConfig};
pub use experiments::{run_experiment, Artifacts, Outcome};
