//! Exponential step-size gradient descent, its baselines and the statistical
//! testbeds used to study it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod objectives;
pub mod optim;
pub mod param;
pub mod rng;
pub mod stat_models;

pub use error::{Error, Result};
pub use optim::{
    run_optimizer, HomogeneityProfile, IterateRecord, Objective, OptimizerConfig, StepSchedule,
    Termination, Trajectory,
};
pub use param::ParamVector;
