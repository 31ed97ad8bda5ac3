//! Configuration-driven experiments for the `bouncy` samplers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;

pub use config::ExperimentConfig;
pub use experiments::{run, stream};
pub use output::Outcome;
