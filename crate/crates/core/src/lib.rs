//! Bouncy particle samplers: global and local (factor graph) variants,
//! Poisson process simulation utilities and trajectory estimators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alias;
pub mod bps;
pub mod error;
pub mod estimators;
pub mod factor_graph;
pub mod models;
pub mod ppsim;
pub mod stats;

pub use error::{Error, Result};
