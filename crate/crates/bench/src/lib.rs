//! Experiment harness for ex-post private selection: synthetic data,
//! threshold-release experiments, summary tables and exact verification
//! suites.

// NaN must fail range checks, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod report;
pub mod verify;

pub use error::{BenchError, Result};
