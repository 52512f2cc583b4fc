//! Ex-post private selection: AboveThreshold with per-query budgets,
//! random-dropping tuners, ex-post accounting, a privacy filter and an exact
//! distribution oracle for checking all of them on small instances.

// NaN must fail range checks, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod above_threshold;
pub mod accounting;
pub mod error;
pub mod filter;
pub mod histogram;
pub mod mechanism;
pub mod noise;
pub mod oracle;
pub mod outcome;
pub mod random_drop;

pub use error::{Error, Result};
pub use histogram::{Histogram, Query};
pub use mechanism::{Guarantee, MechanismSpec};
pub use outcome::{OrderedOutput, Outcome, Selection};
