//! Experiment harness for PAC off-policy prediction intervals: seeded
//! parallel trials on the synthetic environment, coverage metrics,
//! bound checks and CSV output.

// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod trial;

pub use config::{BehaviorMode, BenchConfig, QuantileModel};
pub use error::{BenchError, Result};
pub use trial::{evaluate, evaluate_miscoverage, Coverage, TrialReport};
