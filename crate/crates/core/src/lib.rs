//! PAC prediction intervals for the reward of a target policy in
//! contextual bandits, built from data logged under a behavior policy.
//!
//! The pipeline rejection-samples the logged data towards the target
//! policy, fits a pair of conditional quantile models on one part of the
//! accepted samples and calibrates a threshold on the rest so that, with
//! probability at least `1 − δ` over the data, the resulting intervals miss
//! at most an `ε` fraction of target-policy rewards.

// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod behavior;
pub mod calibrate;
pub mod dataset;
pub mod error;
pub mod policy;
pub mod quantile;
pub mod rejection;
pub mod rng;
pub mod stats;
pub mod synthenv;
pub mod types;

pub use calibrate::{
    binomial_quantile_k, nonconformity, pac_threshold, pacopp_known, prepare_known,
    CalibratedPredictor, CalibrationDiagnostics, CalibrationSet, ScoreList,
};
pub use error::{Error, Result};
pub use policy::{GaussianLinearPolicy, StochasticPolicy};
pub use quantile::{ModelKind, QuantilePairModel, QuantileTrainConfig};
pub use rejection::{rejection_sample, RsDataset, WeightFunction};
pub use rng::Rng;
pub use synthenv::SynthEnvSpec;
pub use types::{
    Context, LoggedDataset, LoggedSample, PacParams, PredictionInterval, TargetSample,
};
