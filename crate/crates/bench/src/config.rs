//! Experiment configuration: flat `key = value` text (a TOML subset), with
//! every key optional and unknown keys rejected.

use std::path::Path;

use pacopp::baselines::CoppConfig;
use pacopp::{ModelKind, PacParams, QuantileTrainConfig};
use serde::Deserialize;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantileModel {
    Affine,
    Mlp,
}

/// Where the PAC pipeline in the Figure-2 comparison gets its weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorMode {
    /// True behavior policy.
    Known,
    /// Gaussian policy fitted on the training half.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Logged sample size for single-size experiments.
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub runs: usize,
    /// Target-policy test points per run.
    pub tests: usize,
    /// Test points per run for the weighted-CP baseline, which is far
    /// costlier per point.
    pub copp_tests: usize,

    pub n_grid: Vec<usize>,
    pub delta_eps_grid: Vec<f64>,
    /// Band width used by the two-sided bound check.
    pub band_delta_eps: f64,
    pub figure2_deltas: Vec<f64>,
    pub behavior: BehaviorMode,

    pub convergence_n_grid: Vec<usize>,
    pub convergence_runs: usize,
    pub convergence_contexts: usize,

    pub copp_mc_samples: usize,
    pub copp_grid_points: usize,
    pub copp_grid_margin: f64,

    pub quantile_model: QuantileModel,
    pub learning_rate: f64,
    pub epochs: usize,
    pub hidden_width: usize,

    pub variance_margin: f64,
    pub weight_error_mc: usize,
    /// Intercept shifts of the finite behavior class around the truth.
    pub class_shifts: Vec<f64>,
    /// Failure probability of the class-estimation step.
    pub class_confidence: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            epsilon: 0.2,
            delta: 0.1,
            gamma: 0.5,
            runs: 500,
            tests: 10_000,
            copp_tests: 500,
            n_grid: vec![500, 1000, 2000, 4000],
            delta_eps_grid: vec![0.05, 0.1, 1.0],
            band_delta_eps: 0.05,
            figure2_deltas: vec![0.5, 0.25, 0.1, 0.01],
            behavior: BehaviorMode::Estimated,
            convergence_n_grid: vec![500, 2000, 8000],
            convergence_runs: 100,
            convergence_contexts: 100,
            copp_mc_samples: 100,
            copp_grid_points: 400,
            copp_grid_margin: 0.25,
            quantile_model: QuantileModel::Affine,
            learning_rate: 0.5,
            epochs: 500,
            hidden_width: 32,
            variance_margin: 0.05,
            weight_error_mc: 100_000,
            class_shifts: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            class_confidence: 0.1,
        }
    }
}

impl BenchConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: BenchConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BenchError::Config(msg));
        self.params()?;
        for d in &self.figure2_deltas {
            self.params()?.with_delta(*d)?;
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.tests == 0 || self.copp_tests == 0 {
            return bad("tests and copp_tests must be at least 1".into());
        }
        if self.n_grid.is_empty() || self.convergence_n_grid.is_empty() {
            return bad("n grids must not be empty".into());
        }
        if self.delta_eps_grid.iter().any(|d| !(*d > 0.0))
            || !(self.band_delta_eps > 0.0 && self.band_delta_eps < self.epsilon)
        {
            return bad(
                "band widths must be positive (and the bound-check band below epsilon)".into(),
            );
        }
        if self.convergence_runs == 0 || self.convergence_contexts == 0 {
            return bad("convergence runs and contexts must be at least 1".into());
        }
        if self.class_shifts.is_empty() {
            return bad("class_shifts must not be empty".into());
        }
        if !(self.class_confidence > 0.0 && self.class_confidence < 1.0) {
            return bad("class_confidence must lie in (0,1)".into());
        }
        if self.weight_error_mc == 0 {
            return bad("weight_error_mc must be at least 1".into());
        }
        self.copp()?;
        self.quantile()?;
        Ok(())
    }

    pub fn params(&self) -> Result<PacParams> {
        Ok(PacParams::symmetric(self.epsilon, self.delta, self.gamma)?)
    }

    pub fn copp(&self) -> Result<CoppConfig> {
        let cfg = CoppConfig {
            mc_samples: self.copp_mc_samples,
            grid_points: self.copp_grid_points,
            grid_margin: self.copp_grid_margin,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn quantile(&self) -> Result<QuantileTrainConfig> {
        let kind = match self.quantile_model {
            QuantileModel::Affine => ModelKind::Affine,
            QuantileModel::Mlp => ModelKind::Mlp {
                hidden_width: self.hidden_width,
            },
        };
        let cfg = QuantileTrainConfig {
            kind,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
