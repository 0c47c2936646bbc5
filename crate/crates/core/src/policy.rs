//! Stochastic policies over a one-dimensional action space.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::rng::Rng;
use crate::stats::{normal_log_pdf, normal_pdf};
use crate::types::Context;

/// A conditional density over real actions given a context.
pub trait StochasticPolicy: Send + Sync {
    fn density(&self, context: &Context, action: f64) -> f64;

    fn log_density(&self, context: &Context, action: f64) -> f64 {
        self.density(context, action).ln()
    }

    fn sample(&self, context: &Context, rng: &mut Rng) -> f64;

    /// Closed-form view used for exact weight bounds.
    fn as_gaussian(&self) -> Option<&GaussianLinearPolicy> {
        None
    }
}

/// `A | s ~ N(intercept + slopes·s, variance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLinearPolicy {
    intercept: f64,
    slopes: Vec<f64>,
    variance: f64,
}

impl GaussianLinearPolicy {
    pub fn new(intercept: f64, slopes: Vec<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(invalid(format!(
                "policy variance must be positive, got {variance}"
            )));
        }
        if !intercept.is_finite() || slopes.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("policy coefficients"));
        }
        Ok(Self {
            intercept,
            slopes,
            variance,
        })
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn mean(&self, context: &Context) -> f64 {
        self.intercept
            + self
                .slopes
                .iter()
                .zip(context.values())
                .map(|(c, s)| c * s)
                .sum::<f64>()
    }

    /// Same mean map with a different variance.
    pub fn with_variance(&self, variance: f64) -> Result<Self> {
        Self::new(self.intercept, self.slopes.clone(), variance)
    }

    /// Same variance and slopes, intercept shifted by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            intercept: self.intercept + shift,
            ..self.clone()
        }
    }
}

impl StochasticPolicy for GaussianLinearPolicy {
    fn density(&self, context: &Context, action: f64) -> f64 {
        normal_pdf(action, self.mean(context), self.variance)
    }

    fn log_density(&self, context: &Context, action: f64) -> f64 {
        normal_log_pdf(action, self.mean(context), self.variance)
    }

    fn sample(&self, context: &Context, rng: &mut Rng) -> f64 {
        rng.normal(self.mean(context), self.variance)
    }

    fn as_gaussian(&self) -> Option<&GaussianLinearPolicy> {
        Some(self)
    }
}

/// Text form `mean=<intercept>,<slope1>,...;var=<variance>`.
impl fmt::Display for GaussianLinearPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mean={}", self.intercept)?;
        for c in &self.slopes {
            write!(f, ",{c}")?;
        }
        write!(f, ";var={}", self.variance)
    }
}

impl FromStr for GaussianLinearPolicy {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let bad = || {
            invalid(format!(
                "policy spec must look like 'mean=0,0.25;var=1', got '{text}'"
            ))
        };
        let (mean_part, var_part) = text.trim().split_once(';').ok_or_else(bad)?;
        let coeffs = mean_part.trim().strip_prefix("mean=").ok_or_else(bad)?;
        let var = var_part.trim().strip_prefix("var=").ok_or_else(bad)?;
        let mut values = coeffs
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(bad());
        }
        let intercept = values.remove(0);
        let variance = var.trim().parse::<f64>().map_err(|_| bad())?;
        Self::new(intercept, values, variance)
    }
}
