//! Domain types shared across the pipeline.

use std::fmt;

use crate::error::{invalid, Error, Result};

/// Relative slack used when taking ceilings of products such as `γ·n`, so
/// that `0.7 * 10.0 = 7.000000000000001` still rounds to 7.
pub(crate) const CEIL_SLACK: f64 = 1e-9;

pub(crate) fn ceil_with_slack(x: f64) -> usize {
    let slack = CEIL_SLACK * x.abs().max(1.0);
    (x - slack).ceil().max(0.0) as usize
}

// ── Context ─────────────────────────────────────────────────────────────

/// A fixed-length real context vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    values: Vec<f64>,
}

impl Context {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("context"));
        }
        Ok(Self { values })
    }

    /// One-dimensional context. Panics on non-finite input.
    pub fn scalar(value: f64) -> Self {
        assert!(value.is_finite(), "context must be finite");
        Self {
            values: vec![value],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// First coordinate; the synthetic environment uses scalar contexts.
    pub fn first(&self) -> f64 {
        self.values[0]
    }
}

// ── Samples ─────────────────────────────────────────────────────────────

/// One logged `(context, action, reward)` triple.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedSample {
    pub context: Context,
    pub action: f64,
    pub reward: f64,
}

impl LoggedSample {
    pub fn new(context: Context, action: f64, reward: f64) -> Result<Self> {
        if !action.is_finite() || !reward.is_finite() {
            return Err(Error::NonFinite("logged sample"));
        }
        Ok(Self {
            context,
            action,
            reward,
        })
    }
}

/// Logged triples in collection order. No operation reorders them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoggedDataset {
    samples: Vec<LoggedSample>,
}

impl LoggedDataset {
    pub fn new(samples: Vec<LoggedSample>) -> Self {
        Self { samples }
    }

    pub fn samples(&self) -> &[LoggedSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LoggedSample> {
        self.samples.iter()
    }

    pub fn contexts(&self) -> impl Iterator<Item = &Context> {
        self.samples.iter().map(|s| &s.context)
    }

    pub fn into_samples(self) -> Vec<LoggedSample> {
        self.samples
    }
}

impl FromIterator<LoggedSample> for LoggedDataset {
    fn from_iter<I: IntoIterator<Item = LoggedSample>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// A `(context, reward)` pair under the target policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSample {
    pub context: Context,
    pub reward: f64,
}

impl TargetSample {
    pub fn new(context: Context, reward: f64) -> Result<Self> {
        if !reward.is_finite() {
            return Err(Error::NonFinite("target sample"));
        }
        Ok(Self { context, reward })
    }
}

// ── PAC parameters ──────────────────────────────────────────────────────

/// Miscoverage `epsilon`, confidence `delta`, quantile levels and the
/// calibration fraction `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacParams {
    pub epsilon: f64,
    pub delta: f64,
    pub eps_lo: f64,
    pub eps_up: f64,
    pub gamma: f64,
}

impl PacParams {
    pub fn new(epsilon: f64, delta: f64, eps_lo: f64, eps_up: f64, gamma: f64) -> Result<Self> {
        let open = |x: f64| x > 0.0 && x < 1.0;
        if !open(epsilon) {
            return Err(invalid(format!("epsilon must lie in (0,1), got {epsilon}")));
        }
        if !open(delta) {
            return Err(invalid(format!("delta must lie in (0,1), got {delta}")));
        }
        if !open(gamma) {
            return Err(invalid(format!("gamma must lie in (0,1), got {gamma}")));
        }
        if !(0.0 <= eps_lo && eps_lo < eps_up && eps_up <= 1.0) {
            return Err(invalid(format!(
                "quantile levels must satisfy 0 <= eps_lo < eps_up <= 1, got ({eps_lo}, {eps_up})"
            )));
        }
        if ((eps_up - eps_lo) - (1.0 - epsilon)).abs() > 1e-12 {
            return Err(invalid(format!(
                "eps_up - eps_lo must equal 1 - epsilon, got {} vs {}",
                eps_up - eps_lo,
                1.0 - epsilon
            )));
        }
        Ok(Self {
            epsilon,
            delta,
            eps_lo,
            eps_up,
            gamma,
        })
    }

    /// Levels `epsilon/2` and `1 - epsilon/2`.
    pub fn symmetric(epsilon: f64, delta: f64, gamma: f64) -> Result<Self> {
        Self::new(epsilon, delta, epsilon / 2.0, 1.0 - epsilon / 2.0, gamma)
    }

    pub fn with_delta(self, delta: f64) -> Result<Self> {
        Self::new(self.epsilon, delta, self.eps_lo, self.eps_up, self.gamma)
    }
}

// ── Prediction interval ─────────────────────────────────────────────────

/// A closed interval on the extended real line.
///
/// `lo <= hi` always holds except for [`PredictionInterval::EMPTY`], which
/// uses `lo = +inf, hi = -inf` so that membership is always false.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    pub lo: f64,
    pub hi: f64,
}

impl PredictionInterval {
    pub const EMPTY: PredictionInterval = PredictionInterval {
        lo: f64::INFINITY,
        hi: f64::NEG_INFINITY,
    };

    pub const WHOLE_LINE: PredictionInterval = PredictionInterval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(invalid(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, r: f64) -> bool {
        self.lo <= r && r <= self.hi
    }

    /// Lebesgue measure; infinite for unbounded intervals, zero when empty.
    pub fn length(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.hi - self.lo
        }
    }
}

impl fmt::Display for PredictionInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "(empty)");
        }
        let open_lo = self.lo == f64::NEG_INFINITY;
        let open_hi = self.hi == f64::INFINITY;
        write!(
            f,
            "{}{}, {}{}",
            if open_lo { '(' } else { '[' },
            self.lo,
            self.hi,
            if open_hi { ')' } else { ']' }
        )
    }
}
