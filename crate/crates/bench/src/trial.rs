//! Per-trial coverage evaluation and the report row every experiment emits.

use pacopp::{CalibrationDiagnostics, Context, PredictionInterval, TargetSample};
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Coverage of one predictor on one test set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    /// Fraction of test rewards outside their interval.
    pub miscoverage: f64,
    /// Mean interval length; `inf` as soon as one interval is unbounded.
    pub mean_length: f64,
    /// Every interval is the whole line.
    pub trivial: bool,
}

/// Fraction of test points whose reward falls outside the predicted
/// (closed) interval.
pub fn evaluate_miscoverage(
    predict: impl Fn(&Context) -> PredictionInterval,
    test: &[TargetSample],
) -> Result<f64> {
    Ok(evaluate(predict, test)?.miscoverage)
}

pub fn evaluate(
    predict: impl Fn(&Context) -> PredictionInterval,
    test: &[TargetSample],
) -> Result<Coverage> {
    if test.is_empty() {
        return Err(pacopp::Error::EmptyTestSet.into());
    }
    let mut missed = 0usize;
    let mut length = 0.0;
    let mut trivial = true;
    for t in test {
        let iv = predict(&t.context);
        if !iv.contains(t.reward) {
            missed += 1;
        }
        length += iv.length();
        trivial &= iv == PredictionInterval::WHOLE_LINE;
    }
    let n = test.len() as f64;
    Ok(Coverage {
        miscoverage: missed as f64 / n,
        mean_length: length / n,
        trivial,
    })
}

/// One method evaluated in one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub method: String,
    pub run: usize,
    pub seed: u64,
    pub n: usize,
    pub epsilon: f64,
    /// Confidence parameter for PAC methods, empty for the baselines.
    pub delta: Option<f64>,
    pub miscoverage: f64,
    pub mean_length: f64,
    pub trivial: bool,
    pub threshold: f64,
    pub n_rs: usize,
    pub m: usize,
    pub k: i64,
    pub ties: bool,
    pub violations: usize,
    /// Estimated weight error, when the true behavior policy is known.
    pub delta_w: Option<f64>,
}

impl TrialReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        method: &str,
        run: usize,
        seed: u64,
        n: usize,
        epsilon: f64,
        delta: Option<f64>,
        coverage: Coverage,
        threshold: f64,
        diagnostics: &CalibrationDiagnostics,
    ) -> Self {
        Self {
            method: method.to_string(),
            run,
            seed,
            n,
            epsilon,
            delta,
            miscoverage: coverage.miscoverage,
            mean_length: coverage.mean_length,
            trivial: coverage.trivial,
            threshold,
            n_rs: diagnostics.n_rs,
            m: diagnostics.m,
            k: diagnostics.k,
            ties: diagnostics.ties,
            violations: diagnostics.violations,
            delta_w: None,
        }
    }

    pub fn coverage(&self) -> f64 {
        1.0 - self.miscoverage
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_set() -> Vec<TargetSample> {
        (0..10)
            .map(|i| TargetSample::new(Context::scalar(0.0), i as f64).unwrap())
            .collect()
    }

    #[test]
    fn trivial_and_empty_predictors() {
        let t = test_set();
        assert_eq!(
            evaluate_miscoverage(|_| PredictionInterval::WHOLE_LINE, &t).unwrap(),
            0.0
        );
        assert_eq!(
            evaluate_miscoverage(|_| PredictionInterval::EMPTY, &t).unwrap(),
            1.0
        );
        let c = evaluate(|_| PredictionInterval::WHOLE_LINE, &t).unwrap();
        assert!(c.trivial && c.mean_length == f64::INFINITY);
    }

    #[test]
    fn closed_membership_counts_endpoints() {
        let t = test_set();
        let c = evaluate(|_| PredictionInterval::new(0.0, 4.0).unwrap(), &t).unwrap();
        assert_eq!(c.miscoverage, 0.5);
        assert_eq!(c.mean_length, 4.0);
        assert!(!c.trivial);
    }

    #[test]
    fn empty_test_set_is_an_error() {
        assert!(evaluate_miscoverage(|_| PredictionInterval::WHOLE_LINE, &[]).is_err());
    }
}
