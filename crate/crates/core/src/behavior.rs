//! Behavior-policy estimation for data whose logging policy is unknown, and
//! the pipeline that calibrates with the estimated weights.

use crate::calibrate::{default_context_probe, CalibratedPredictor, CalibrationSet};
use crate::dataset::split_dataset;
use crate::error::{invalid, Error, Result};
use crate::policy::{GaussianLinearPolicy, StochasticPolicy};
use crate::quantile::QuantileTrainConfig;
use crate::rejection::{rejection_sample, WeightFunction};
use crate::rng::Rng;
use crate::stats::fit_affine_gaussian;
use crate::types::{Context, LoggedDataset, PacParams};

// ── Finite policy class ─────────────────────────────────────────────────

/// A finite list of candidate behavior policies with a common bound on
/// `π_e/π` over the class.
#[derive(Debug, Clone)]
pub struct FinitePolicyClass<P> {
    policies: Vec<P>,
    bound: f64,
}

impl<P: StochasticPolicy> FinitePolicyClass<P> {
    /// Build the class and compute its ratio bound against `target` on
    /// `context_probe`.
    pub fn new(
        policies: Vec<P>,
        target: &dyn StochasticPolicy,
        context_probe: &[Context],
    ) -> Result<Self> {
        if policies.is_empty() {
            return Err(invalid("policy class must not be empty"));
        }
        let mut bound: f64 = 1.0;
        for p in &policies {
            bound = bound.max(WeightFunction::for_policies(target, p, context_probe)?.bound());
        }
        Ok(Self { policies, bound })
    }

    pub fn policies(&self) -> &[P] {
        &self.policies
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }
}

impl FinitePolicyClass<GaussianLinearPolicy> {
    /// `base` with its intercept moved by each of `shifts`.
    pub fn shifted_gaussians(
        base: &GaussianLinearPolicy,
        shifts: &[f64],
        target: &dyn StochasticPolicy,
        context_probe: &[Context],
    ) -> Result<Self> {
        Self::new(
            shifts.iter().map(|c| base.shifted(*c)).collect(),
            target,
            context_probe,
        )
    }
}

/// Total conditional log-density of the logged actions under `policy`.
pub fn log_likelihood(policy: &dyn StochasticPolicy, d: &LoggedDataset) -> f64 {
    d.iter()
        .map(|x| policy.log_density(&x.context, x.action))
        .sum()
}

/// Index of the class member with the largest log-likelihood on `d1`.
/// Ties go to the earlier member; members with a zero density at some
/// logged pair score `-inf`.
pub fn mle_policy<P: StochasticPolicy>(
    class: &FinitePolicyClass<P>,
    d1: &LoggedDataset,
) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in class.policies().iter().enumerate() {
        let ll = log_likelihood(p, d1);
        if ll == f64::NEG_INFINITY || ll.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| ll > b) {
            best = Some((i, ll));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoFeasiblePolicy)
}

// ── Parametric fit ──────────────────────────────────────────────────────

/// A fitted Gaussian behavior policy.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedPolicy {
    pub policy: GaussianLinearPolicy,
    /// Variance before the clamp.
    pub raw_variance: f64,
    /// The variance was raised to keep the weight bounded.
    pub clamped: bool,
}

/// Affine-mean, constant-variance Gaussian MLE of the action given the
/// context. The variance is raised to at least
/// `target_variance·(1 + min_variance_margin)` so that `π_e/π̂_b` stays
/// bounded in the action.
pub fn fit_gaussian_policy(
    d1: &LoggedDataset,
    min_variance_margin: f64,
    target_variance: f64,
) -> Result<FittedPolicy> {
    if d1.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: d1.len(),
        });
    }
    if !(min_variance_margin > 0.0) || !(target_variance > 0.0) {
        return Err(invalid(
            "variance margin and target variance must be positive",
        ));
    }
    let features: Vec<Vec<f64>> = d1.iter().map(|x| x.context.values().to_vec()).collect();
    let actions: Vec<f64> = d1.iter().map(|x| x.action).collect();
    let fit = fit_affine_gaussian(&features, &actions, 20_000);
    let floor = target_variance * (1.0 + min_variance_margin);
    let clamped = !(fit.variance >= floor);
    let policy = GaussianLinearPolicy::new(fit.intercept, fit.slopes, fit.variance.max(floor))?;
    Ok(FittedPolicy {
        policy,
        raw_variance: fit.variance,
        clamped,
    })
}

// ── Weight error ────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightErrorReport {
    /// Monte Carlo estimate of `E|ŵ − w|` under contexts and true behavior actions.
    pub delta_w_hat: f64,
    pub std_error: f64,
    pub mc_samples: usize,
}

/// Estimate `E|π_e/π̂_b − π_e/π_b|` with `(S, A)` drawn from
/// `sample_context` and the true behavior policy.
pub fn estimate_weight_error(
    pbhat: &dyn StochasticPolicy,
    pb_true: &dyn StochasticPolicy,
    pe: &dyn StochasticPolicy,
    sample_context: &dyn Fn(&mut Rng) -> Context,
    mc: usize,
    rng: &mut Rng,
) -> WeightErrorReport {
    let mc = mc.max(1);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..mc {
        let s = sample_context(rng);
        let a = pb_true.sample(&s, rng);
        let e = pe.density(&s, a);
        let diff = (e / pbhat.density(&s, a) - e / pb_true.density(&s, a)).abs();
        let diff = if diff.is_nan() { 0.0 } else { diff };
        sum += diff;
        sum_sq += diff * diff;
    }
    let n = mc as f64;
    let mean = sum / n;
    let var = if mc > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    WeightErrorReport {
        delta_w_hat: mean,
        std_error: (var / n).sqrt(),
        mc_samples: mc,
    }
}

// ── Unknown-behavior pipeline ───────────────────────────────────────────

/// How the behavior policy is obtained from the training half.
#[derive(Debug, Clone)]
pub enum BehaviorEstimator {
    /// Affine-Gaussian MLE with the variance clamp margin.
    Gaussian { margin: f64 },
    /// Maximum likelihood over a finite class.
    FiniteClass(FinitePolicyClass<GaussianLinearPolicy>),
    /// Use this policy as the estimate.
    Fixed(GaussianLinearPolicy),
}

impl Default for BehaviorEstimator {
    fn default() -> Self {
        BehaviorEstimator::Gaussian { margin: 0.05 }
    }
}

impl BehaviorEstimator {
    /// Returns the estimate and whether a variance clamp engaged.
    pub fn estimate(
        &self,
        d1: &LoggedDataset,
        pe: &dyn StochasticPolicy,
    ) -> Result<(GaussianLinearPolicy, bool)> {
        match self {
            BehaviorEstimator::Gaussian { margin } => {
                let target_variance = pe.as_gaussian().map(|g| g.variance()).ok_or_else(|| {
                    invalid("Gaussian behavior fitting needs a Gaussian target policy")
                })?;
                let fit = fit_gaussian_policy(d1, *margin, target_variance)?;
                Ok((fit.policy, fit.clamped))
            }
            BehaviorEstimator::FiniteClass(class) => {
                Ok((class.policies()[mle_policy(class, d1)?].clone(), false))
            }
            BehaviorEstimator::Fixed(p) => Ok((p.clone(), false)),
        }
    }
}

/// Calibration state of the unknown-behavior pipeline.
#[derive(Debug, Clone)]
pub struct UnknownBehaviorFit {
    pub set: CalibrationSet,
    /// `None` when the training half was too small to estimate anything.
    pub behavior: Option<GaussianLinearPolicy>,
    pub clamped: bool,
}

/// Split the logged data first, estimate `π̂_b` on the training half,
/// rejection-sample both halves with `π_e/π̂_b`, train on the accepted
/// training half and score the accepted calibration half.
pub fn prepare_unknown(
    d: &LoggedDataset,
    pe: &dyn StochasticPolicy,
    params: &PacParams,
    estimator: &BehaviorEstimator,
    qcfg: &QuantileTrainConfig,
    rng: &Rng,
) -> Result<UnknownBehaviorFit> {
    let (d1, d2) = split_dataset(d, params.gamma)?;
    let needs_data = matches!(estimator, BehaviorEstimator::Gaussian { .. });
    if needs_data && d1.len() < 2 {
        let mut set = CalibrationSet::build(&[], &[], qcfg, params, &mut rng.child(1))?;
        set.diagnostics.n_logged = d.len();
        return Ok(UnknownBehaviorFit {
            set,
            behavior: None,
            clamped: false,
        });
    }
    let (pbhat, clamped) = estimator.estimate(&d1, pe)?;
    let w = WeightFunction::for_policies(pe, &pbhat, &default_context_probe(d))?;
    let rs1 = rejection_sample(&d1, &w, &mut rng.child(0));
    let rs2 = rejection_sample(&d2, &w, &mut rng.child(2));
    let mut set =
        CalibrationSet::build(&rs1.samples, &rs2.samples, qcfg, params, &mut rng.child(1))?;
    set.diagnostics.n_logged = d.len();
    set.diagnostics.n_rs = rs1.accepted_count() + rs2.accepted_count();
    set.diagnostics.violations = rs1.violations + rs2.violations;
    set.diagnostics.bound = w.bound();
    Ok(UnknownBehaviorFit {
        set,
        behavior: Some(pbhat),
        clamped,
    })
}

/// PAC off-policy prediction with an estimated behavior policy.
pub fn pacopp_unknown(
    d: &LoggedDataset,
    pe: &dyn StochasticPolicy,
    params: &PacParams,
    estimator: &BehaviorEstimator,
    qcfg: &QuantileTrainConfig,
    rng: &Rng,
) -> Result<CalibratedPredictor> {
    Ok(prepare_unknown(d, pe, params, estimator, qcfg, rng)?
        .set
        .pac(*params))
}
