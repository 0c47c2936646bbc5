//! Rejection sampling of logged data towards the target-policy joint law.
//!
//! Sample `i` is kept iff `V_i <= w(S_i, A_i) / B`, where `w = π_e / π_b`
//! and `B` bounds `w`. Given the number of accepted samples, the kept
//! `(context, reward)` pairs are i.i.d. under the target policy.

use crate::error::{Error, Result};
use crate::policy::{GaussianLinearPolicy, StochasticPolicy};
use crate::rng::Rng;
use crate::types::{Context, LoggedDataset, TargetSample};

/// Inflation applied to probe-based bounds whose value depends on the context.
pub const BOUND_SAFETY_FACTOR: f64 = 1.1;

/// Closed-form `sup_a π_e(a|s)/π_b(a|s)` for one context.
fn gaussian_ratio_sup(pe: &GaussianLinearPolicy, pb: &GaussianLinearPolicy, s: &Context) -> f64 {
    let (ve, vb) = (pe.variance(), pb.variance());
    let gap = pe.mean(s) - pb.mean(s);
    (vb / ve).sqrt() * (gap * gap / (2.0 * (vb - ve))).exp()
}

/// Upper bound `B` on `π_e/π_b` for two Gaussian-linear policies.
///
/// Uses the per-context supremum `√(v_b/v_e)·exp((μ_e−μ_b)²/(2(v_b−v_e)))`
/// maximised over `context_probe`. The result is exact when that supremum is
/// the same at every probe (in particular when the means coincide) and is
/// inflated by [`BOUND_SAFETY_FACTOR`] otherwise.
pub fn gaussian_ratio_bound(
    pe: &GaussianLinearPolicy,
    pb: &GaussianLinearPolicy,
    context_probe: &[Context],
) -> Result<f64> {
    if pe == pb {
        return Ok(1.0);
    }
    if pe.variance() >= pb.variance() {
        return Err(Error::WeightUnbounded {
            target: pe.variance(),
            behavior: pb.variance(),
        });
    }
    if context_probe.is_empty() {
        return Err(crate::error::invalid("context probe must not be empty"));
    }
    let gaps: Vec<f64> = context_probe
        .iter()
        .map(|s| (pe.mean(s) - pb.mean(s)).abs())
        .collect();
    let best = context_probe
        .iter()
        .map(|s| gaussian_ratio_sup(pe, pb, s))
        .fold(f64::NEG_INFINITY, f64::max);
    let constant = gaps.iter().all(|g| *g == gaps[0]);
    Ok(if constant {
        best
    } else {
        best * BOUND_SAFETY_FACTOR
    })
}

/// Probe-grid bound for arbitrary policies: the maximum ratio over
/// `contexts × actions`, inflated by [`BOUND_SAFETY_FACTOR`].
pub fn probe_ratio_bound(
    pe: &dyn StochasticPolicy,
    pb: &dyn StochasticPolicy,
    contexts: &[Context],
    actions: &[f64],
) -> f64 {
    let mut best: f64 = 0.0;
    for s in contexts {
        for &a in actions {
            best = best.max(ratio(pe.density(s, a), pb.density(s, a)));
        }
    }
    (best * BOUND_SAFETY_FACTOR).max(1.0)
}

fn ratio(pe: f64, pb: f64) -> f64 {
    if pb > 0.0 {
        pe / pb
    } else if pe > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// `w(s,a) = π_e(a|s)/π_b(a|s)` together with its bound `B`.
pub struct WeightFunction<'a> {
    target: &'a dyn StochasticPolicy,
    behavior: &'a dyn StochasticPolicy,
    bound: f64,
}

impl<'a> WeightFunction<'a> {
    pub fn new(
        target: &'a dyn StochasticPolicy,
        behavior: &'a dyn StochasticPolicy,
        bound: f64,
    ) -> Result<Self> {
        if !(bound >= 1.0) || !bound.is_finite() {
            return Err(crate::error::invalid(format!(
                "weight bound must be a finite value >= 1, got {bound}"
            )));
        }
        Ok(Self {
            target,
            behavior,
            bound,
        })
    }

    /// Build the weight with a bound computed from the policies: closed form
    /// for Gaussian pairs, a probe grid over actions otherwise.
    pub fn for_policies(
        target: &'a dyn StochasticPolicy,
        behavior: &'a dyn StochasticPolicy,
        context_probe: &[Context],
    ) -> Result<Self> {
        let bound = match (target.as_gaussian(), behavior.as_gaussian()) {
            (Some(pe), Some(pb)) => gaussian_ratio_bound(pe, pb, context_probe)?,
            _ => {
                let actions: Vec<f64> = (0..=2000).map(|i| -50.0 + 0.05 * i as f64).collect();
                probe_ratio_bound(target, behavior, context_probe, &actions)
            }
        };
        Self::new(target, behavior, bound)
    }

    pub fn eval(&self, context: &Context, action: f64) -> f64 {
        ratio(
            self.target.density(context, action),
            self.behavior.density(context, action),
        )
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }
}

/// Accepted `(context, reward)` pairs in original index order.
#[derive(Debug, Clone, Default)]
pub struct RsDataset {
    pub samples: Vec<TargetSample>,
    /// Original dataset index of each accepted sample (strictly increasing).
    pub indices: Vec<usize>,
    /// Number of samples whose `w/B` exceeded one and was clamped.
    pub violations: usize,
    /// The bound `B` used.
    pub bound: f64,
}

impl RsDataset {
    pub fn accepted_count(&self) -> usize {
        self.samples.len()
    }
}

/// Keep sample `i` iff `V_i <= w(S_i,A_i)/B`, drawing `V_i ~ U(0,1]` in index
/// order. Ratios above one are clamped and counted as violations.
pub fn rejection_sample(d: &LoggedDataset, w: &WeightFunction<'_>, rng: &mut Rng) -> RsDataset {
    let mut out = RsDataset {
        bound: w.bound(),
        ..Default::default()
    };
    for (i, sample) in d.iter().enumerate() {
        let v = rng.uniform_open_closed();
        let mut accept_prob = w.eval(&sample.context, sample.action) / w.bound();
        if accept_prob > 1.0 {
            out.violations += 1;
            accept_prob = 1.0;
        }
        if v <= accept_prob {
            out.samples.push(TargetSample {
                context: sample.context.clone(),
                reward: sample.reward,
            });
            out.indices.push(i);
        }
    }
    out
}
