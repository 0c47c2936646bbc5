//! Comparison methods: weighted conformal prediction with estimated
//! density-ratio weights (COPP) and rejection sampling followed by a plain
//! split-CP threshold (COPP-RS).

use crate::calibrate::{interval_for, nonconformity, split_cp_threshold, ScoreList};
use crate::error::{invalid, Error, Result};
use crate::policy::StochasticPolicy;
use crate::quantile::QuantilePairModel;
use crate::rng::Rng;
use crate::stats::{fit_affine_gaussian, normal_pdf};
use crate::types::{Context, LoggedDataset, PredictionInterval, CEIL_SLACK};

/// Smallest standard deviation a fitted reward model may report.
pub const SIGMA_FLOOR: f64 = 1e-3;

// ── Reward model ────────────────────────────────────────────────────────

/// `R | s, a ~ N(intercept + context_slopes·s + action_slope·a, sigma²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModelGaussian {
    pub intercept: f64,
    pub context_slopes: Vec<f64>,
    pub action_slope: f64,
    pub sigma: f64,
}

impl RewardModelGaussian {
    pub fn mean(&self, s: &Context, a: f64) -> f64 {
        self.intercept
            + self.action_slope * a
            + self
                .context_slopes
                .iter()
                .zip(s.values())
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    pub fn density(&self, s: &Context, a: f64, r: f64) -> f64 {
        normal_pdf(r, self.mean(s, a), self.sigma * self.sigma)
    }
}

/// Fit an affine-mean, constant-variance Gaussian reward model by maximum
/// likelihood. The fit is deliberately misspecified when rewards are
/// mixtures; it is what the weighted-CP baseline uses.
pub fn fit_reward_model(train: &LoggedDataset) -> Result<RewardModelGaussian> {
    if train.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: train.len(),
        });
    }
    let features: Vec<Vec<f64>> = train
        .iter()
        .map(|x| {
            let mut row = x.context.values().to_vec();
            row.push(x.action);
            row
        })
        .collect();
    let targets: Vec<f64> = train.iter().map(|x| x.reward).collect();
    let fit = fit_affine_gaussian(&features, &targets, 20_000);
    let mut slopes = fit.slopes;
    let action_slope = slopes.pop().unwrap_or_default();
    Ok(RewardModelGaussian {
        intercept: fit.intercept,
        context_slopes: slopes,
        action_slope,
        sigma: fit.variance.sqrt().max(SIGMA_FLOOR),
    })
}

// ── Weights ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoppConfig {
    /// Monte Carlo action draws per policy.
    pub mc_samples: usize,
    /// Number of candidate reward values.
    pub grid_points: usize,
    /// Extension of the empirical reward range on each side, as a fraction
    /// of its width.
    pub grid_margin: f64,
}

impl Default for CoppConfig {
    fn default() -> Self {
        Self {
            mc_samples: 100,
            grid_points: 400,
            grid_margin: 0.25,
        }
    }
}

impl CoppConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_samples < 1 {
            return Err(invalid("COPP needs at least one Monte Carlo sample"));
        }
        if self.grid_points < 2 {
            return Err(invalid("COPP reward grid needs at least two points"));
        }
        if !(self.grid_margin >= 0.0) || !self.grid_margin.is_finite() {
            return Err(invalid(
                "COPP grid margin must be a finite non-negative number",
            ));
        }
        Ok(())
    }
}

/// `Σ P̂(r|s,a_i^e) / Σ P̂(r|s,a_i)` for given action draws; `None` when
/// the denominator is zero.
pub fn copp_weight_from_actions(
    rm: &RewardModelGaussian,
    s: &Context,
    r: f64,
    target_actions: &[f64],
    behavior_actions: &[f64],
) -> Option<f64> {
    let target: Vec<f64> = target_actions.iter().map(|a| rm.mean(s, *a)).collect();
    let behavior: Vec<f64> = behavior_actions.iter().map(|a| rm.mean(s, *a)).collect();
    weight_from_means(&target, &behavior, rm.sigma, r)
}

/// Both sums share the Gaussian normalising constant, so only the
/// exponentials are summed.
fn weight_from_means(
    target_means: &[f64],
    behavior_means: &[f64],
    sigma: f64,
    r: f64,
) -> Option<f64> {
    let scale = -0.5 / (sigma * sigma);
    let kernel = |m: &f64| (scale * (r - m) * (r - m)).exp();
    let num: f64 = target_means.iter().map(kernel).sum();
    let den: f64 = behavior_means.iter().map(kernel).sum();
    (den > 0.0).then(|| num / den)
}

fn draw_actions(policy: &dyn StochasticPolicy, s: &Context, h: usize, rng: &mut Rng) -> Vec<f64> {
    (0..h).map(|_| policy.sample(s, rng)).collect()
}

/// Monte Carlo estimate of the reward-space density ratio `ŵ(s, r)` with
/// `h` target draws followed by `h` behavior draws. A zero denominator
/// yields weight 0.
pub fn copp_weight(
    rm: &RewardModelGaussian,
    pbhat: &dyn StochasticPolicy,
    pe: &dyn StochasticPolicy,
    s: &Context,
    r: f64,
    h: usize,
    rng: &mut Rng,
) -> f64 {
    let target = draw_actions(pe, s, h.max(1), rng);
    let behavior = draw_actions(pbhat, s, h.max(1), rng);
    copp_weight_from_actions(rm, s, r, &target, &behavior).unwrap_or(0.0)
}

/// Normalised weights `p_i = w_i / (Σ w_j + w_test)` for the calibration
/// points followed by the test point's mass.
pub fn normalized_weights(calibration: &[f64], test: f64) -> Vec<f64> {
    let total = calibration.iter().sum::<f64>() + test;
    calibration
        .iter()
        .chain(std::iter::once(&test))
        .map(|w| if total > 0.0 { w / total } else { 0.0 })
        .collect()
}

// ── Weighted conformal prediction ───────────────────────────────────────

/// Result of one weighted-CP prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoppPrediction {
    /// Hull of the accepted grid values, or the empty sentinel.
    pub interval: PredictionInterval,
    /// Accepted grid values do not form one contiguous run.
    pub non_contiguous: bool,
    /// Grid evaluations whose weight denominator was zero.
    pub zero_denominators: usize,
}

/// Calibration scores sorted together with their weights.
#[derive(Debug, Clone)]
pub struct CoppCalibration {
    scores: Vec<f64>,
    /// `prefix[j]` = total weight of the `j` smallest scores.
    prefix: Vec<f64>,
    grid: Vec<f64>,
    /// Calibration points whose weight denominator was zero.
    pub zero_denominators: usize,
}

/// Evenly spaced candidate rewards over `[min, max]` extended by
/// `margin·(max − min)` on both sides.
pub fn reward_grid(rewards: &[f64], cfg: &CoppConfig) -> Vec<f64> {
    let lo = rewards.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return Vec::new();
    }
    let width = (hi - lo).max(1e-9);
    let (a, b) = (lo - cfg.grid_margin * width, hi + cfg.grid_margin * width);
    let steps = (cfg.grid_points - 1) as f64;
    (0..cfg.grid_points)
        .map(|i| a + (b - a) * i as f64 / steps)
        .collect()
}

impl CoppCalibration {
    /// Pair scores with externally supplied weights.
    pub fn from_weights(scores: &[f64], weights: &[f64], grid: Vec<f64>) -> Result<Self> {
        if scores.len() != weights.len() {
            return Err(invalid("scores and weights differ in length"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::NonFinite("COPP weight"));
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
        let mut prefix = Vec::with_capacity(order.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &i in &order {
            acc += weights[i];
            prefix.push(acc);
        }
        Ok(Self {
            scores: order.iter().map(|&i| scores[i]).collect(),
            prefix,
            grid,
            zero_denominators: 0,
        })
    }

    /// Score the calibration half and estimate each point's weight with
    /// fresh draws.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        cal: &LoggedDataset,
        model: &QuantilePairModel,
        rm: &RewardModelGaussian,
        pbhat: &dyn StochasticPolicy,
        pe: &dyn StochasticPolicy,
        grid_rewards: &[f64],
        cfg: &CoppConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut zero = 0;
        let mut scores = Vec::with_capacity(cal.len());
        let mut weights = Vec::with_capacity(cal.len());
        for x in cal.iter() {
            let target = draw_actions(pe, &x.context, cfg.mc_samples, rng);
            let behavior = draw_actions(pbhat, &x.context, cfg.mc_samples, rng);
            let w = copp_weight_from_actions(rm, &x.context, x.reward, &target, &behavior)
                .unwrap_or_else(|| {
                    zero += 1;
                    0.0
                });
            scores.push(nonconformity(model, &x.context, x.reward));
            weights.push(w);
        }
        let mut out = Self::from_weights(&scores, &weights, reward_grid(grid_rewards, cfg))?;
        out.zero_denominators = zero;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// `1 − ε` quantile of `Σ p_i δ_{τ_i} + p_test δ_{+inf}`.
    pub fn weighted_threshold(&self, epsilon: f64, test_weight: f64) -> f64 {
        let total = self.prefix[self.scores.len()] + test_weight;
        let target = (1.0 - epsilon) * total;
        let target = target - CEIL_SLACK * target.abs().max(1.0);
        // First j >= 1 whose prefix reaches the target.
        let j = self.prefix[1..].partition_point(|w| *w < target);
        self.scores.get(j).copied().unwrap_or(f64::INFINITY)
    }

    /// Accept grid value `r` iff its score is at most the weighted
    /// threshold under weight `weight_at(r)`.
    pub fn predict_with(
        &self,
        model: &QuantilePairModel,
        s: &Context,
        epsilon: f64,
        mut weight_at: impl FnMut(f64) -> Option<f64>,
    ) -> CoppPrediction {
        let mut zero = 0;
        if self.is_empty() {
            return CoppPrediction {
                interval: PredictionInterval::WHOLE_LINE,
                non_contiguous: false,
                zero_denominators: 0,
            };
        }
        // The threshold only grows with the test weight, so values already
        // accepted at weight zero need no weight evaluation.
        let floor = self.weighted_threshold(epsilon, 0.0);
        let accepted: Vec<bool> = self
            .grid
            .iter()
            .map(|&r| {
                let score = nonconformity(model, s, r);
                if score <= floor {
                    return true;
                }
                let w = weight_at(r).unwrap_or_else(|| {
                    zero += 1;
                    0.0
                });
                score <= self.weighted_threshold(epsilon, w)
            })
            .collect();
        let first = accepted.iter().position(|a| *a);
        let last = accepted.iter().rposition(|a| *a);
        let (interval, non_contiguous) = match (first, last) {
            (Some(i), Some(j)) => (
                PredictionInterval {
                    lo: self.grid[i],
                    hi: self.grid[j],
                },
                accepted[i..=j].iter().any(|a| !a),
            ),
            _ => (PredictionInterval::EMPTY, false),
        };
        CoppPrediction {
            interval,
            non_contiguous,
            zero_denominators: zero,
        }
    }

    /// Weighted-CP interval at `s`, with one set of Monte Carlo action draws
    /// shared by all grid values of this context.
    #[allow(clippy::too_many_arguments)]
    pub fn predict(
        &self,
        model: &QuantilePairModel,
        rm: &RewardModelGaussian,
        pbhat: &dyn StochasticPolicy,
        pe: &dyn StochasticPolicy,
        s: &Context,
        epsilon: f64,
        cfg: &CoppConfig,
        rng: &mut Rng,
    ) -> CoppPrediction {
        let target: Vec<f64> = draw_actions(pe, s, cfg.mc_samples, rng)
            .iter()
            .map(|a| rm.mean(s, *a))
            .collect();
        let behavior: Vec<f64> = draw_actions(pbhat, s, cfg.mc_samples, rng)
            .iter()
            .map(|a| rm.mean(s, *a))
            .collect();
        self.predict_with(model, s, epsilon, |r| {
            weight_from_means(&target, &behavior, rm.sigma, r)
        })
    }
}

/// One-shot weighted-CP prediction: calibrate on `cal` and predict at `s`.
/// An empty calibration set gives the whole line.
#[allow(clippy::too_many_arguments)]
pub fn copp_predict(
    cal: &LoggedDataset,
    model: &QuantilePairModel,
    rm: &RewardModelGaussian,
    pbhat: &dyn StochasticPolicy,
    pe: &dyn StochasticPolicy,
    s: &Context,
    epsilon: f64,
    cfg: &CoppConfig,
    rng: &mut Rng,
) -> Result<CoppPrediction> {
    let rewards: Vec<f64> = cal.iter().map(|x| x.reward).collect();
    let calibration = CoppCalibration::build(cal, model, rm, pbhat, pe, &rewards, cfg, rng)?;
    Ok(calibration.predict(model, rm, pbhat, pe, s, epsilon, cfg, rng))
}

// ── Rejection sampling + split CP ───────────────────────────────────────

/// Interval with the plain `⌈(1−ε)(M+1)⌉`-th smallest score as threshold.
pub fn copp_rs_predict(
    scores: &ScoreList,
    model: &QuantilePairModel,
    s: &Context,
    epsilon: f64,
) -> PredictionInterval {
    interval_for(model, s, split_cp_threshold(scores, 1.0 - epsilon))
}
