//! Synthetic contextual-bandit environment with an analytic oracle.
//!
//! Contexts `S ~ N(0, 4)`, behavior actions `A | s ~ N(s/4, 4)`, target
//! actions `A | s ~ N(s/4, 1)`, and rewards drawn from the Gaussian mixture
//! `0.2·N(s+a, 1) + 0.8·N(s+a, 16)`. Every second parameter is a variance.
//!
//! Under the target policy the reward given `s` is again a mixture,
//! `Σ w_k N(s + μ_e(s), v_k + v_e)`, which yields exact conditional
//! quantiles and the oracle interval.

use crate::error::{invalid, Result};
use crate::policy::{GaussianLinearPolicy, StochasticPolicy};
use crate::rng::Rng;
use crate::stats::normal_cdf;
use crate::types::{Context, LoggedDataset, LoggedSample, PredictionInterval, TargetSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthEnvSpec {
    pub context_variance: f64,
    pub behavior: GaussianLinearPolicy,
    pub target: GaussianLinearPolicy,
    /// Reward components, each centred on `s + a`.
    pub mixture: Vec<MixtureComponent>,
}

impl Default for SynthEnvSpec {
    fn default() -> Self {
        Self {
            context_variance: 4.0,
            behavior: GaussianLinearPolicy::new(0.0, vec![0.25], 4.0).expect("valid"),
            target: GaussianLinearPolicy::new(0.0, vec![0.25], 1.0).expect("valid"),
            mixture: vec![
                MixtureComponent {
                    weight: 0.2,
                    variance: 1.0,
                },
                MixtureComponent {
                    weight: 0.8,
                    variance: 16.0,
                },
            ],
        }
    }
}

impl SynthEnvSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.context_variance > 0.0) {
            return Err(invalid("context variance must be positive"));
        }
        if self.mixture.is_empty() {
            return Err(invalid("reward mixture needs at least one component"));
        }
        if self
            .mixture
            .iter()
            .any(|c| !(c.variance > 0.0) || !(c.weight >= 0.0))
        {
            return Err(invalid(
                "mixture variances must be positive and weights non-negative",
            ));
        }
        let total: f64 = self.mixture.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!(
                "mixture weights must sum to 1, got {total}"
            )));
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        self.mixture.iter().map(|c| c.weight).collect()
    }

    pub fn sample_context(&self, rng: &mut Rng) -> Context {
        Context::scalar(rng.normal(0.0, self.context_variance))
    }

    pub fn sample_reward(&self, s: &Context, a: f64, rng: &mut Rng) -> f64 {
        let k = rng.categorical(&self.weights());
        rng.normal(s.first() + a, self.mixture[k].variance)
    }

    /// `n` i.i.d. triples under the behavior policy.
    pub fn sample_logged(&self, n: usize, rng: &mut Rng) -> LoggedDataset {
        (0..n)
            .map(|_| {
                let s = self.sample_context(rng);
                let a = self.behavior.sample(&s, rng);
                let r = self.sample_reward(&s, a, rng);
                LoggedSample {
                    context: s,
                    action: a,
                    reward: r,
                }
            })
            .collect()
    }

    /// `m` i.i.d. `(context, reward)` pairs under the target policy.
    pub fn sample_target(&self, m: usize, rng: &mut Rng) -> Vec<TargetSample> {
        (0..m)
            .map(|_| {
                let s = self.sample_context(rng);
                let a = self.target.sample(&s, rng);
                let r = self.sample_reward(&s, a, rng);
                TargetSample {
                    context: s,
                    reward: r,
                }
            })
            .collect()
    }

    /// `(weight, mean, variance)` of the target-conditional reward mixture.
    pub fn target_reward_components(&self, s: &Context) -> Vec<(f64, f64, f64)> {
        let mean = s.first() + self.target.mean(s);
        self.mixture
            .iter()
            .map(|c| (c.weight, mean, c.variance + self.target.variance()))
            .collect()
    }

    /// `P[R <= r | S = s]` under the target policy.
    pub fn target_cdf(&self, s: &Context, r: f64) -> f64 {
        self.target_reward_components(s)
            .iter()
            .map(|(w, m, v)| w * normal_cdf(r, *m, *v))
            .sum()
    }

    /// Conditional `q`-quantile of the target reward, by bisection to an
    /// absolute tolerance below `1e-8`.
    pub fn oracle_quantile(&self, s: &Context, q: f64) -> f64 {
        let centre = s.first() + self.target.mean(s);
        let (mut lo, mut hi) = (centre - 40.0, centre + 40.0);
        while self.target_cdf(s, lo) > q {
            lo -= 40.0;
        }
        while self.target_cdf(s, hi) < q {
            hi += 40.0;
        }
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if self.target_cdf(s, mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `[q_{eps_lo}(s), q_{eps_up}(s)]` under the target policy.
    pub fn oracle_interval(&self, s: &Context, eps_lo: f64, eps_up: f64) -> PredictionInterval {
        let lo = if eps_lo <= 0.0 {
            f64::NEG_INFINITY
        } else {
            self.oracle_quantile(s, eps_lo)
        };
        let hi = if eps_up >= 1.0 {
            f64::INFINITY
        } else {
            self.oracle_quantile(s, eps_up)
        };
        PredictionInterval { lo, hi }
    }

    /// Variance of the reward given `(s, a)`.
    pub fn reward_variance_given_action(&self) -> f64 {
        self.mixture.iter().map(|c| c.weight * c.variance).sum()
    }
}

// ── Bound constants ─────────────────────────────────────────────────────

/// Constants of the finite-sample upper and two-sided bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub bound_b: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub delta_eps: f64,
    /// `log δ / log(1−ε)`.
    pub m0: f64,
    /// `max(m0, log δ / (−2Δ_ε²))`.
    pub m1: f64,
    /// Constant of the upper bound `P[L <= ε] < 1 − δ + C/√n`.
    pub c_upper: f64,
    /// Constant of the band bound `P[ε − Δ_ε < L <= ε] > 1 − δ − C/√n`.
    pub c_band: f64,
}

impl BoundConstants {
    pub fn upper_bound(&self, n: usize) -> f64 {
        1.0 - self.delta + self.c_upper / (n as f64).sqrt()
    }

    pub fn band_lower_bound(&self, n: usize) -> f64 {
        1.0 - self.delta - self.c_band / (n as f64).sqrt()
    }
}

pub fn theorem_constants(
    bound_b: f64,
    gamma: f64,
    epsilon: f64,
    delta: f64,
    delta_eps: f64,
) -> Result<BoundConstants> {
    let open = |x: f64| x > 0.0 && x < 1.0;
    if !(bound_b >= 1.0) || !open(gamma) || !open(epsilon) || !open(delta) {
        return Err(invalid(
            "bound constants need B >= 1 and gamma, epsilon, delta in (0,1)",
        ));
    }
    if !(delta_eps > 0.0 && delta_eps < epsilon) {
        return Err(invalid(format!(
            "delta_eps must lie in (0, epsilon), got {delta_eps}"
        )));
    }
    let b = bound_b;
    let m0 = delta.ln() / (-epsilon).ln_1p();
    let m1 = m0.max(delta.ln() / (-2.0 * delta_eps * delta_eps));
    let c_upper = 7.0 * b / (gamma * epsilon * (1.0 - epsilon)).sqrt()
        + ((m0 / gamma).floor() * b).sqrt()
        + b / 2.0;
    let e1 = epsilon - delta_eps;
    let c_band = 7.0 * b / (gamma * e1 * (1.0 - e1)).sqrt()
        + ((-2.0 * delta.ln()).sqrt() + 1.0) * b / (2.0 * delta_eps * gamma.sqrt())
        + (1.0 - delta) * (((m1 / gamma).floor() * b).sqrt() + b / 2.0);
    Ok(BoundConstants {
        bound_b,
        gamma,
        epsilon,
        delta,
        delta_eps,
        m0,
        m1,
        c_upper,
        c_band,
    })
}

/// Lebesgue measure of the symmetric difference of two intervals.
pub fn symmetric_difference_measure(a: &PredictionInterval, b: &PredictionInterval) -> f64 {
    if a.is_empty() {
        return b.length();
    }
    if b.is_empty() {
        return a.length();
    }
    let overlap_lo = a.lo.max(b.lo);
    let overlap_hi = a.hi.min(b.hi);
    if overlap_lo > overlap_hi {
        return a.length() + b.length();
    }
    // Overlapping: the difference is the two end gaps.
    let gap = |x: f64, y: f64| if x == y { 0.0 } else { (x - y).abs() };
    gap(a.lo, b.lo) + gap(a.hi, b.hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_one_sample, mean, variance};

    #[test]
    fn default_spec_is_valid() {
        SynthEnvSpec::default().validate().unwrap();
        let mut bad = SynthEnvSpec::default();
        bad.mixture[0].weight = 0.3;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn logged_moments() {
        let env = SynthEnvSpec::default();
        assert!(env.sample_logged(0, &mut Rng::new(1)).is_empty());
        let d = env.sample_logged(100_000, &mut Rng::new(2));
        let s: Vec<f64> = d.iter().map(|x| x.context.first()).collect();
        let r: Vec<f64> = d.iter().map(|x| x.reward).collect();
        assert!(mean(&s).abs() < 0.02);
        assert!((variance(&s) - 4.0).abs() < 0.1);
        // Var R = Var(5S/4 + noise_a) + E[mixture var] = 6.25 + 4 + 13.
        let sd_r = (6.25 + 4.0 + 13.0f64).sqrt() / (100_000f64).sqrt();
        assert!(mean(&r).abs() < 3.0 * sd_r);
    }

    #[test]
    fn oracle_quantile_examples() {
        let env = SynthEnvSpec::default();
        let s0 = Context::scalar(0.0);
        assert!(env.oracle_quantile(&s0, 0.5).abs() < 1e-8);
        let q10 = env.oracle_quantile(&s0, 0.1);
        // Independent root of 0.2Φ(x/√2) + 0.8Φ(x/√17) = 0.1 by secant steps.
        let f = |x: f64| 0.2 * normal_cdf(x, 0.0, 2.0) + 0.8 * normal_cdf(x, 0.0, 17.0) - 0.1;
        let (mut x0, mut x1) = (-5.0, -4.5);
        for _ in 0..50 {
            let x2 = x1 - f(x1) * (x1 - x0) / (f(x1) - f(x0));
            x0 = x1;
            x1 = x2;
            if (x1 - x0).abs() < 1e-14 {
                break;
            }
        }
        assert!((q10 - x1).abs() < 1e-8, "{q10} vs {x1}");
        assert!((q10 + 4.75).abs() < 0.05, "{q10}");
        assert!((env.oracle_quantile(&s0, 0.9) + q10).abs() < 1e-8);
    }

    #[test]
    fn oracle_quantile_is_increasing_and_inverts_cdf() {
        let env = SynthEnvSpec::default();
        for s in [-4.0, 0.0, 4.0] {
            let ctx = Context::scalar(s);
            let qs: Vec<f64> = (1..=99)
                .map(|i| env.oracle_quantile(&ctx, i as f64 / 100.0))
                .collect();
            assert!(qs.windows(2).all(|w| w[0] < w[1]));
            for (i, q) in qs.iter().enumerate() {
                assert!((env.target_cdf(&ctx, *q) - (i + 1) as f64 / 100.0).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn target_conditional_law_matches_samples() {
        // Draw the target reward at fixed s = 0 and compare to the analytic mixture.
        let env = SynthEnvSpec::default();
        let s = Context::scalar(0.0);
        let mut rng = Rng::new(17);
        let draws: Vec<f64> = (0..20_000)
            .map(|_| {
                let a = env.target.sample(&s, &mut rng);
                env.sample_reward(&s, a, &mut rng)
            })
            .collect();
        assert!(ks_one_sample(&draws, |r| env.target_cdf(&s, r)).p_value > 0.01);

        let s4 = Context::scalar(4.0);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| {
                let a = env.target.sample(&s4, &mut rng);
                env.sample_reward(&s4, a, &mut rng)
            })
            .collect();
        let se = ((1.0 + 0.2 * 1.0 + 0.8 * 16.0) / 100_000f64).sqrt();
        assert!((mean(&draws) - 5.0).abs() < 3.0 * se);
    }

    #[test]
    fn oracle_interval_coverage() {
        let env = SynthEnvSpec::default();
        let test = env.sample_target(100_000, &mut Rng::new(23));
        assert!(env.sample_target(0, &mut Rng::new(1)).is_empty());
        let covered = test
            .iter()
            .filter(|t| env.oracle_interval(&t.context, 0.1, 0.9).contains(t.reward))
            .count() as f64
            / test.len() as f64;
        assert!((covered - 0.8).abs() < 0.012, "{covered}");
    }

    #[test]
    fn bound_constant_examples() {
        let c = theorem_constants(2.0, 0.5, 0.2, 0.1, 0.05).unwrap();
        // Independent recomputation.
        let m0 = 0.1f64.ln() / 0.8f64.ln();
        assert!((c.m0 - m0).abs() < 1e-12 && (c.m0 - 10.32).abs() < 0.01);
        let c2 = 14.0 / (0.5f64 * 0.2 * 0.8).sqrt() + (20.0f64 * 2.0).sqrt() + 1.0;
        assert!((c.c_upper - c2).abs() < 1e-12);
        assert!((c.c_upper - 56.8).abs() < 0.05);

        let c1 = theorem_constants(1.0, 0.3, 0.1, 0.05, 0.02).unwrap();
        let expect = 7.0 / (0.3f64 * 0.1 * 0.9).sqrt() + (c1.m0 / 0.3).floor().sqrt() + 0.5;
        assert!((c1.c_upper - expect).abs() < 1e-12);

        assert!(theorem_constants(2.0, 0.5, 0.2, 0.1, 0.2).is_err());
        assert!(c.m1 > c.m0 && c.c_band > 0.0);
    }

    #[test]
    fn symmetric_difference_examples() {
        let iv = |a, b| PredictionInterval { lo: a, hi: b };
        assert_eq!(
            symmetric_difference_measure(&iv(0.0, 1.0), &iv(0.0, 1.0)),
            0.0
        );
        assert_eq!(
            symmetric_difference_measure(&iv(0.0, 1.0), &iv(0.0, 2.0)),
            1.0
        );
        assert_eq!(
            symmetric_difference_measure(&iv(0.0, 1.0), &PredictionInterval::WHOLE_LINE),
            f64::INFINITY
        );
        assert_eq!(
            symmetric_difference_measure(
                &PredictionInterval::WHOLE_LINE,
                &PredictionInterval::WHOLE_LINE
            ),
            0.0
        );
        assert_eq!(
            symmetric_difference_measure(&iv(0.0, 1.0), &iv(2.0, 4.0)),
            3.0
        );
        assert_eq!(
            symmetric_difference_measure(&iv(0.0, 1.0), &PredictionInterval::EMPTY),
            1.0
        );
    }
}
