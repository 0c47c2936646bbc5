//! PAC calibration: the binomial cutoff `k(M, ε, δ)`, non-conformity
//! scores, the threshold `τ̃ = τ_(M−k)` and interval emission, plus the
//! split-CP comparator.

use num::{BigRational, One, Zero};

use crate::error::{Error, Result};
use crate::policy::StochasticPolicy;
use crate::quantile::{fit_quantile_pair, QuantilePairModel, QuantileTrainConfig};
use crate::rejection::{rejection_sample, RsDataset, WeightFunction};
use crate::rng::Rng;
use crate::types::{
    ceil_with_slack, Context, LoggedDataset, PacParams, PredictionInterval, TargetSample,
};

// ── Binomial cutoff ─────────────────────────────────────────────────────

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Exact `F_Bin(m, eps)(j) <= delta` using rational arithmetic.
fn cdf_at_most_exact(m: usize, eps: f64, j: usize, delta: f64) -> bool {
    let (Some(p), Some(d)) = (BigRational::from_float(eps), BigRational::from_float(delta)) else {
        return false;
    };
    let q = BigRational::one() - &p;
    let mut term = num::pow::pow(q.clone(), m);
    let mut cdf = BigRational::zero();
    for i in 0..=j {
        cdf += &term;
        if i < m {
            term = term * BigRational::from_integer((m - i).into()) * &p
                / (BigRational::from_integer((i + 1).into()) * &q);
        }
    }
    cdf <= d
}

/// Largest `k ∈ {-1, …, M-1}` with `F_Bin(M,ε)(k) <= δ`.
///
/// The CDF is accumulated from the pmf recursion in log space. When the
/// running value lands within `1e-9` (relative) of `δ` the comparison is
/// settled in exact rational arithmetic.
pub fn binomial_quantile_k(m: usize, epsilon: f64, delta: f64) -> i64 {
    if m == 0 {
        return -1;
    }
    let log_delta = delta.ln();
    let log_q = (-epsilon).ln_1p();
    let log_odds = epsilon.ln() - log_q;
    let mut log_pmf = m as f64 * log_q;
    let mut log_cdf = f64::NEG_INFINITY;
    for j in 0..m {
        log_cdf = log_add_exp(log_cdf, log_pmf);
        let exceeds = if (log_cdf - log_delta).abs() < 1e-9 {
            !cdf_at_most_exact(m, epsilon, j, delta)
        } else {
            log_cdf > log_delta
        };
        if exceeds {
            return j as i64 - 1;
        }
        log_pmf += ((m - j) as f64 / (j + 1) as f64).ln() + log_odds;
    }
    m as i64 - 1
}

// ── Scores ──────────────────────────────────────────────────────────────

/// `max(q_lo(s) - r, r - q_up(s))`; negative strictly inside the band.
pub fn nonconformity(model: &QuantilePairModel, s: &Context, r: f64) -> f64 {
    let (lo, up) = model.eval(s);
    (lo - r).max(r - up)
}

/// Calibration scores in original order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreList {
    scores: Vec<f64>,
}

impl ScoreList {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite("score"));
        }
        Ok(Self { scores })
    }

    pub fn from_model(model: &QuantilePairModel, cal: &[TargetSample]) -> Self {
        Self {
            scores: cal
                .iter()
                .map(|t| nonconformity(model, &t.context, t.reward))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    /// Ascending order, ties broken by original index.
    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.scores.clone();
        // `sort_by` is stable, so equal scores keep index order.
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    pub fn has_ties(&self) -> bool {
        self.sorted().windows(2).any(|w| w[0] == w[1])
    }

    /// The `rank`-th smallest (1-based) of the scores with `+inf` appended.
    fn order_statistic(&self, rank: usize) -> f64 {
        if rank > self.len() {
            f64::INFINITY
        } else {
            self.sorted()[rank - 1]
        }
    }
}

/// `τ̃ = τ_(M−k)` with `τ_(M+1) = +inf`, returned together with `k`.
pub fn pac_threshold_with_k(scores: &ScoreList, epsilon: f64, delta: f64) -> (f64, i64) {
    let m = scores.len();
    let k = binomial_quantile_k(m, epsilon, delta);
    let rank = (m as i64 - k) as usize;
    (scores.order_statistic(rank), k)
}

pub fn pac_threshold(scores: &ScoreList, epsilon: f64, delta: f64) -> f64 {
    pac_threshold_with_k(scores, epsilon, delta).0
}

/// Brute-force reference for [`pac_threshold`]: the smallest candidate
/// `τ ∈ {τ_i} ∪ {+inf}` such that at most `k` calibration points fall
/// outside `Ĉ_τ`, i.e. have score above `τ`.
pub fn pac_threshold_argmin_oracle(scores: &ScoreList, epsilon: f64, delta: f64) -> f64 {
    let k = binomial_quantile_k(scores.len(), epsilon, delta);
    let mut best = f64::INFINITY;
    for &tau in scores
        .as_slice()
        .iter()
        .chain(std::iter::once(&f64::INFINITY))
    {
        let outside = scores.as_slice().iter().filter(|&&s| s > tau).count() as i64;
        if outside <= k && tau < best {
            best = tau;
        }
    }
    best
}

/// The `⌈level·(M+1)⌉`-th smallest of `{τ_1, …, τ_M, +inf}`.
pub fn split_cp_threshold(scores: &ScoreList, level: f64) -> f64 {
    let m = scores.len();
    let rank = split_cp_rank(level, m);
    scores.order_statistic(rank)
}

pub(crate) fn split_cp_rank(level: f64, m: usize) -> usize {
    ceil_with_slack(level * (m + 1) as f64).max(1)
}

/// Split-CP level that buys `(ε, δ)`-PAC validity from `M` calibration
/// points: `1 − ε + √(−ln δ / 2M)`. Values above one mean split CP cannot
/// deliver the guarantee.
pub fn split_cp_pac_level(epsilon: f64, delta: f64, m: usize) -> f64 {
    1.0 - epsilon + (-delta.ln() / (2.0 * m as f64)).sqrt()
}

/// Smallest `M` for which [`split_cp_pac_level`] does not exceed one.
pub fn split_cp_min_calibration(epsilon: f64, delta: f64) -> usize {
    ceil_with_slack(-delta.ln() / (2.0 * epsilon * epsilon))
}

// ── Predictor ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CalibrationDiagnostics {
    /// Size of the logged data handed to the pipeline.
    pub n_logged: usize,
    /// Accepted by rejection sampling (summed over both halves when the
    /// behavior policy is estimated).
    pub n_rs: usize,
    pub n_train: usize,
    /// Calibration size `M`.
    pub m: usize,
    pub k: i64,
    pub violations: usize,
    pub ties: bool,
    /// Training set too small: quantiles replaced by the constant 0.
    pub degenerate: bool,
    pub bound: f64,
}

/// A fitted quantile pair with its calibrated threshold `τ̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedPredictor {
    pub model: QuantilePairModel,
    pub threshold: f64,
    pub params: PacParams,
    pub diagnostics: CalibrationDiagnostics,
}

impl CalibratedPredictor {
    /// `[q_lo(s) − τ̃, q_up(s) + τ̃]`, the whole line when `τ̃ = +inf`.
    pub fn predict(&self, s: &Context) -> PredictionInterval {
        interval_for(&self.model, s, self.threshold)
    }

    pub fn to_text(&self) -> String {
        let p = &self.params;
        let d = &self.diagnostics;
        format!(
            "pacopp-predictor v1\nthreshold {}\nparams {} {} {} {} {}\ndiagnostics {} {} {} {} {} {} {} {} {}\n{}",
            self.threshold,
            p.epsilon,
            p.delta,
            p.eps_lo,
            p.eps_up,
            p.gamma,
            d.n_logged,
            d.n_rs,
            d.n_train,
            d.m,
            d.k,
            d.violations,
            d.ties as u8,
            d.degenerate as u8,
            d.bound,
            self.model.to_text()
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i as u64 + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let parse_err = |line: u64, message: &str| Error::Parse {
            line,
            message: message.to_string(),
        };
        let mut field = |key: &str| -> Result<(u64, Vec<String>)> {
            let (no, text) = lines
                .next()
                .ok_or_else(|| parse_err(0, "truncated predictor file"))?;
            let mut toks = text.split_whitespace();
            if toks.next() != Some(key) {
                return Err(parse_err(no, &format!("expected '{key}'")));
            }
            Ok((no, toks.map(str::to_string).collect()))
        };
        let (no, header) = field("pacopp-predictor")?;
        if header != ["v1"] {
            return Err(parse_err(no, "unsupported predictor version"));
        }
        let nums = |no: u64, toks: &[String], n: usize| -> Result<Vec<f64>> {
            if toks.len() != n {
                return Err(parse_err(no, &format!("expected {n} values")));
            }
            toks.iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| parse_err(no, &format!("bad number '{t}'")))
                })
                .collect()
        };
        let (no, t) = field("threshold")?;
        let threshold = nums(no, &t, 1)?[0];
        let (no, t) = field("params")?;
        let p = nums(no, &t, 5)?;
        let params = PacParams::new(p[0], p[1], p[2], p[3], p[4])?;
        let (no, t) = field("diagnostics")?;
        let d = nums(no, &t, 9)?;
        let diagnostics = CalibrationDiagnostics {
            n_logged: d[0] as usize,
            n_rs: d[1] as usize,
            n_train: d[2] as usize,
            m: d[3] as usize,
            k: d[4] as i64,
            violations: d[5] as usize,
            ties: d[6] != 0.0,
            degenerate: d[7] != 0.0,
            bound: d[8],
        };
        let model = QuantilePairModel::from_lines(&mut lines)?;
        Ok(Self {
            model,
            threshold,
            params,
            diagnostics,
        })
    }
}

pub(crate) fn interval_for(model: &QuantilePairModel, s: &Context, tau: f64) -> PredictionInterval {
    if tau == f64::INFINITY {
        return PredictionInterval::WHOLE_LINE;
    }
    let (lo, up) = model.eval(s);
    let (lo, hi) = (lo - tau, up + tau);
    if lo > hi {
        PredictionInterval::EMPTY
    } else {
        PredictionInterval { lo, hi }
    }
}

/// A trained quantile pair with its calibration scores, before a threshold
/// is chosen. Lets several thresholds share one training run.
#[derive(Debug, Clone)]
pub struct CalibrationSet {
    pub model: QuantilePairModel,
    pub scores: ScoreList,
    pub diagnostics: CalibrationDiagnostics,
}

impl CalibrationSet {
    /// Train on `train` (constant-zero quantiles when it has fewer than two
    /// points) and score `cal`.
    pub fn build(
        train: &[TargetSample],
        cal: &[TargetSample],
        qcfg: &QuantileTrainConfig,
        params: &PacParams,
        rng: &mut Rng,
    ) -> Result<Self> {
        let degenerate = train.len() < 2;
        let model = if degenerate {
            QuantilePairModel::constant(0.0, 0.0, params.eps_lo, params.eps_up)
        } else {
            fit_quantile_pair(train, qcfg, params, rng)?
        };
        let scores = ScoreList::from_model(&model, cal);
        let diagnostics = CalibrationDiagnostics {
            n_train: train.len(),
            m: cal.len(),
            ties: scores.has_ties(),
            degenerate,
            ..Default::default()
        };
        Ok(Self {
            model,
            scores,
            diagnostics,
        })
    }

    /// PAC threshold for `params.epsilon`, `params.delta`.
    pub fn pac(&self, params: PacParams) -> CalibratedPredictor {
        let (threshold, k) = pac_threshold_with_k(&self.scores, params.epsilon, params.delta);
        CalibratedPredictor {
            model: self.model.clone(),
            threshold,
            params,
            diagnostics: CalibrationDiagnostics {
                k,
                ..self.diagnostics
            },
        }
    }

    /// Split-CP threshold at `level`.
    pub fn split_cp(&self, level: f64) -> f64 {
        split_cp_threshold(&self.scores, level)
    }

    pub fn interval(&self, s: &Context, tau: f64) -> PredictionInterval {
        interval_for(&self.model, s, tau)
    }
}

/// Probe contexts used for weight bounds: the logged contexts plus a
/// fixed grid on `[-10, 10]` in every coordinate direction.
pub fn default_context_probe(d: &LoggedDataset) -> Vec<Context> {
    let dim = d.samples().first().map(|s| s.context.dim()).unwrap_or(1);
    let mut probes: Vec<Context> = d.contexts().cloned().collect();
    for i in 0..=40 {
        let v = -10.0 + 0.5 * i as f64;
        for k in 0..dim {
            let mut values = vec![0.0; dim];
            values[k] = v;
            probes.push(Context::new(values).expect("finite grid"));
        }
    }
    probes
}

/// Split an accepted set into training prefix and calibration tail.
pub(crate) fn split_rs(rs: &RsDataset, gamma: f64) -> (Vec<TargetSample>, Vec<TargetSample>) {
    crate::dataset::split_tail(&rs.samples, gamma)
}

/// Rejection-sample, split, train and score: everything in the known-policy
/// pipeline except the final threshold.
pub fn prepare_known(
    d: &LoggedDataset,
    pb: &dyn StochasticPolicy,
    pe: &dyn StochasticPolicy,
    params: &PacParams,
    qcfg: &QuantileTrainConfig,
    rng: &Rng,
) -> Result<CalibrationSet> {
    let w = WeightFunction::for_policies(pe, pb, &default_context_probe(d))?;
    let rs = rejection_sample(d, &w, &mut rng.child(0));
    let (train, cal) = split_rs(&rs, params.gamma);
    let mut set = CalibrationSet::build(&train, &cal, qcfg, params, &mut rng.child(1))?;
    set.diagnostics.n_logged = d.len();
    set.diagnostics.n_rs = rs.accepted_count();
    set.diagnostics.violations = rs.violations;
    set.diagnostics.bound = rs.bound;
    Ok(set)
}

/// PAC off-policy prediction with a known behavior policy.
pub fn pacopp_known(
    d: &LoggedDataset,
    pb: &dyn StochasticPolicy,
    pe: &dyn StochasticPolicy,
    params: &PacParams,
    qcfg: &QuantileTrainConfig,
    rng: &Rng,
) -> Result<CalibratedPredictor> {
    Ok(prepare_known(d, pb, pe, params, qcfg, rng)?.pac(*params))
}
