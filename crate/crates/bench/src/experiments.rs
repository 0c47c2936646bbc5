//! The experiments: band frequencies across sample sizes, the three-method
//! comparison, finite-sample bound checks, convergence to the oracle
//! interval and the estimated-behavior checks.
//!
//! Every run draws from `Rng::new(master_seed).child(stream).child(grid_index).child(run)`,
//! and within a run the data, pipeline, test set and baseline randomness
//! use fixed child indices. Results are collected in run order, so the
//! output does not depend on the thread pool.

use pacopp::baselines::{fit_reward_model, CoppCalibration};
use pacopp::behavior::{
    estimate_weight_error, prepare_unknown, BehaviorEstimator, FinitePolicyClass,
};
use pacopp::calibrate::{
    default_context_probe, prepare_known, CalibrationDiagnostics, CalibrationSet,
};
use pacopp::dataset::split_dataset;
use pacopp::rejection::gaussian_ratio_bound;
use pacopp::stats::median;
use pacopp::synthenv::{
    symmetric_difference_measure, theorem_constants, BoundConstants, SynthEnvSpec,
};
use pacopp::{Context, PacParams, Rng, TargetSample};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BehaviorMode, BenchConfig};
use crate::error::{BenchError, Result};
use crate::trial::{evaluate, Coverage, TrialReport};

// ── Streams ─────────────────────────────────────────────────────────────

const STREAM_FIGURE1: u64 = 1;
const STREAM_FIGURE2: u64 = 2;
const STREAM_CONVERGENCE: u64 = 4;
const STREAM_FITTED_BEHAVIOR: u64 = 5;
const STREAM_FINITE_CLASS: u64 = 6;

const DATA: u64 = 0;
const PIPELINE: u64 = 1;
const TEST: u64 = 2;
const COPP_TRAIN: u64 = 3;
const COPP_WEIGHTS: u64 = 4;
const WEIGHT_ERROR: u64 = 5;

fn run_rng(master_seed: u64, stream: u64, grid_index: usize, run: usize) -> Rng {
    Rng::new(master_seed)
        .child(stream)
        .child(grid_index as u64)
        .child(run as u64)
}

/// Monte Carlo standard error of a frequency.
pub fn frequency_stderr(p: f64, runs: usize) -> f64 {
    (p * (1.0 - p) / runs as f64).sqrt()
}

fn frequency(trials: &[TrialReport], hit: impl Fn(&TrialReport) -> bool) -> f64 {
    trials.iter().filter(|t| hit(t)).count() as f64 / trials.len() as f64
}

fn parallel_runs<T: Send>(
    runs: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..runs).into_par_iter().map(f).collect()
}

fn env() -> SynthEnvSpec {
    SynthEnvSpec::default()
}

fn known_trial(
    cfg: &BenchConfig,
    params: &PacParams,
    n: usize,
    rng: &Rng,
    master_seed: u64,
    run: usize,
) -> Result<TrialReport> {
    let env = env();
    let d = env.sample_logged(n, &mut rng.child(DATA));
    let set = prepare_known(
        &d,
        &env.behavior,
        &env.target,
        params,
        &cfg.quantile()?,
        &rng.child(PIPELINE),
    )?;
    let predictor = set.pac(*params);
    let test = env.sample_target(cfg.tests, &mut rng.child(TEST));
    let coverage = evaluate(|s| predictor.predict(s), &test)?;
    Ok(TrialReport::new(
        "PACOPP",
        run,
        master_seed,
        n,
        params.epsilon,
        Some(params.delta),
        coverage,
        predictor.threshold,
        &predictor.diagnostics,
    ))
}

// ── Band frequencies across n ───────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Row {
    pub n: usize,
    pub delta_eps: f64,
    pub runs: usize,
    pub band_freq: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct Figure1Result {
    pub trials: Vec<TrialReport>,
    pub rows: Vec<Figure1Row>,
}

/// `P̂[ε − Δ_ε < L̂ <= ε]` over the runs at sample size `n`.
pub fn band_frequency(trials: &[TrialReport], epsilon: f64, delta_eps: f64) -> f64 {
    frequency(trials, |t| {
        t.miscoverage > epsilon - delta_eps && t.miscoverage <= epsilon
    })
}

/// Known-behavior pipeline on every `n` of the grid; the same runs serve
/// every band width.
pub fn run_figure1(cfg: &BenchConfig, master_seed: u64) -> Result<Figure1Result> {
    cfg.validate()?;
    let params = cfg.params()?;
    let mut trials = Vec::new();
    let mut rows = Vec::new();
    for (gi, &n) in cfg.n_grid.iter().enumerate() {
        let at_n = parallel_runs(cfg.runs, |run| {
            known_trial(
                cfg,
                &params,
                n,
                &run_rng(master_seed, STREAM_FIGURE1, gi, run),
                master_seed,
                run,
            )
        })?;
        for &delta_eps in &cfg.delta_eps_grid {
            let band_freq = band_frequency(&at_n, params.epsilon, delta_eps);
            rows.push(Figure1Row {
                n,
                delta_eps,
                runs: cfg.runs,
                band_freq,
                stderr: frequency_stderr(band_freq, cfg.runs),
            });
        }
        trials.extend(at_n);
    }
    Ok(Figure1Result { trials, rows })
}

// ── Finite-sample bounds ────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub n: usize,
    /// `P̂[L̂ <= ε]`.
    pub freq: f64,
    pub lower: f64,
    pub upper: f64,
    pub vacuous: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub n: usize,
    pub delta_eps: f64,
    pub band_freq: f64,
    pub lower: f64,
    pub vacuous: bool,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub constants: BoundConstants,
    pub rows: Vec<BoundsRow>,
    pub band_rows: Vec<BandRow>,
}

/// Finite-sample bound constants for the synthetic environment with its exact weight bound.
pub fn environment_constants(cfg: &BenchConfig) -> Result<BoundConstants> {
    let env = env();
    let probe: Vec<Context> = (0..=40)
        .map(|i| Context::scalar(-10.0 + 0.5 * i as f64))
        .collect();
    let b = gaussian_ratio_bound(&env.target, &env.behavior, &probe)?;
    Ok(theorem_constants(
        b,
        cfg.gamma,
        cfg.epsilon,
        cfg.delta,
        cfg.band_delta_eps,
    )?)
}

/// Compare the empirical PAC frequency at each `n` with
/// `[1 − δ − C_band/√n − 3σ, 1 − δ + C_upper/√n + 3σ]`, and the band
/// frequency with its lower bound. Rows whose bounds say nothing are
/// flagged vacuous and pass.
pub fn bounds_from_trials(cfg: &BenchConfig, trials: &[TrialReport]) -> Result<BoundsReport> {
    let constants = environment_constants(cfg)?;
    let mut rows = Vec::new();
    let mut band_rows = Vec::new();
    for &n in &cfg.n_grid {
        let at_n: Vec<TrialReport> = trials.iter().filter(|t| t.n == n).cloned().collect();
        if at_n.is_empty() {
            continue;
        }
        let runs = at_n.len();
        let freq = frequency(&at_n, |t| t.miscoverage <= cfg.epsilon);
        let sigma = frequency_stderr(freq, runs);
        let lower = constants.band_lower_bound(n) - 3.0 * sigma;
        let upper = constants.upper_bound(n) + 3.0 * sigma;
        let vacuous = lower <= 0.0 && upper >= 1.0;
        rows.push(BoundsRow {
            n,
            freq,
            lower,
            upper,
            vacuous,
            pass: vacuous || (lower <= freq && freq <= upper),
        });

        let band_freq = band_frequency(&at_n, cfg.epsilon, cfg.band_delta_eps);
        let band_lower = constants.band_lower_bound(n) - 3.0 * frequency_stderr(band_freq, runs);
        let band_vacuous = band_lower <= 0.0;
        band_rows.push(BandRow {
            n,
            delta_eps: cfg.band_delta_eps,
            band_freq,
            lower: band_lower,
            vacuous: band_vacuous,
            pass: band_vacuous || band_freq > band_lower,
        });
    }
    Ok(BoundsReport {
        constants,
        rows,
        band_rows,
    })
}

pub fn check_theorem_bounds(cfg: &BenchConfig, master_seed: u64) -> Result<BoundsReport> {
    let fig = run_figure1(cfg, master_seed)?;
    bounds_from_trials(cfg, &fig.trials)
}

// ── Three-method comparison ─────────────────────────────────────────────

pub const METHOD_PAC: &str = "PACOPP";
pub const METHOD_COPP: &str = "COPP";
pub const METHOD_COPP_RS: &str = "COPP-RS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure2Row {
    pub method: String,
    pub delta: Option<f64>,
    pub run: usize,
    pub coverage: f64,
    pub mean_length: f64,
    pub trivial_flag: bool,
}

impl From<&TrialReport> for Figure2Row {
    fn from(t: &TrialReport) -> Self {
        Self {
            method: t.method.clone(),
            delta: t.delta,
            run: t.run,
            coverage: t.coverage(),
            mean_length: t.mean_length,
            trivial_flag: t.trivial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure2Summary {
    pub method: String,
    pub delta: Option<f64>,
    pub runs: usize,
    pub mean_coverage: f64,
    pub coverage_stderr: f64,
    pub median_coverage: f64,
    /// Fraction of runs whose coverage reached `1 − ε`.
    pub covered_freq: f64,
    pub mean_length: f64,
    pub median_length: f64,
}

#[derive(Debug, Clone)]
pub struct Figure2Result {
    pub trials: Vec<TrialReport>,
    pub summary: Vec<Figure2Summary>,
}

impl Figure2Result {
    pub fn rows(&self) -> Vec<Figure2Row> {
        self.trials.iter().map(Figure2Row::from).collect()
    }

    pub fn method(&self, method: &str, delta: Option<f64>) -> Vec<&TrialReport> {
        self.trials
            .iter()
            .filter(|t| t.method == method && t.delta == delta)
            .collect()
    }

    /// Runs in which the PAC thresholds are non-decreasing as δ shrinks,
    /// out of all runs.
    pub fn threshold_monotone_runs(&self) -> (usize, usize) {
        let runs = self.trials.iter().map(|t| t.run).max().map_or(0, |r| r + 1);
        let mut ok = 0;
        for run in 0..runs {
            let mut pac: Vec<&TrialReport> = self
                .trials
                .iter()
                .filter(|t| t.run == run && t.method == METHOD_PAC)
                .collect();
            pac.sort_by(|a, b| b.delta.unwrap_or(0.0).total_cmp(&a.delta.unwrap_or(0.0)));
            if pac.windows(2).all(|w| w[0].threshold <= w[1].threshold) {
                ok += 1;
            }
        }
        (ok, runs)
    }
}

fn summarise(
    method: &str,
    delta: Option<f64>,
    trials: &[&TrialReport],
    epsilon: f64,
) -> Figure2Summary {
    let cov: Vec<f64> = trials.iter().map(|t| t.coverage()).collect();
    let len: Vec<f64> = trials.iter().map(|t| t.mean_length).collect();
    let runs = trials.len();
    let mean = cov.iter().sum::<f64>() / runs as f64;
    let sd = (cov.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (runs.max(2) - 1) as f64)
        .sqrt();
    Figure2Summary {
        method: method.to_string(),
        delta,
        runs,
        mean_coverage: mean,
        coverage_stderr: sd / (runs as f64).sqrt(),
        median_coverage: median(&cov),
        covered_freq: cov.iter().filter(|c| **c >= 1.0 - epsilon - 1e-12).count() as f64
            / runs as f64,
        mean_length: len.iter().sum::<f64>() / runs as f64,
        median_length: median(&len),
    }
}

/// Calibration state shared by the PAC method (every δ) and COPP-RS.
fn rs_calibration(
    cfg: &BenchConfig,
    params: &PacParams,
    d: &pacopp::LoggedDataset,
    rng: &Rng,
) -> Result<CalibrationSet> {
    let env = env();
    let qcfg = cfg.quantile()?;
    Ok(match cfg.behavior {
        BehaviorMode::Known => prepare_known(d, &env.behavior, &env.target, params, &qcfg, rng)?,
        BehaviorMode::Estimated => {
            let estimator = BehaviorEstimator::Gaussian {
                margin: cfg.variance_margin,
            };
            prepare_unknown(d, &env.target, params, &estimator, &qcfg, rng)?.set
        }
    })
}

/// Weighted-CP baseline on one run: quantiles, reward model and behavior
/// estimate from the training half (no rejection sampling), weights
/// recomputed for every candidate reward.
fn copp_trial(
    cfg: &BenchConfig,
    params: &PacParams,
    d: &pacopp::LoggedDataset,
    test: &[TargetSample],
    rng: &Rng,
) -> Result<(Coverage, CalibrationDiagnostics)> {
    let env = env();
    let (d1, d2) = split_dataset(d, params.gamma)?;
    let mut diagnostics = CalibrationDiagnostics {
        n_logged: d.len(),
        n_train: d1.len(),
        m: d2.len(),
        ..Default::default()
    };
    if d1.len() < 2 || d2.is_empty() {
        diagnostics.degenerate = true;
        let coverage = evaluate(|_| pacopp::PredictionInterval::WHOLE_LINE, test)?;
        return Ok((coverage, diagnostics));
    }
    let train: Vec<TargetSample> = d1
        .iter()
        .map(|x| TargetSample {
            context: x.context.clone(),
            reward: x.reward,
        })
        .collect();
    let model = CalibrationSet::build(
        &train,
        &[],
        &cfg.quantile()?,
        params,
        &mut rng.child(COPP_TRAIN),
    )?
    .model;
    let rm = fit_reward_model(&d1)?;
    let pbhat = match cfg.behavior {
        BehaviorMode::Known => env.behavior.clone(),
        BehaviorMode::Estimated => {
            pacopp::behavior::fit_gaussian_policy(&d1, cfg.variance_margin, env.target.variance())?
                .policy
        }
    };
    let copp = cfg.copp()?;
    let rewards: Vec<f64> = d.iter().map(|x| x.reward).collect();
    let mut wrng = rng.child(COPP_WEIGHTS);
    let cal = CoppCalibration::build(
        &d2,
        &model,
        &rm,
        &pbhat,
        &env.target,
        &rewards,
        &copp,
        &mut wrng,
    )?;
    let mut zero = cal.zero_denominators;
    let mut missed = 0usize;
    let mut length = 0.0;
    for t in test {
        let p = cal.predict(
            &model,
            &rm,
            &pbhat,
            &env.target,
            &t.context,
            params.epsilon,
            &copp,
            &mut wrng,
        );
        zero += p.zero_denominators;
        if !p.interval.contains(t.reward) {
            missed += 1;
        }
        length += p.interval.length();
    }
    diagnostics.violations = zero;
    let n = test.len() as f64;
    Ok((
        Coverage {
            miscoverage: missed as f64 / n,
            mean_length: length / n,
            trivial: false,
        },
        diagnostics,
    ))
}

fn figure2_run(cfg: &BenchConfig, master_seed: u64, run: usize) -> Result<Vec<TrialReport>> {
    let env = env();
    let params = cfg.params()?;
    let rng = run_rng(master_seed, STREAM_FIGURE2, 0, run);
    let d = env.sample_logged(cfg.n, &mut rng.child(DATA));
    let test = env.sample_target(cfg.tests, &mut rng.child(TEST));
    let mut out = Vec::new();

    let set = rs_calibration(cfg, &params, &d, &rng.child(PIPELINE))?;
    for &delta in &cfg.figure2_deltas {
        let predictor = set.pac(params.with_delta(delta)?);
        let coverage = evaluate(|s| predictor.predict(s), &test)?;
        out.push(TrialReport::new(
            METHOD_PAC,
            run,
            master_seed,
            cfg.n,
            params.epsilon,
            Some(delta),
            coverage,
            predictor.threshold,
            &predictor.diagnostics,
        ));
    }

    let tau = set.split_cp(1.0 - params.epsilon);
    let coverage = evaluate(|s| set.interval(s, tau), &test)?;
    out.push(TrialReport::new(
        METHOD_COPP_RS,
        run,
        master_seed,
        cfg.n,
        params.epsilon,
        None,
        coverage,
        tau,
        &set.diagnostics,
    ));

    let copp_test = &test[..cfg.copp_tests.min(test.len())];
    let (coverage, diagnostics) = copp_trial(cfg, &params, &d, copp_test, &rng)?;
    out.push(TrialReport::new(
        METHOD_COPP,
        run,
        master_seed,
        cfg.n,
        params.epsilon,
        None,
        coverage,
        f64::NAN,
        &diagnostics,
    ));
    Ok(out)
}

/// COPP, COPP-RS and the PAC method at every δ of the grid, all on the same
/// logged data and test set per run.
pub fn run_figure2(cfg: &BenchConfig, master_seed: u64) -> Result<Figure2Result> {
    cfg.validate()?;
    let trials: Vec<TrialReport> =
        parallel_runs(cfg.runs, |run| figure2_run(cfg, master_seed, run))?
            .into_iter()
            .flatten()
            .collect();
    let mut summary = Vec::new();
    for &delta in &cfg.figure2_deltas {
        let t: Vec<&TrialReport> = trials
            .iter()
            .filter(|t| t.method == METHOD_PAC && t.delta == Some(delta))
            .collect();
        summary.push(summarise(METHOD_PAC, Some(delta), &t, cfg.epsilon));
    }
    for method in [METHOD_COPP_RS, METHOD_COPP] {
        let t: Vec<&TrialReport> = trials.iter().filter(|t| t.method == method).collect();
        summary.push(summarise(method, None, &t, cfg.epsilon));
    }
    Ok(Figure2Result { trials, summary })
}

// ── Convergence to the oracle interval ──────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    /// Median symmetric-difference measure over non-trivial runs and their
    /// test contexts.
    pub median: f64,
    pub runs: usize,
    /// Runs with an unbounded interval, excluded from the median.
    pub trivial_runs: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Medians strictly decrease along the grid.
    pub decreasing: bool,
}

pub fn run_theorem4_convergence(cfg: &BenchConfig, master_seed: u64) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let params = cfg.params()?;
    let env = env();
    let qcfg = cfg.quantile()?;
    let mut rows = Vec::new();
    for (gi, &n) in cfg.convergence_n_grid.iter().enumerate() {
        let per_run = parallel_runs(cfg.convergence_runs, |run| -> Result<Option<Vec<f64>>> {
            let rng = run_rng(master_seed, STREAM_CONVERGENCE, gi, run);
            let d = env.sample_logged(n, &mut rng.child(DATA));
            let predictor = prepare_known(
                &d,
                &env.behavior,
                &env.target,
                &params,
                &qcfg,
                &rng.child(PIPELINE),
            )?
            .pac(params);
            if predictor.threshold == f64::INFINITY {
                return Ok(None);
            }
            let mut trng = rng.child(TEST);
            Ok(Some(
                (0..cfg.convergence_contexts)
                    .map(|_| {
                        let s = env.sample_context(&mut trng);
                        let oracle = env.oracle_interval(&s, params.eps_lo, params.eps_up);
                        symmetric_difference_measure(&predictor.predict(&s), &oracle)
                    })
                    .collect(),
            ))
        })?;
        let trivial_runs = per_run.iter().filter(|r| r.is_none()).count();
        let measures: Vec<f64> = per_run.into_iter().flatten().flatten().collect();
        rows.push(ConvergenceRow {
            n,
            median: if measures.is_empty() {
                f64::INFINITY
            } else {
                median(&measures)
            },
            runs: cfg.convergence_runs,
            trivial_runs,
        });
    }
    let decreasing = rows.windows(2).all(|w| w[1].median < w[0].median);
    Ok(ConvergenceReport { rows, decreasing })
}

// ── Estimated behavior ──────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnknownCheckRow {
    pub check: String,
    pub n: usize,
    pub runs: usize,
    /// Miscoverage level tested (mean over runs when it varies per run).
    pub level: f64,
    pub freq: f64,
    pub lower: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct UnknownCheckResult {
    pub row: UnknownCheckRow,
    pub trials: Vec<TrialReport>,
}

/// Fitted Gaussian behavior policy: the fraction of runs with
/// `L̂ <= ε + Δ̂_w` must reach `1 − δ − 3σ`, with `Δ̂_w` the per-run
/// Monte Carlo weight error against the true behavior policy.
pub fn run_weight_error_check(cfg: &BenchConfig, master_seed: u64) -> Result<UnknownCheckResult> {
    cfg.validate()?;
    let params = cfg.params()?;
    let env = env();
    let qcfg = cfg.quantile()?;
    let estimator = BehaviorEstimator::Gaussian {
        margin: cfg.variance_margin,
    };
    let trials = parallel_runs(cfg.runs, |run| {
        let rng = run_rng(master_seed, STREAM_FITTED_BEHAVIOR, 0, run);
        let d = env.sample_logged(cfg.n, &mut rng.child(DATA));
        let fit = prepare_unknown(
            &d,
            &env.target,
            &params,
            &estimator,
            &qcfg,
            &rng.child(PIPELINE),
        )?;
        let predictor = fit.set.pac(params);
        let test = env.sample_target(cfg.tests, &mut rng.child(TEST));
        let coverage = evaluate(|s| predictor.predict(s), &test)?;
        let mut report = TrialReport::new(
            "PACOPP-estimated",
            run,
            master_seed,
            cfg.n,
            params.epsilon,
            Some(params.delta),
            coverage,
            predictor.threshold,
            &predictor.diagnostics,
        );
        let pbhat = fit.behavior.unwrap_or_else(|| env.behavior.clone());
        let err = estimate_weight_error(
            &pbhat,
            &env.behavior,
            &env.target,
            &|r: &mut Rng| env.sample_context(r),
            cfg.weight_error_mc,
            &mut rng.child(WEIGHT_ERROR),
        );
        report.delta_w = Some(err.delta_w_hat);
        Ok(report)
    })?;
    let freq = frequency(&trials, |t| {
        t.miscoverage <= t.epsilon + t.delta_w.unwrap_or(0.0)
    });
    let level = trials
        .iter()
        .map(|t| t.epsilon + t.delta_w.unwrap_or(0.0))
        .sum::<f64>()
        / trials.len() as f64;
    let lower = 1.0 - params.delta - 3.0 * frequency_stderr(1.0 - params.delta, trials.len());
    Ok(UnknownCheckResult {
        row: UnknownCheckRow {
            check: "weight-error".into(),
            n: cfg.n,
            runs: trials.len(),
            level,
            freq,
            lower,
            pass: freq >= lower,
        },
        trials,
    })
}

/// Inflated miscoverage level `ε + 2B√(2 log(|Π|/δ₀) / n₁)` for maximum
/// likelihood over a finite class of size `class_size` on `n1` samples.
pub fn class_inflated_level(
    epsilon: f64,
    class_bound: f64,
    class_size: usize,
    confidence: f64,
    n1: usize,
) -> f64 {
    epsilon + 2.0 * class_bound * (2.0 * (class_size as f64 / confidence).ln() / n1 as f64).sqrt()
}

/// Maximum likelihood over intercept-shifted copies of the true behavior
/// policy; the PAC frequency at the inflated level must reach
/// `(1 − δ₀)(1 − δ) − 3σ`.
pub fn run_finite_class_check(cfg: &BenchConfig, master_seed: u64) -> Result<UnknownCheckResult> {
    cfg.validate()?;
    let params = cfg.params()?;
    let env = env();
    let qcfg = cfg.quantile()?;
    let probe = default_context_probe(&pacopp::LoggedDataset::default());
    let class = FinitePolicyClass::shifted_gaussians(
        &env.behavior,
        &cfg.class_shifts,
        &env.target,
        &probe,
    )?;
    let n1 = cfg.n - pacopp::dataset::calibration_size(cfg.n, cfg.gamma);
    if n1 == 0 {
        return Err(BenchError::Config("the training half is empty".into()));
    }
    let level = class_inflated_level(
        cfg.epsilon,
        class.bound(),
        class.len(),
        cfg.class_confidence,
        n1,
    );
    let estimator = BehaviorEstimator::FiniteClass(class);
    let trials = parallel_runs(cfg.runs, |run| {
        let rng = run_rng(master_seed, STREAM_FINITE_CLASS, 0, run);
        let d = env.sample_logged(cfg.n, &mut rng.child(DATA));
        let fit = prepare_unknown(
            &d,
            &env.target,
            &params,
            &estimator,
            &qcfg,
            &rng.child(PIPELINE),
        )?;
        let predictor = fit.set.pac(params);
        let test = env.sample_target(cfg.tests, &mut rng.child(TEST));
        let coverage = evaluate(|s| predictor.predict(s), &test)?;
        Ok(TrialReport::new(
            "PACOPP-class",
            run,
            master_seed,
            cfg.n,
            params.epsilon,
            Some(params.delta),
            coverage,
            predictor.threshold,
            &predictor.diagnostics,
        ))
    })?;
    let freq = frequency(&trials, |t| t.miscoverage <= level);
    let target = (1.0 - cfg.class_confidence) * (1.0 - params.delta);
    let lower = target - 3.0 * frequency_stderr(target, trials.len());
    Ok(UnknownCheckResult {
        row: UnknownCheckRow {
            check: "finite-class".into(),
            n: cfg.n,
            runs: trials.len(),
            level,
            freq,
            lower,
            pass: freq >= lower,
        },
        trials,
    })
}

/// One run of the known-behavior pipeline at `cfg.n`.
pub fn simulate(cfg: &BenchConfig, master_seed: u64) -> Result<TrialReport> {
    cfg.validate()?;
    let params = cfg.params()?;
    known_trial(
        cfg,
        &params,
        cfg.n,
        &run_rng(master_seed, 0, 0, 0),
        master_seed,
        0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchConfig {
        BenchConfig {
            runs: 4,
            tests: 200,
            copp_tests: 20,
            n: 400,
            n_grid: vec![200, 400],
            convergence_n_grid: vec![200, 400],
            convergence_runs: 3,
            convergence_contexts: 10,
            weight_error_mc: 1000,
            ..Default::default()
        }
    }

    #[test]
    fn single_run_frequencies_are_binary() {
        let cfg = BenchConfig { runs: 1, ..small() };
        let fig = run_figure1(&cfg, 3).unwrap();
        assert!(fig
            .rows
            .iter()
            .all(|r| r.band_freq == 0.0 || r.band_freq == 1.0));
    }

    #[test]
    fn figure1_rows_recompute_from_trials() {
        let cfg = small();
        let fig = run_figure1(&cfg, 11).unwrap();
        assert_eq!(fig.trials.len(), cfg.runs * cfg.n_grid.len());
        for row in &fig.rows {
            let at_n: Vec<TrialReport> = fig
                .trials
                .iter()
                .filter(|t| t.n == row.n)
                .cloned()
                .collect();
            assert_eq!(
                row.band_freq,
                band_frequency(&at_n, cfg.epsilon, row.delta_eps)
            );
        }
    }

    #[test]
    fn figure2_has_every_method_and_monotone_thresholds() {
        let cfg = small();
        let fig = run_figure2(&cfg, 5).unwrap();
        assert_eq!(fig.trials.len(), cfg.runs * (cfg.figure2_deltas.len() + 2));
        assert_eq!(fig.threshold_monotone_runs(), (cfg.runs, cfg.runs));
        assert_eq!(fig.summary.len(), cfg.figure2_deltas.len() + 2);
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = small();
        let a = run_figure2(&cfg, 9).unwrap().trials;
        let b = run_figure2(&cfg, 9).unwrap().trials;
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn inflated_level_example() {
        let b = 2.0 * (1.0f64 / 6.0).exp();
        let level = class_inflated_level(0.2, b, 5, 0.1, 1000);
        let expect = 0.2 + 2.0 * b * (2.0 * 50f64.ln() / 1000.0).sqrt();
        assert!((level - expect).abs() < 1e-15);
    }

    #[test]
    fn environment_bound_is_two() {
        let c = environment_constants(&BenchConfig::default()).unwrap();
        assert_eq!(c.bound_b, 2.0);
    }

    #[test]
    fn convergence_and_unknown_checks_run() {
        let cfg = small();
        let r = run_theorem4_convergence(&cfg, 1).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(run_weight_error_check(&cfg, 1)
            .unwrap()
            .trials
            .iter()
            .all(|t| t.delta_w.is_some()));
        assert_eq!(
            run_finite_class_check(&cfg, 1).unwrap().trials.len(),
            cfg.runs
        );
    }
}
