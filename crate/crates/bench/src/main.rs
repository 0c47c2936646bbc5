use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand};
use pacopp::behavior::{pacopp_unknown, BehaviorEstimator};
use pacopp::dataset::load_csv;
use pacopp::{pacopp_known, CalibratedPredictor, Context, GaussianLinearPolicy, Rng};
use pacopp_bench::experiments::{
    check_theorem_bounds, run_figure1, run_figure2, run_finite_class_check,
    run_theorem4_convergence, run_weight_error_check, simulate,
};
use pacopp_bench::output::{
    write_bounds, write_convergence, write_figure1, write_figure2, write_rows, write_unknown,
};
use pacopp_bench::BenchConfig;

#[derive(Parser, Debug)]
#[command(name = "pacopp", version)]
#[command(
    about = "PAC prediction intervals for target-policy rewards: experiments and calibration"
)]
struct Cli {
    /// Flat key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Number of seeded runs (overrides the config)
    #[arg(long, global = true)]
    runs: Option<usize>,

    /// Target-policy test points per run (overrides the config)
    #[arg(long, global = true)]
    tests: Option<usize>,

    /// Logged sample size (overrides the config)
    #[arg(long, global = true)]
    n: Option<usize>,

    /// Output directory for CSV files
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one trial of the known-behavior pipeline and print its report
    Simulate,
    /// Band frequencies across sample sizes
    Figure1,
    /// Coverage and length of COPP, COPP-RS and the PAC method
    Figure2,
    /// Empirical PAC frequencies against the finite-sample bounds
    Bounds,
    /// Distance to the oracle interval across sample sizes
    Theorem4,
    /// Checks with an estimated behavior policy (weight error, finite class)
    Unknown,
    /// Calibrate a predictor from logged data
    Calibrate {
        /// CSV with header s,a,r (or s1,..,sd,a,r)
        #[arg(long)]
        data: PathBuf,
        /// Target policy, e.g. "mean=0,0.25;var=1"
        #[arg(long)]
        pe: String,
        /// Behavior policy; estimated from the data when omitted
        #[arg(long)]
        pb: Option<String>,
        /// Where to write the predictor (stdout when omitted)
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Print the interval of a saved predictor at a context
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Context value(s), comma separated
        #[arg(long, allow_hyphen_values = true)]
        s: String,
    },
}

fn load_config(cli: &Cli) -> Result<BenchConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            BenchConfig::load(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => BenchConfig::default(),
    };
    if let Some(runs) = cli.runs {
        cfg.runs = runs;
    }
    if let Some(tests) = cli.tests {
        cfg.tests = tests;
        cfg.copp_tests = cfg.copp_tests.min(tests);
    }
    if let Some(n) = cli.n {
        cfg.n = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn parse_policy(text: &str) -> Result<GaussianLinearPolicy> {
    text.parse()
        .with_context(|| format!("invalid policy '{text}'"))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Simulate => {
            let report = simulate(&cfg, cli.seed)?;
            write_rows(&[report], std::io::stdout())?;
        }
        Command::Figure1 => {
            prepare_out(&cli.out)?;
            let result = run_figure1(&cfg, cli.seed)?;
            for row in &result.rows {
                println!(
                    "n={:<6} delta_eps={:<5} band_freq={:.4} (stderr {:.4})",
                    row.n, row.delta_eps, row.band_freq, row.stderr
                );
            }
            report_written(&write_figure1(&result, &cli.out)?);
        }
        Command::Figure2 => {
            prepare_out(&cli.out)?;
            let result = run_figure2(&cfg, cli.seed)?;
            for s in &result.summary {
                let delta = s.delta.map(|d| d.to_string()).unwrap_or_default();
                println!(
                    "{:<8} delta={:<5} mean_coverage={:.4} covered_freq={:.3} mean_length={:.3}",
                    s.method, delta, s.mean_coverage, s.covered_freq, s.mean_length
                );
            }
            let (ok, runs) = result.threshold_monotone_runs();
            println!("threshold monotone in delta: {ok}/{runs} runs");
            report_written(&write_figure2(&result, &cli.out)?);
        }
        Command::Bounds => {
            prepare_out(&cli.out)?;
            let report = check_theorem_bounds(&cfg, cli.seed)?;
            println!(
                "B={} C_upper={:.3} C_band={:.3}",
                report.constants.bound_b, report.constants.c_upper, report.constants.c_band
            );
            for r in &report.rows {
                println!(
                    "n={:<6} freq={:.4} bounds=[{:.4}, {:.4}] vacuous={} pass={}",
                    r.n, r.freq, r.lower, r.upper, r.vacuous, r.pass
                );
            }
            report_written(&write_bounds(&report, &cli.out)?);
        }
        Command::Theorem4 => {
            prepare_out(&cli.out)?;
            let report = run_theorem4_convergence(&cfg, cli.seed)?;
            for r in &report.rows {
                println!(
                    "n={:<6} median={:.4} trivial_runs={}",
                    r.n, r.median, r.trivial_runs
                );
            }
            println!("strictly decreasing: {}", report.decreasing);
            report_written(&write_convergence(&report, &cli.out)?);
        }
        Command::Unknown => {
            prepare_out(&cli.out)?;
            let fitted = run_weight_error_check(&cfg, cli.seed)?;
            let class = run_finite_class_check(&cfg, cli.seed)?;
            for r in [&fitted.row, &class.row] {
                println!(
                    "{:<13} level={:.4} freq={:.4} lower={:.4} pass={}",
                    r.check, r.level, r.freq, r.lower, r.pass
                );
            }
            let trials: Vec<_> = fitted.trials.iter().chain(&class.trials).cloned().collect();
            report_written(&write_unknown(&[fitted.row, class.row], &trials, &cli.out)?);
        }
        Command::Calibrate {
            data,
            pe,
            pb,
            model,
        } => {
            let d = load_csv(data).with_context(|| format!("reading {}", data.display()))?;
            let pe = parse_policy(pe)?;
            let params = cfg.params()?;
            let qcfg = cfg.quantile()?;
            let rng = Rng::new(cli.seed);
            let predictor = match pb {
                Some(pb) => pacopp_known(&d, &parse_policy(pb)?, &pe, &params, &qcfg, &rng)?,
                None => {
                    let estimator = BehaviorEstimator::Gaussian {
                        margin: cfg.variance_margin,
                    };
                    pacopp_unknown(&d, &pe, &params, &estimator, &qcfg, &rng)?
                }
            };
            let text = predictor.to_text();
            match model {
                Some(path) => {
                    std::fs::write(path, text)
                        .with_context(|| format!("writing {}", path.display()))?;
                    eprintln!(
                        "threshold {} from {} calibration scores (k = {})",
                        predictor.threshold, predictor.diagnostics.m, predictor.diagnostics.k
                    );
                }
                None => print!("{text}"),
            }
        }
        Command::Predict { model, s } => {
            let text = std::fs::read_to_string(model)
                .with_context(|| format!("reading {}", model.display()))?;
            let predictor = CalibratedPredictor::from_text(&text)?;
            let values = s
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .with_context(|| format!("invalid context '{s}'"))?;
            if values.is_empty() {
                bail!("empty context");
            }
            println!("{}", predictor.predict(&Context::new(values)?));
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
