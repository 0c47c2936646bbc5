//! Command-line behavior: output formats, determinism, error exits and
//! aggregates that recompute exactly from the per-trial CSV.

use std::path::Path;
use std::process::{Command, Output};

use pacopp_bench::experiments::{Figure1Row, Figure2Summary};
use pacopp_bench::output::read_trials;

fn pacopp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pacopp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    csv::Reader::from_path(path)
        .unwrap()
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .unwrap()
}

#[test]
fn predict_with_infinite_threshold_prints_the_whole_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tiny.csv");
    std::fs::write(
        &data,
        "s,a,r\n0.5,0.1,1.0\n-1.0,0.3,-2.0\n2.0,-0.4,0.7\n0.1,0.2,3.1\n1.5,0.0,-0.3\n",
    )
    .unwrap();
    let model = dir.path().join("model.txt");
    let out = pacopp(&[
        "calibrate",
        "--data",
        data.to_str().unwrap(),
        "--pe",
        "mean=0,0.25;var=1",
        "--pb",
        "mean=0,0.25;var=4",
        "--model",
        model.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = pacopp(&["predict", "--model", model.to_str().unwrap(), "--s", "-0.3"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "(-inf, inf)");
}

#[test]
fn calibrate_then_predict_gives_a_bounded_interval() {
    let dir = tempfile::tempdir().unwrap();
    let env = pacopp::synthenv::SynthEnvSpec::default();
    let d = env.sample_logged(2000, &mut pacopp::Rng::new(3));
    let data = dir.path().join("logged.csv");
    pacopp::dataset::save_csv(&d, &data).unwrap();
    let model = dir.path().join("model.txt");
    let out = pacopp(&[
        "calibrate",
        "--data",
        data.to_str().unwrap(),
        "--pe",
        "mean=0,0.25;var=1",
        "--model",
        model.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = pacopp(&["predict", "--model", model.to_str().unwrap(), "--s", "1.0"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.trim().starts_with('[') && text.trim().ends_with(']'),
        "{text}"
    );
}

#[test]
fn figure2_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = pacopp(&[
            "figure2",
            "--runs",
            "50",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
    }
    let mut files: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    files.sort();
    assert!(files.len() >= 5);
    for f in files {
        assert_eq!(
            std::fs::read(a.join(&f)).unwrap(),
            std::fs::read(b.join(&f)).unwrap(),
            "{f:?} differs"
        );
    }
    let header = std::fs::read_to_string(a.join("figure2.csv")).unwrap();
    assert_eq!(
        header.lines().next().unwrap(),
        "method,delta,run,coverage,mean_length,trivial_flag"
    );

    // Aggregates are exact means of the per-trial values.
    let trials = read_trials(&a.join("figure2_trials.csv")).unwrap();
    let summary: Vec<Figure2Summary> = read_rows(&a.join("figure2_summary.csv"));
    for s in &summary {
        let cov: Vec<f64> = trials
            .iter()
            .filter(|t| t.method == s.method && t.delta == s.delta)
            .map(|t| t.coverage())
            .collect();
        let mean = cov.iter().sum::<f64>() / cov.len() as f64;
        let covered =
            cov.iter().filter(|c| **c >= 1.0 - 0.2 - 1e-12).count() as f64 / cov.len() as f64;
        assert_eq!(mean.to_bits(), s.mean_coverage.to_bits(), "{}", s.method);
        assert_eq!(covered.to_bits(), s.covered_freq.to_bits(), "{}", s.method);
    }
}

#[test]
fn figure1_frequencies_recompute_from_trials() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, "runs = 30\ntests = 500\nn_grid = [200, 400]\n").unwrap();
    let out_dir = dir.path().join("out");
    let res = pacopp(&[
        "figure1",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let trials = read_trials(&out_dir.join("figure1_trials.csv")).unwrap();
    let rows: Vec<Figure1Row> = read_rows(&out_dir.join("figure1.csv"));
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let at: Vec<_> = trials.iter().filter(|t| t.n == r.n).collect();
        let hits = at
            .iter()
            .filter(|t| t.miscoverage > 0.2 - r.delta_eps && t.miscoverage <= 0.2)
            .count();
        assert_eq!(
            (hits as f64 / at.len() as f64).to_bits(),
            r.band_freq.to_bits()
        );
    }
    assert!(out_dir.join("figure1_plot_delta_eps_0.05.csv").exists());
}

#[test]
fn simulate_prints_a_trial_report() {
    let out = pacopp(&["simulate", "--seed", "1", "--n", "2000"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let row: pacopp_bench::TrialReport = rdr.deserialize().next().unwrap().unwrap();
    assert!((0.0..=1.0).contains(&row.miscoverage));
    assert!(row.mean_length.is_finite());
    assert_eq!(row.n, 2000);
}

#[test]
fn bad_input_exits_nonzero() {
    assert!(!pacopp(&["simulate", "--no-such-flag"]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "epsilon = 1.5\n").unwrap();
    let out = pacopp(&["simulate", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    std::fs::write(&config, "unknown_key = 1\n").unwrap();
    assert!(!pacopp(&["simulate", "--config", config.to_str().unwrap()])
        .status
        .success());
    assert!(
        !pacopp(&["predict", "--model", "/nonexistent/model.txt", "--s", "0"])
            .status
            .success()
    );
}
