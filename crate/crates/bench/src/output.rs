//! CSV tables and plot-data files.
//!
//! Table headers are fixed:
//! - `figure1.csv`: `n,delta_eps,runs,band_freq,stderr`
//! - `figure2.csv`: `method,delta,run,coverage,mean_length,trivial_flag`
//! - `bounds.csv`: `n,freq,lower,upper,vacuous,pass`
//!
//! Plot files carry `label,x,y,yerr` columns, one file per figure panel.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::experiments::{
    BoundsReport, ConvergenceReport, Figure1Result, Figure2Result, UnknownCheckRow,
};
use crate::trial::TrialReport;

/// Serialize `rows` as CSV with a header derived from the field names.
pub fn write_rows<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    write_rows(rows, File::create(path)?)
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialReport>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotPoint {
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub yerr: f64,
}

/// Every file written, in order.
pub type Written = Vec<PathBuf>;

fn save<T: Serialize>(rows: &[T], dir: &Path, name: &str, written: &mut Written) -> Result<()> {
    let path = dir.join(name);
    save_rows(rows, &path)?;
    written.push(path);
    Ok(())
}

pub fn write_figure1(result: &Figure1Result, dir: &Path) -> Result<Written> {
    let mut written = Vec::new();
    save(&result.rows, dir, "figure1.csv", &mut written)?;
    save(&result.trials, dir, "figure1_trials.csv", &mut written)?;
    let mut widths: Vec<f64> = result.rows.iter().map(|r| r.delta_eps).collect();
    widths.dedup();
    for w in widths {
        let points: Vec<PlotPoint> = result
            .rows
            .iter()
            .filter(|r| r.delta_eps == w)
            .map(|r| PlotPoint {
                label: format!("delta_eps={w}"),
                x: r.n as f64,
                y: r.band_freq,
                yerr: r.stderr,
            })
            .collect();
        save(
            &points,
            dir,
            &format!("figure1_plot_delta_eps_{w}.csv"),
            &mut written,
        )?;
    }
    Ok(written)
}

fn series_label(method: &str, delta: Option<f64>) -> String {
    match delta {
        Some(d) => format!("{method}(delta={d})"),
        None => method.to_string(),
    }
}

pub fn write_figure2(result: &Figure2Result, dir: &Path) -> Result<Written> {
    let mut written = Vec::new();
    save(&result.rows(), dir, "figure2.csv", &mut written)?;
    save(&result.summary, dir, "figure2_summary.csv", &mut written)?;
    save(&result.trials, dir, "figure2_trials.csv", &mut written)?;
    let coverage: Vec<PlotPoint> = result
        .summary
        .iter()
        .enumerate()
        .map(|(i, s)| PlotPoint {
            label: series_label(&s.method, s.delta),
            x: i as f64,
            y: s.mean_coverage,
            yerr: s.coverage_stderr,
        })
        .collect();
    save(&coverage, dir, "figure2_plot_coverage.csv", &mut written)?;
    let length: Vec<PlotPoint> = result
        .summary
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let lengths: Vec<f64> = result
                .trials
                .iter()
                .filter(|t| t.method == s.method && t.delta == s.delta)
                .map(|t| t.mean_length)
                .collect();
            let n = lengths.len() as f64;
            let var = lengths
                .iter()
                .map(|l| (l - s.mean_length).powi(2))
                .sum::<f64>()
                / (n - 1.0).max(1.0);
            PlotPoint {
                label: series_label(&s.method, s.delta),
                x: i as f64,
                y: s.mean_length,
                yerr: (var / n).sqrt(),
            }
        })
        .collect();
    save(&length, dir, "figure2_plot_length.csv", &mut written)?;
    Ok(written)
}

pub fn write_bounds(report: &BoundsReport, dir: &Path) -> Result<Written> {
    let mut written = Vec::new();
    save(&report.rows, dir, "bounds.csv", &mut written)?;
    save(&report.band_rows, dir, "bounds_band.csv", &mut written)?;
    Ok(written)
}

pub fn write_convergence(report: &ConvergenceReport, dir: &Path) -> Result<Written> {
    let mut written = Vec::new();
    save(&report.rows, dir, "theorem4.csv", &mut written)?;
    let points: Vec<PlotPoint> = report
        .rows
        .iter()
        .map(|r| PlotPoint {
            label: "median_measure".into(),
            x: r.n as f64,
            y: r.median,
            yerr: 0.0,
        })
        .collect();
    save(&points, dir, "theorem4_plot.csv", &mut written)?;
    Ok(written)
}

pub fn write_unknown(
    rows: &[UnknownCheckRow],
    trials: &[TrialReport],
    dir: &Path,
) -> Result<Written> {
    let mut written = Vec::new();
    save(rows, dir, "unknown.csv", &mut written)?;
    save(trials, dir, "unknown_trials.csv", &mut written)?;
    Ok(written)
}
