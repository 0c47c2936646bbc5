//! Dataset splitting and CSV ingestion.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::types::{ceil_with_slack, Context, LoggedDataset, LoggedSample};

/// Size of the calibration part, `⌈γ·n⌉`.
pub fn calibration_size(n: usize, gamma: f64) -> usize {
    ceil_with_slack(gamma * n as f64).min(n)
}

/// Split an ordered sequence into `(prefix, tail)` where the tail holds the
/// last `⌈γ·n⌉` items.
pub fn split_tail<T: Clone>(items: &[T], gamma: f64) -> (Vec<T>, Vec<T>) {
    let m = calibration_size(items.len(), gamma);
    let cut = items.len() - m;
    (items[..cut].to_vec(), items[cut..].to_vec())
}

/// Split into `(train, cal)`; `cal` is the last `⌈γ·|d|⌉` samples.
pub fn split_dataset(d: &LoggedDataset, gamma: f64) -> Result<(LoggedDataset, LoggedDataset)> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("gamma must lie in (0,1), got {gamma}")));
    }
    let (train, cal) = split_tail(d.samples(), gamma);
    Ok((LoggedDataset::new(train), LoggedDataset::new(cal)))
}

/// Parse a logged dataset from CSV text with header `s,a,r` or
/// `s1,...,sd,a,r`.
pub fn read_csv<R: Read>(reader: R) -> Result<LoggedDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let dim = check_header(&names)?;
    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != dim + 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", dim + 2, record.len()),
            });
        }
        let mut values = Vec::with_capacity(dim + 2);
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse '{field}' as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value '{field}'"),
                });
            }
            values.push(v);
        }
        let reward = values.pop().unwrap_or_default();
        let action = values.pop().unwrap_or_default();
        samples.push(LoggedSample::new(Context::new(values)?, action, reward)?);
    }
    Ok(LoggedDataset::new(samples))
}

fn check_header(names: &[&str]) -> Result<usize> {
    let bad = || Error::Parse {
        line: 1,
        message: format!(
            "header must be 's,a,r' or 's1,..,sd,a,r', got '{}'",
            names.join(",")
        ),
    };
    if names.len() < 3 || names[names.len() - 2] != "a" || names[names.len() - 1] != "r" {
        return Err(bad());
    }
    let ctx = &names[..names.len() - 2];
    let ok = if ctx.len() == 1 {
        ctx[0] == "s" || ctx[0] == "s1"
    } else {
        ctx.iter()
            .enumerate()
            .all(|(i, n)| *n == format!("s{}", i + 1))
    };
    if !ok {
        return Err(bad());
    }
    Ok(ctx.len())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<LoggedDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file))
}

/// Write a dataset with shortest round-trip float formatting.
pub fn write_csv<W: Write>(d: &LoggedDataset, writer: W) -> Result<()> {
    let dim = d.samples().first().map(|s| s.context.dim()).unwrap_or(1);
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = if dim == 1 {
        vec!["s".into()]
    } else {
        (1..=dim).map(|i| format!("s{i}")).collect()
    };
    header.push("a".into());
    header.push("r".into());
    wtr.write_record(&header)?;
    for s in d.iter() {
        let mut row: Vec<String> = s.context.values().iter().map(|v| v.to_string()).collect();
        row.push(s.action.to_string());
        row.push(s.reward.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(d: &LoggedDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(d, std::io::BufWriter::new(file))
}
