use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::run::ResultRow;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "method,lambda,metric_value,exact_risk,seed,resample,r2_hat,sigma2_hat,tuned";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" | "json-lines" => Ok(OutputFormat::Jsonl),
            other => Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
}

/// 17 significant digits, enough to round-trip any f64.
fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_results<W: Write>(rows: &[ResultRow], format: OutputFormat, mut out: W) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for r in rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    r.method,
                    float(r.lambda),
                    float(r.metric_value),
                    float(r.exact_risk),
                    r.seed,
                    r.resample,
                    float(r.r2_hat),
                    float(r.sigma2_hat),
                    r.tuned
                )?;
            }
        }
        OutputFormat::Jsonl => {
            for r in rows {
                let line = serde_json::to_string(r).map_err(|e| Error::Config(e.to_string()))?;
                writeln!(out, "{line}")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes `rows` to `path`. Refuses an empty row set before touching the file.
pub fn emit_results(rows: &[ResultRow], format: OutputFormat, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("no result rows to write".into()));
    }
    write_results(rows, format, BufWriter::new(File::create(path)?))
}

/// Reads CSV produced by [`write_results`].
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(Error::Config(format!("unexpected CSV header {other:?}"))),
    }
    let bad = |line: usize, what: &str| Error::Config(format!("CSV line {line}: bad {what}"));
    lines
        .enumerate()
        .map(|(i, line)| {
            let lineno = i + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad(lineno, "field count"));
            }
            let num = |k: usize, name: &str| f[k].parse::<f64>().map_err(|_| bad(lineno, name));
            Ok(ResultRow {
                method: f[0].to_string(),
                lambda: num(1, "lambda")?,
                metric_value: num(2, "metric_value")?,
                exact_risk: num(3, "exact_risk")?,
                seed: f[4].parse().map_err(|_| bad(lineno, "seed"))?,
                resample: f[5].parse().map_err(|_| bad(lineno, "resample"))?,
                r2_hat: num(6, "r2_hat")?,
                sigma2_hat: num(7, "sigma2_hat")?,
                tuned: f[8].parse().map_err(|_| bad(lineno, "tuned"))?,
            })
        })
        .collect()
}
