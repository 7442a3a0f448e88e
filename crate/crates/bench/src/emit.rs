//! CSV and JSON result files.
//!
//! The CSV holds one row per method (per sparsity level in a sweep) with six
//! significant digits; the JSON mirrors it at full precision together with
//! the resolved config, so every row can be regenerated from the JSON alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method};
use crate::error::{BenchError, Result};
use crate::experiment::{TraceCheckSummary, TrialFailure};

pub const CSV_HEADER: &str = "method,p,q,s,lambda,kappa,sigma,trials,avg_cost,mse,support_match_pct,avg_sparsity,avg_iters,wall_time_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: Method,
    pub p: usize,
    pub q: usize,
    pub s: usize,
    pub lambda: f64,
    pub kappa: f64,
    pub sigma: f64,
    /// Trials averaged into this row.
    pub trials: u64,
    pub avg_cost: f64,
    pub mse: f64,
    pub support_match_pct: f64,
    pub avg_sparsity: f64,
    pub avg_iters: f64,
    pub wall_time_s: f64,
}

/// Per-image result of the MNIST experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub image: usize,
    pub method: Method,
    pub mse: f64,
    pub sparsity: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub rows: Vec<MetricsRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<ImageRow>,
    pub failures: Vec<TrialFailure>,
    pub trace_checks: Option<TraceCheckSummary>,
    /// False when any trial failed; the rows then average the remaining trials.
    pub complete: bool,
}

/// C `printf("%.6g")`.
pub fn fmt_g6(v: f64) -> String {
    fmt_g(v, 6)
}

pub fn fmt_g(v: f64, precision: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.into();
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let precision = precision.max(1);
    let sci = format!("{:.*e}", precision - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= precision as i32 {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (precision as i32 - 1 - exp) as usize;
        strip_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_line(row: &MetricsRow) -> String {
    [
        row.method.name().to_string(),
        row.p.to_string(),
        row.q.to_string(),
        row.s.to_string(),
        fmt_g6(row.lambda),
        fmt_g6(row.kappa),
        fmt_g6(row.sigma),
        row.trials.to_string(),
        fmt_g6(row.avg_cost),
        fmt_g6(row.mse),
        fmt_g6(row.support_match_pct),
        fmt_g6(row.avg_sparsity),
        fmt_g6(row.avg_iters),
        fmt_g6(row.wall_time_s),
    ]
    .join(",")
}

/// Header plus one line per row. An incomplete run ends with a `# incomplete`
/// marker line.
pub fn csv_string(rows: &[MetricsRow], failures: usize) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&csv_line(row));
        out.push('\n');
    }
    if failures > 0 {
        out.push_str(&format!("# incomplete: {failures} trial failures\n"));
    }
    out
}

pub fn emit_csv(rows: &[MetricsRow], failures: usize, path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(rows, failures)).map_err(|e| BenchError::io(path, e))
}

pub fn json_string(output: &ExperimentOutput) -> Result<String> {
    let mut s = serde_json::to_string_pretty(output)?;
    s.push('\n');
    Ok(s)
}

pub fn emit_json(output: &ExperimentOutput, path: &Path) -> Result<()> {
    std::fs::write(path, json_string(output)?).map_err(|e| BenchError::io(path, e))
}

pub fn image_csv_string(rows: &[ImageRow]) -> String {
    let mut out = String::from("image,method,mse,sparsity,iterations\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.image,
            r.method,
            fmt_g6(r.mse),
            r.sparsity,
            r.iterations
        ));
    }
    out
}
