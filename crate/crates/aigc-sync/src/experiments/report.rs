//! Report rendering: a run becomes a CSV table (one row per sweep point and
//! estimator) or a pretty JSON document embedding the resolved configuration.
//! Rendering is pure string work, so identical runs give identical bytes.

use crate::error::{Error, Result};
use crate::experiments::runner::{ExperimentRun, PointRow};
use std::fmt;
use std::path::Path;

pub const CSV_HEADER: &str =
    "point,sweep,sweep_value,estimator,trials,mse_mc,se,bias,variance,mse_theory,crlb,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!(
                "unknown report format {other:?}; expected csv or json"
            ))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

fn opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Render the run as CSV. The first line pins the units, the seed, and the
/// configuration name; floats print in shortest round-trip form.
pub fn render_csv(run: &ExperimentRun) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# mse units: s^2; seed: {}; config: {}\n",
        run.config.seed, run.config.name
    ));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in &run.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.point,
            row.sweep,
            opt(row.sweep_value),
            row.estimator,
            row.trials,
            opt(row.mse_mc),
            opt(row.se),
            opt(row.bias),
            opt(row.variance),
            opt(row.mse_theory),
            opt(row.crlb),
            row.status,
        ));
    }
    out
}

/// Render the run as pretty JSON with the resolved configuration embedded.
pub fn render_json(run: &ExperimentRun) -> Result<String> {
    let mut text = serde_json::to_string_pretty(run)
        .map_err(|e| Error::Config(format!("report serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Write the rendered report to `out`, or to stdout when no path is given.
pub fn emit_report(run: &ExperimentRun, format: ReportFormat, out: Option<&Path>) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => render_csv(run),
        ReportFormat::Json => render_json(run)?,
    };
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Error::io(path.to_path_buf(), e))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_opt_f64(field: &str, name: &str, line_no: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Config(format!("line {line_no}: bad {name} value {field:?}")))
}

/// Parse rows back out of a CSV report. The detection matrix travels only in
/// JSON, so parsed rows carry none.
pub fn parse_csv(text: &str) -> Result<Vec<PointRow>> {
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !seen_header {
            if line != CSV_HEADER {
                return Err(Error::Config(format!(
                    "line {line_no}: unexpected header {line:?}"
                )));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(Error::Config(format!(
                "line {line_no}: expected 12 fields, found {}",
                fields.len()
            )));
        }
        rows.push(PointRow {
            point: fields[0]
                .parse()
                .map_err(|_| Error::Config(format!("line {line_no}: bad point index")))?,
            sweep: fields[1].to_string(),
            sweep_value: parse_opt_f64(fields[2], "sweep_value", line_no)?,
            estimator: fields[3].to_string(),
            trials: fields[4]
                .parse()
                .map_err(|_| Error::Config(format!("line {line_no}: bad trial count")))?,
            mse_mc: parse_opt_f64(fields[5], "mse_mc", line_no)?,
            se: parse_opt_f64(fields[6], "se", line_no)?,
            bias: parse_opt_f64(fields[7], "bias", line_no)?,
            variance: parse_opt_f64(fields[8], "variance", line_no)?,
            mse_theory: parse_opt_f64(fields[9], "mse_theory", line_no)?,
            crlb: parse_opt_f64(fields[10], "crlb", line_no)?,
            status: fields[11].to_string(),
            confusion_q: None,
        });
    }
    if !seen_header {
        return Err(Error::Config("report has no header line".to_string()));
    }
    Ok(rows)
}
