//! Report files. JSON carries the full record set plus config and seed;
//! CSV carries only aggregates (one overall row, one row per tag value).

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::eval::{EvalReport, PassAtNReport};
use super::perturb::PerturbationReport;
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// Picks CSV for `.csv` paths, JSON otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

pub const EVAL_CSV_HEADER: [&str; 5] = ["scope", "key", "n", "hits", "accuracy"];

pub fn to_json<T: Serialize>(value: &T) -> Result<String, HarnessError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn csv_string(rows: Vec<Vec<String>>, header: &[&str]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Settings(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn eval_csv(report: &EvalReport) -> Result<String, HarnessError> {
    let a = &report.aggregates;
    let mut rows = Vec::new();
    if !report.records.is_empty() {
        rows.push(vec!["overall".into(), "all".into(), a.n.to_string(), a.hits.to_string(), format!("{:.6}", a.accuracy)]);
        for (key, t) in &a.per_tag {
            rows.push(vec!["tag".into(), key.clone(), t.n.to_string(), t.hits.to_string(), format!("{:.6}", t.accuracy)]);
        }
    }
    csv_string(rows, &EVAL_CSV_HEADER)
}

pub fn pass_at_n_csv(report: &PassAtNReport) -> Result<String, HarnessError> {
    let rows = report
        .table
        .iter()
        .map(|r| vec![r.n.to_string(), r.passed.to_string(), format!("{:.6}", r.rate)])
        .collect();
    csv_string(rows, &["n", "passed", "rate"])
}

pub fn perturbation_csv(report: &PerturbationReport) -> Result<String, HarnessError> {
    let fmt = |d: Option<f64>| d.map(|v| format!("{v:.3}")).unwrap_or_default();
    let mut rows = vec![vec!["overall".into(), "all".into(), report.n_paired.to_string(), fmt(report.mean_shift)]];
    for (axis, bins) in [("height", &report.by_height), ("area", &report.by_area)] {
        for b in bins {
            rows.push(vec![axis.into(), b.label.clone(), b.count.to_string(), fmt(b.mean_distance)]);
        }
    }
    csv_string(rows, &["axis", "bin", "count", "mean_distance"])
}

fn write(path: &Path, contents: String) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub fn emit_report(report: &EvalReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let contents = match format {
        ReportFormat::Json => to_json(report)?,
        ReportFormat::Csv => eval_csv(report)?,
    };
    write(path.as_ref(), contents)
}

pub fn emit_pass_at_n(report: &PassAtNReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let contents = match format {
        ReportFormat::Json => to_json(report)?,
        ReportFormat::Csv => pass_at_n_csv(report)?,
    };
    write(path.as_ref(), contents)
}

pub fn emit_perturbation(
    report: &PerturbationReport,
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let contents = match format {
        ReportFormat::Json => to_json(report)?,
        ReportFormat::Csv => perturbation_csv(report)?,
    };
    write(path.as_ref(), contents)
}
