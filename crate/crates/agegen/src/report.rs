//! Evaluation report files: `report.json` with the whole report plus three
//! CSV tables (`metrics.csv`, `quality.csv`, `matches.csv`).
//!
//! JSON has no infinity, so an unbounded PSNR appears as `null` there and as
//! `inf` in the CSV tables.

use std::fs::{self, File};
use std::path::Path;

use agegen_core::evaluation::EvaluationReport;

use crate::curves::format_value;
use crate::error::{AppError, Result};

pub const REPORT_JSON: &str = "report.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const QUALITY_CSV: &str = "quality.csv";
pub const MATCHES_CSV: &str = "matches.csv";

fn table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let err = |e: csv::Error| AppError::format(path, e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

pub fn write_report(dir: &Path, report: &EvaluationReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let json_path = dir.join(REPORT_JSON);
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    fs::write(&json_path, json).map_err(|e| AppError::io(&json_path, e))?;

    table(
        &dir.join(METRICS_CSV),
        &["metric", "rmse", "slope", "intercept", "r_squared", "corrected_rmse"],
        report.metrics.iter().map(|m| {
            let r = m.regression.as_ref();
            vec![
                m.metric.name().to_string(),
                format_value(m.rmse),
                opt(r.map(|r| r.slope)),
                opt(r.map(|r| r.intercept)),
                opt(r.map(|r| r.r_squared)),
                opt(r.map(|r| r.corrected_rmse)),
            ]
        }),
    )?;
    table(
        &dir.join(QUALITY_CSV),
        &["tag", "metric", "count", "mean", "unbounded"],
        report.quality.iter().map(|q| {
            vec![
                q.tag.clone(),
                q.metric.name().to_string(),
                q.count.to_string(),
                opt(q.mean),
                q.unbounded.to_string(),
            ]
        }),
    )?;
    table(
        &dir.join(MATCHES_CSV),
        &["subject", "tag", "metric", "true_age", "estimated_age", "t", "frame_index", "value"],
        report.matches.iter().map(|m| {
            vec![
                m.subject.clone(),
                m.tag.clone(),
                m.metric.name().to_string(),
                m.true_age.to_string(),
                m.estimated_age.to_string(),
                m.t.to_string(),
                m.frame_index.to_string(),
                format_value(m.value),
            ]
        }),
    )
}
