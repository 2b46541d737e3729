//! First-pass metric curves as long-format CSV: `t,metric,value`, one row
//! per (frame, metric). An unbounded PSNR is written as `inf`.

use std::fs::File;
use std::path::Path;

use agegen_core::qcm::MetricCurve;
use agegen_core::MetricId;

use crate::error::{AppError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub t: f64,
    pub metric: MetricId,
    pub value: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> AppError {
    let line = e.position().map_or(1, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => AppError::io(path, io),
        other => AppError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

pub fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        v.to_string()
    }
}

pub fn write_curves(path: &Path, curves: &[MetricCurve]) -> Result<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let io = |e| csv_err(path, e);
    w.write_record(["t", "metric", "value"]).map_err(io)?;
    for c in curves {
        for (t, v) in c.times.iter().zip(&c.values) {
            w.write_record([t.to_string(), c.metric.name().to_string(), format_value(*v)])
                .map_err(io)?;
        }
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn read_curves(path: &Path) -> Result<Vec<CurveRow>> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| AppError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", rec.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")));
        rows.push(CurveRow {
            t: num(&rec[0])?,
            metric: rec[1].parse().map_err(|_| bad(format!("unknown metric `{}`", &rec[1])))?,
            value: num(&rec[2])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_round_trip_with_unbounded_psnr() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("curves.csv");
        let curves = vec![
            MetricCurve::new(MetricId::Psnr, vec![0.5, 1.0], vec![31.25, f64::INFINITY]).unwrap(),
            MetricCurve::new(MetricId::Mae, vec![0.5, 1.0], vec![0.1, 0.0]).unwrap(),
        ];
        write_curves(&p, &curves).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,metric,value\n"));
        assert!(text.contains("1,psnr,inf\n"));
        let rows = read_curves(&p).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[1].value, f64::INFINITY);
        assert_eq!(rows[2].metric, MetricId::Mae);
    }

    #[test]
    fn malformed_row_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        std::fs::write(&p, "t,metric,value\n0.5,ncc,0.9\n1.0,ncc,abc\n").unwrap();
        let err = read_curves(&p).unwrap_err();
        assert!(matches!(err, AppError::Parse { line: 3, .. }), "{err}");
    }
}
