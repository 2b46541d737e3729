//! Ground-truth listings: CSV with a header naming at least `path` and
//! `true_age`, optionally `tag`, `labels` and `subject`. Relative paths
//! resolve against the listing's directory.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ListingEntry {
    pub path: PathBuf,
    pub true_age: f64,
    /// Empty falls back to the manifest's tag.
    #[serde(default)]
    pub tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Restricts the entry to one subject; empty means any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
}

impl ListingEntry {
    pub fn applies_to(&self, subject: &str) -> bool {
        self.subject.as_deref().is_none_or(|s| s.is_empty() || s == subject)
    }
}

pub fn read_listing(path: &Path) -> Result<Vec<ListingEntry>> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = r
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    for required in ["path", "true_age"] {
        if !headers.iter().any(|h| h == required) {
            return Err(parse_err(path, 1, format!("missing column `{required}`")));
        }
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(1, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let mut e: ListingEntry = rec
            .deserialize(Some(&headers))
            .map_err(|err| parse_err(path, line, err.to_string()))?;
        if !e.true_age.is_finite() {
            return Err(parse_err(path, line, "true_age must be finite".into()));
        }
        if e.path.as_os_str().is_empty() {
            return Err(parse_err(path, line, "empty path".into()));
        }
        e.labels = e.labels.filter(|l| !l.as_os_str().is_empty());
        e.path = resolve(base, e.path);
        e.labels = e.labels.map(|l| resolve(base, l));
        out.push(e);
    }
    if out.is_empty() {
        return Err(AppError::format(path, "ground-truth listing has no entries"));
    }
    Ok(out)
}

/// Paths are written as given; pass them relative to the listing's directory.
pub fn write_listing(path: &Path, entries: &[ListingEntry]) -> Result<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let err = |e: csv::Error| AppError::format(path, e.to_string());
    w.write_record(["path", "true_age", "tag", "labels", "subject"]).map_err(err)?;
    for e in entries {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        w.write_record([
            e.path.display().to_string(),
            e.true_age.to_string(),
            e.tag.clone(),
            opt(&e.labels),
            e.subject.clone().unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn parse_err(path: &Path, line: usize, message: String) -> AppError {
    AppError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_optional_columns_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.csv");
        std::fs::write(
            &p,
            "path,true_age,tag,labels\na.nii.gz,62.5,phantom,a_l.nii.gz\n/abs/b.nii,65,scan,\n",
        )
        .unwrap();
        let e = read_listing(&p).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].path, dir.path().join("a.nii.gz"));
        assert_eq!(e[0].labels, Some(dir.path().join("a_l.nii.gz")));
        assert_eq!(e[1].path, Path::new("/abs/b.nii"));
        assert_eq!(e[1].labels, None);
        assert!(e[1].applies_to("anyone"));
    }

    #[test]
    fn write_then_read_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.csv");
        let entries = vec![ListingEntry {
            path: "x.nii.gz".into(),
            true_age: 61.25,
            tag: "t".into(),
            labels: None,
            subject: Some("s1".into()),
        }];
        write_listing(&p, &entries).unwrap();
        let back = read_listing(&p).unwrap();
        assert_eq!(back[0].true_age, 61.25);
        assert_eq!(back[0].subject.as_deref(), Some("s1"));
        assert!(!back[0].applies_to("s2"));
    }

    #[test]
    fn errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.csv");
        std::fs::write(&p, "path,true_age,tag\na.nii,62,x\nb.nii,sixty,x\n").unwrap();
        assert!(matches!(read_listing(&p), Err(AppError::Parse { line: 3, .. })));
        std::fs::write(&p, "path,tag\na.nii,x\n").unwrap();
        assert!(read_listing(&p).unwrap_err().to_string().contains("true_age"));
        std::fs::write(&p, "path,true_age,tag\n").unwrap();
        assert!(read_listing(&p).is_err());
    }
}
