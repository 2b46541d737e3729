//! Per-subject JSON manifest: the frame table plus everything needed to
//! reproduce it. No timestamps, so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use agegen_core::pipeline::{AgedFrame, GenerationPlan, SubjectRun};
use agegen_core::MetricId;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::io;

pub const FILE_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    /// 1-based.
    pub index: usize,
    pub t: f64,
    pub age: f64,
    /// Relative to the manifest's directory.
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BestT {
    pub metric: MetricId,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub subject: String,
    /// Free-form dataset tag used to group evaluation results.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub tag: String,
    pub age_moving: f64,
    pub age_fixed: f64,
    pub initial_s: f64,
    pub adjusted_s: f64,
    /// Years between frames on the initial grid.
    pub age_step: f64,
    pub steps_per_unit: u32,
    pub stopping: String,
    pub config_hash: String,
    pub best_t: Vec<BestT>,
    pub mean_s: f64,
    pub frames: Vec<FrameEntry>,
}

pub fn frame_file(k: usize) -> String {
    format!("frame_{k}.nii.gz")
}

pub fn labels_file(k: usize) -> String {
    format!("labels_{k}.nii.gz")
}

pub struct ManifestInfo<'a> {
    pub subject: &'a str,
    pub tag: &'a str,
    pub age_moving: f64,
    pub age_fixed: f64,
    pub plan: &'a GenerationPlan,
    pub steps_per_unit: u32,
    pub stopping: String,
    pub config_hash: &'a str,
}

impl Manifest {
    pub fn new(info: &ManifestInfo<'_>, run: &SubjectRun) -> Self {
        Manifest {
            subject: info.subject.to_string(),
            tag: info.tag.to_string(),
            age_moving: info.age_moving,
            age_fixed: info.age_fixed,
            initial_s: info.plan.initial_s,
            adjusted_s: run.adjusted_s,
            age_step: info.plan.age_step,
            steps_per_unit: info.steps_per_unit,
            stopping: info.stopping.clone(),
            config_hash: info.config_hash.to_string(),
            best_t: run.report.best_t.iter().map(|&(metric, t)| BestT { metric, t }).collect(),
            mean_s: run.report.mean_s,
            frames: run
                .frames
                .iter()
                .map(|f| FrameEntry {
                    index: f.index,
                    t: f.t,
                    age: f.age,
                    image: frame_file(f.index).into(),
                    labels: f.labels.as_ref().map(|_| labels_file(f.index).into()),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| AppError::Parse {
            path: origin.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        m.validate(origin)?;
        Ok(m)
    }

    pub fn validate(&self, origin: &Path) -> Result<()> {
        let bad = |msg: String| AppError::format(origin, msg);
        if self.frames.is_empty() {
            return Err(bad("manifest lists no frames".into()));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.index != i + 1 {
                return Err(bad(format!("frame {} has index {}", i + 1, f.index)));
            }
        }
        if !self.frames.windows(2).all(|w| w[0].t < w[1].t && w[0].age < w[1].age) {
            return Err(bad("frame times and ages must increase strictly".into()));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| AppError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_json(&text, path)
    }

    /// Loads every frame image (and labels, when listed) back from disk.
    pub fn load_frames(&self, manifest_path: &Path) -> Result<Vec<AgedFrame>> {
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        self.frames
            .iter()
            .map(|f| {
                Ok(AgedFrame {
                    index: f.index,
                    t: f.t,
                    age: f.age,
                    image: io::read_volume(&dir.join(&f.image))?,
                    labels: f.labels.as_ref().map(|l| io::read_labels(&dir.join(l))).transpose()?,
                })
            })
            .collect()
    }
}
