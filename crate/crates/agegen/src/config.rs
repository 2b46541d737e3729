//! Run configuration: a TOML file whose relative paths resolve against the
//! file's own directory. Every numeric field is validated at parse time.
//!
//! ```toml
//! initial_s = 3.0
//! steps_per_unit = 32
//! stopping = "mean"          # or a metric name: mae, ssim, ncc, psnr, nfn, dsc
//! velocity_source = "demons" # or "file"
//! output_dir = "out"
//!
//! [demons]
//! iterations = 200
//!
//! [[subject]]
//! id = "s01"
//! moving = "s01_60.nii.gz"
//! age_moving = 60.0
//! fixed = "s01_70.nii.gz"
//! age_fixed = 70.0
//! labels_moving = "s01_60_labels.nii.gz"
//! labels_fixed = "s01_70_labels.nii.gz"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use agegen_core::phantom::PhantomSpec;
use agegen_core::pipeline::{StoppingRule, DEFAULT_INITIAL_S};
use agegen_core::registration::DemonsParams;
use agegen_core::svf::IntegrationParams;
use agegen_core::MetricId;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    #[default]
    Demons,
    File,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectConfig {
    pub id: String,
    /// Dataset tag recorded in the manifest.
    #[serde(default)]
    pub tag: String,
    pub moving: PathBuf,
    pub age_moving: f64,
    pub fixed: PathBuf,
    pub age_fixed: f64,
    pub labels_moving: Option<PathBuf>,
    pub labels_fixed: Option<PathBuf>,
    /// Required when `velocity_source = "file"`.
    pub velocity: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct PhantomSection {
    #[serde(default)]
    pub ages: Vec<f64>,
    #[serde(default = "default_tag")]
    pub tag: String,
    #[serde(flatten)]
    pub spec: PhantomSpec,
}

impl Default for PhantomSection {
    fn default() -> Self {
        PhantomSection {
            ages: Vec::new(),
            tag: default_tag(),
            spec: PhantomSpec::default(),
        }
    }
}

fn default_tag() -> String {
    "phantom".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    initial_s: Option<f64>,
    steps_per_unit: Option<u32>,
    stopping: Option<String>,
    #[serde(default)]
    velocity_source: SourceKind,
    #[serde(default)]
    normalize: bool,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    demons: DemonsParams,
    #[serde(default, rename = "subject")]
    subjects: Vec<SubjectConfig>,
    phantom: Option<PhantomSection>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub initial_s: f64,
    pub integration: IntegrationParams,
    pub stopping: StoppingRule,
    pub velocity_source: SourceKind,
    /// Rescale inputs onto [0, 1] before registration.
    pub normalize: bool,
    pub output_dir: Option<PathBuf>,
    pub demons: DemonsParams,
    pub subjects: Vec<SubjectConfig>,
    pub phantom: PhantomSection,
    /// Hex SHA-256 of the config text.
    pub hash: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            initial_s: DEFAULT_INITIAL_S,
            integration: IntegrationParams::default(),
            stopping: StoppingRule::Mean,
            velocity_source: SourceKind::Demons,
            normalize: false,
            output_dir: None,
            demons: DemonsParams::default(),
            subjects: Vec::new(),
            phantom: PhantomSection::default(),
            hash: sha256_hex(b""),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_stopping(s: &str) -> Result<StoppingRule> {
    if s.eq_ignore_ascii_case("mean") {
        return Ok(StoppingRule::Mean);
    }
    s.parse::<MetricId>()
        .map(StoppingRule::Metric)
        .map_err(|_| AppError::Usage(format!("unknown stopping rule `{s}`; expected mean or a metric name")))
}

pub fn stopping_name(rule: StoppingRule) -> String {
    match rule {
        StoppingRule::Mean => "mean".into(),
        StoppingRule::Metric(m) => m.name().into(),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, path)
    }

    /// `origin` only labels error messages.
    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| AppError::Parse {
            path: origin.to_path_buf(),
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let subjects = raw
            .subjects
            .into_iter()
            .map(|s| SubjectConfig {
                moving: resolve(s.moving),
                fixed: resolve(s.fixed),
                labels_moving: s.labels_moving.map(resolve),
                labels_fixed: s.labels_fixed.map(resolve),
                velocity: s.velocity.map(resolve),
                ..s
            })
            .collect();
        let cfg = RunConfig {
            initial_s: raw.initial_s.unwrap_or(DEFAULT_INITIAL_S),
            integration: IntegrationParams::euler(raw.steps_per_unit.unwrap_or(32)),
            stopping: raw.stopping.as_deref().map_or(Ok(StoppingRule::Mean), parse_stopping)?,
            velocity_source: raw.velocity_source,
            normalize: raw.normalize,
            output_dir: raw.output_dir.map(resolve),
            demons: raw.demons,
            subjects,
            phantom: raw.phantom.unwrap_or_default(),
            hash: sha256_hex(text.as_bytes()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_s.is_finite() && self.initial_s > 0.0) {
            return Err(AppError::Usage(format!("initial_s must be positive, got {}", self.initial_s)));
        }
        self.integration.validate()?;
        self.demons.validate()?;
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.subjects {
            if s.id.is_empty() || s.id.contains(['/', '\\']) || s.id == "." || s.id == ".." {
                return Err(AppError::Usage(format!("subject id `{}` cannot name a directory", s.id)));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(AppError::Usage(format!("duplicate subject id `{}`", s.id)));
            }
            let gap = s.age_fixed - s.age_moving;
            if !(gap.is_finite() && gap > 0.0) {
                return Err(agegen_core::Error::NonPositiveAgeGap { gap }.into());
            }
            if self.velocity_source == SourceKind::File && s.velocity.is_none() {
                return Err(AppError::Usage(format!(
                    "subject `{}` needs a velocity path when velocity_source = \"file\"",
                    s.id
                )));
            }
        }
        if self.stopping == StoppingRule::Metric(MetricId::Dsc) {
            if let Some(s) = self.subjects.iter().find(|s| s.labels_moving.is_none() || s.labels_fixed.is_none()) {
                return Err(AppError::Usage(format!(
                    "stopping = \"dsc\" needs both label volumes for subject `{}`",
                    s.id
                )));
            }
        }
        self.phantom.spec.validate()?;
        Ok(())
    }
}
