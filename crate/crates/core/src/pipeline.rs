//! Subject orchestration: velocity field, first pass to the initial stopping
//! point, quality-control search, regeneration at the adjusted stopping
//! point, label warping and age assignment.

use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricId;
use crate::qcm::{adjust_stopping_point, score_all, LabelFrames, MetricCurve, StoppingPointReport};
use crate::registration::{estimate_svf, DemonsParams};
use crate::svf::{integrate_sequence, IntegrationParams, TimeGrid};
use crate::volume::{warp, warp_labels, FieldKind, Interpolation, LabelVolume, VectorField, Volume};

pub const DEFAULT_INITIAL_S: f64 = 3.0;

/// An individualized image pair. `fixed` is the older scan.
#[derive(Clone, Debug)]
pub struct SubjectPair {
    pub id: String,
    pub moving: Volume,
    pub age_moving: f64,
    pub fixed: Volume,
    pub age_fixed: f64,
    /// Segmentation of `moving`; it is the one carried along the sequence.
    pub labels_moving: Option<LabelVolume>,
    /// Segmentation of `fixed`; only used for the DSC curve.
    pub labels_fixed: Option<LabelVolume>,
}

impl SubjectPair {
    pub fn new(
        id: impl Into<String>,
        moving: Volume,
        age_moving: f64,
        fixed: Volume,
        age_fixed: f64,
    ) -> Result<Self> {
        let pair = SubjectPair {
            id: id.into(),
            moving,
            age_moving,
            fixed,
            age_fixed,
            labels_moving: None,
            labels_fixed: None,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn with_labels(mut self, moving: Option<LabelVolume>, fixed: Option<LabelVolume>) -> Result<Self> {
        self.labels_moving = moving;
        self.labels_fixed = fixed;
        self.validate()?;
        Ok(self)
    }

    pub fn age_gap(&self) -> f64 {
        self.age_fixed - self.age_moving
    }

    pub fn validate(&self) -> Result<()> {
        let gap = self.age_gap();
        if !(gap.is_finite() && gap > 0.0) {
            return Err(Error::NonPositiveAgeGap { gap });
        }
        let dims = self.moving.dims();
        dims.check_same(self.fixed.dims())?;
        for l in self.labels_moving.iter().chain(&self.labels_fixed) {
            dims.check_same(l.dims())?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GenerationPlan {
    pub initial_s: f64,
    pub frames: usize,
    /// `initial_s / frames`.
    pub time_step: f64,
    /// Years between consecutive frames before the stopping point is adjusted.
    pub age_step: f64,
}

impl GenerationPlan {
    pub fn initial_grid(&self) -> TimeGrid {
        TimeGrid::new(self.initial_s, self.frames).expect("validated plan")
    }
}

/// Two frames per year of age gap, never fewer than two.
pub fn frames_for_gap(gap: f64) -> usize {
    (libm::round(2.0 * gap) as usize).max(2)
}

pub fn plan_generation(pair: &SubjectPair, initial_s: f64) -> Result<GenerationPlan> {
    plan_for_gap(pair.age_gap(), initial_s)
}

pub fn plan_for_gap(gap: f64, initial_s: f64) -> Result<GenerationPlan> {
    if !(gap.is_finite() && gap > 0.0) {
        return Err(Error::NonPositiveAgeGap { gap });
    }
    let grid = TimeGrid::new(initial_s, frames_for_gap(gap))?;
    Ok(GenerationPlan {
        initial_s,
        frames: grid.len(),
        time_step: grid.step(),
        age_step: gap / grid.len() as f64,
    })
}

/// `age_m + (t / s)(age_f - age_m)`, exactly `age_f` at `t == s`.
pub fn assign_age(age_moving: f64, age_fixed: f64, t: f64, s: f64) -> f64 {
    if t == s {
        age_fixed
    } else {
        age_moving + (t / s) * (age_fixed - age_moving)
    }
}

#[derive(Clone, Debug)]
pub enum VelocitySource {
    /// A precomputed field, e.g. from an external registration tool.
    Field(VectorField),
    Demons(DemonsParams),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum StoppingRule {
    /// Mean of every metric's best time.
    #[default]
    Mean,
    Metric(MetricId),
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PipelineParams {
    pub integration: IntegrationParams,
    pub stopping: StoppingRule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgedFrame {
    /// 1-based position on the regenerated grid.
    pub index: usize,
    pub t: f64,
    pub age: f64,
    pub image: Volume,
    pub labels: Option<LabelVolume>,
}

#[derive(Clone, Debug)]
pub struct SubjectRun {
    pub velocity: VectorField,
    /// First-pass curves on the initial grid.
    pub curves: Vec<MetricCurve>,
    pub report: StoppingPointReport,
    pub adjusted_s: f64,
    pub frames: Vec<AgedFrame>,
}

fn velocity_for(pair: &SubjectPair, source: &VelocitySource) -> Result<VectorField> {
    match source {
        VelocitySource::Field(v) => {
            v.dims().check_same(pair.moving.dims())?;
            v.expect_kind(FieldKind::Velocity)?;
            Ok(v.clone())
        }
        VelocitySource::Demons(p) => estimate_svf(&pair.moving, &pair.fixed, p),
    }
}

fn warp_all(moving: &Volume, fields: &[VectorField]) -> Result<Vec<Volume>> {
    fields
        .iter()
        .map(|phi| warp(moving, phi, Interpolation::Trilinear))
        .collect()
}

fn warp_all_labels(labels: &LabelVolume, fields: &[VectorField]) -> Result<Vec<LabelVolume>> {
    fields
        .iter()
        .map(|phi| warp_labels(labels, phi, Interpolation::Nearest))
        .collect()
}

pub fn run_subject(
    pair: &SubjectPair,
    plan: &GenerationPlan,
    source: &VelocitySource,
    params: &PipelineParams,
) -> Result<SubjectRun> {
    pair.validate()?;
    params.integration.validate()?;
    if params.stopping == StoppingRule::Metric(MetricId::Dsc)
        && (pair.labels_moving.is_none() || pair.labels_fixed.is_none())
    {
        return Err(Error::LabelMismatch("DSC stopping rule needs both segmentations"));
    }
    let v = velocity_for(pair, source)?;

    let grid = plan.initial_grid();
    let fields = integrate_sequence(&v, &grid, &params.integration)?;
    let images = warp_all(&pair.moving, &fields)?;
    let curves = match (&pair.labels_moving, &pair.labels_fixed) {
        (Some(lm), Some(lf)) => {
            let warped = warp_all_labels(lm, &fields)?;
            let labels = LabelFrames {
                frames: &warped,
                fixed: lf,
            };
            score_all(&images, &pair.fixed, &grid, Some(labels))?
        }
        _ => score_all(&images, &pair.fixed, &grid, None)?,
    };
    drop(images);
    drop(fields);
    let report = adjust_stopping_point(&curves)?;
    let adjusted_s = match params.stopping {
        StoppingRule::Mean => report.mean_s,
        StoppingRule::Metric(m) => report
            .best_t_for(m)
            .ok_or(Error::LabelMismatch("stopping metric was not scored"))?,
    };

    let grid = TimeGrid::new(adjusted_s, plan.frames)?;
    let fields = integrate_sequence(&v, &grid, &params.integration)?;
    let frames = fields
        .iter()
        .enumerate()
        .map(|(i, phi)| {
            let t = grid.time(i + 1);
            Ok(AgedFrame {
                index: i + 1,
                t,
                age: assign_age(pair.age_moving, pair.age_fixed, t, adjusted_s),
                image: warp(&pair.moving, phi, Interpolation::Trilinear)?,
                labels: pair
                    .labels_moving
                    .as_ref()
                    .map(|l| warp_labels(l, phi, Interpolation::Nearest))
                    .transpose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubjectRun {
        velocity: v,
        curves,
        report,
        adjusted_s,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;

    fn pair(age_m: f64, age_f: f64) -> SubjectPair {
        let v = Volume::from_fn(Dims::cube(8), |x, y, z| (x + y * z) as f32 / 60.0).unwrap();
        SubjectPair::new("s", v.clone(), age_m, v, age_f).unwrap()
    }

    #[test]
    fn plan_arithmetic() {
        let p = plan_for_gap(10.0, 3.0).unwrap();
        assert_eq!((p.frames, p.age_step), (20, 0.5));
        assert_eq!(p.time_step, 0.15);
        assert_eq!(plan_for_gap(0.6, 3.0).unwrap().frames, 2);
        let p = plan_for_gap(12.0, 3.0).unwrap();
        assert_eq!((p.frames, p.time_step), (24, 0.125));
        assert!(matches!(plan_for_gap(0.0, 3.0), Err(Error::NonPositiveAgeGap { .. })));
        assert!(plan_for_gap(2.0, -1.0).is_err());
        assert_eq!(plan_generation(&pair(60.0, 70.0), 3.0).unwrap().frames, 20);
    }

    #[test]
    fn age_formula() {
        assert_eq!(assign_age(60.0, 70.0, 1.0, 2.0), 65.0);
        assert_eq!(assign_age(60.3, 70.1, 1.7, 1.7), 70.1);
        assert_eq!(assign_age(60.0, 70.0, 0.0, 2.0), 60.0);
    }

    #[test]
    fn rejects_bad_pairs() {
        let v = Volume::filled(Dims::cube(8), 0.5).unwrap();
        assert!(matches!(
            SubjectPair::new("s", v.clone(), 70.0, v.clone(), 70.0),
            Err(Error::NonPositiveAgeGap { .. })
        ));
        let w = Volume::filled(Dims::cube(9), 0.5).unwrap();
        assert!(SubjectPair::new("s", v, 60.0, w, 70.0).is_err());
    }

    #[test]
    fn supplied_field_is_used_as_is() {
        let p = pair(60.0, 62.0);
        let plan = plan_generation(&p, 3.0).unwrap();
        let v = VectorField::zeros(Dims::cube(8), FieldKind::Velocity);
        let run = run_subject(&p, &plan, &VelocitySource::Field(v), &PipelineParams::default()).unwrap();
        assert_eq!(run.frames.len(), 4);
        // Every frame ties; the earliest time wins for every metric.
        assert_eq!(run.adjusted_s, 0.75);
        assert_eq!(run.frames.last().unwrap().age, 62.0);
        assert!(run.frames.iter().all(|f| f.image == p.moving));

        let wrong = VectorField::zeros(Dims::cube(8), FieldKind::Displacement);
        assert!(run_subject(&p, &plan, &VelocitySource::Field(wrong), &PipelineParams::default()).is_err());
        let dsc = PipelineParams {
            stopping: StoppingRule::Metric(MetricId::Dsc),
            ..PipelineParams::default()
        };
        let zero = VectorField::zeros(Dims::cube(8), FieldKind::Velocity);
        assert!(matches!(
            run_subject(&p, &plan, &VelocitySource::Field(zero), &dsc),
            Err(Error::LabelMismatch(_))
        ));
    }
}
