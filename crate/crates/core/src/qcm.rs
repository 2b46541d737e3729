//! Stopping-point search: score each generated frame against the fixed
//! image, take each metric's best time and average them.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::metrics::{dsc, ranking_value, MetricId};
use crate::svf::TimeGrid;
use crate::volume::{LabelVolume, Volume};

/// Warped moving labels, one per frame, and the fixed segmentation.
#[derive(Clone, Copy, Debug)]
pub struct LabelFrames<'a> {
    pub frames: &'a [LabelVolume],
    pub fixed: &'a LabelVolume,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricCurve {
    pub metric: MetricId,
    pub times: Vec<f64>,
    /// An unbounded PSNR is stored as `+inf`.
    pub values: Vec<f64>,
    pub best_index: usize,
}

impl MetricCurve {
    /// Argbest under the metric's orientation, ties to the earliest time.
    pub fn new(metric: MetricId, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Empty { what: "metric curve" });
        }
        if times.len() != values.len() {
            return Err(Error::CountMismatch {
                what: "curve values",
                expected: times.len(),
                found: values.len(),
            });
        }
        let mut best_index = 0;
        for (i, &v) in values.iter().enumerate().skip(1) {
            if metric.is_better(v, values[best_index]) {
                best_index = i;
            }
        }
        Ok(MetricCurve {
            metric,
            times,
            values,
            best_index,
        })
    }

    pub fn best_t(&self) -> f64 {
        self.times[self.best_index]
    }

    pub fn best_value(&self) -> f64 {
        self.values[self.best_index]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoppingPointReport {
    /// One entry per scored metric, in the order the curves were given.
    pub best_t: Vec<(MetricId, f64)>,
    pub mean_s: f64,
}

impl StoppingPointReport {
    pub fn best_t_for(&self, metric: MetricId) -> Option<f64> {
        self.best_t.iter().find(|(m, _)| *m == metric).map(|&(_, t)| t)
    }
}

/// The metric between every frame and `fixed` over the time grid.
///
/// Labels must be supplied exactly when `metric` is DSC. SSIM and PSNR use
/// the fixed image's dynamic range.
pub fn score_curve(
    frames: &[Volume],
    fixed: &Volume,
    grid: &TimeGrid,
    metric: MetricId,
    labels: Option<LabelFrames<'_>>,
) -> Result<MetricCurve> {
    if frames.len() != grid.len() {
        return Err(Error::CountMismatch {
            what: "frames",
            expected: grid.len(),
            found: frames.len(),
        });
    }
    let values = match (metric.needs_labels(), labels) {
        (true, Some(l)) => {
            if l.frames.len() != grid.len() {
                return Err(Error::CountMismatch {
                    what: "label frames",
                    expected: grid.len(),
                    found: l.frames.len(),
                });
            }
            l.frames
                .iter()
                .map(|f| dsc(f, l.fixed, None).map(|v| v.value))
                .collect::<Result<Vec<_>>>()?
        }
        (true, None) => return Err(Error::LabelMismatch("DSC needs label volumes")),
        (false, Some(_)) => {
            return Err(Error::LabelMismatch("labels are only used by DSC"));
        }
        (false, None) => {
            let q = fixed.dynamic_range() as f64;
            frames
                .iter()
                .map(|f| ranking_value(metric, f, fixed, q))
                .collect::<Result<Vec<_>>>()?
        }
    };
    MetricCurve::new(metric, grid.times(), values)
}

/// Curves for the five intensity metrics, plus DSC when labels are given.
pub fn score_all(
    frames: &[Volume],
    fixed: &Volume,
    grid: &TimeGrid,
    labels: Option<LabelFrames<'_>>,
) -> Result<Vec<MetricCurve>> {
    let mut curves = MetricId::INTENSITY
        .iter()
        .map(|&m| score_curve(frames, fixed, grid, m, None))
        .collect::<Result<Vec<_>>>()?;
    if labels.is_some() {
        curves.push(score_curve(frames, fixed, grid, MetricId::Dsc, labels)?);
    }
    Ok(curves)
}

/// Collect every curve's best time; the adjusted stopping point is their
/// arithmetic mean.
pub fn adjust_stopping_point(curves: &[MetricCurve]) -> Result<StoppingPointReport> {
    if curves.is_empty() {
        return Err(Error::Empty { what: "curve list" });
    }
    let best_t: Vec<(MetricId, f64)> = curves.iter().map(|c| (c.metric, c.best_t())).collect();
    let mean_s = best_t.iter().map(|&(_, t)| t).sum::<f64>() / best_t.len() as f64;
    Ok(StoppingPointReport { best_t, mean_s })
}
