//! Validation against held-out intermediate scans: closest-frame matching,
//! age RMSE, linear regression of estimated on true age, and quality tables.

use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{dsc, ranking_value, MetricId, MetricValue};
use crate::pipeline::AgedFrame;
use crate::volume::{LabelVolume, Volume};

/// A real intermediate scan with a known age.
#[derive(Clone, Debug)]
pub struct GroundTruthItem {
    pub image: Volume,
    pub true_age: f64,
    pub labels: Option<LabelVolume>,
    /// Free-form dataset tag used to group quality tables.
    pub tag: String,
}

fn score(frame: &AgedFrame, gt: &GroundTruthItem, metric: MetricId) -> Result<f64> {
    if metric.needs_labels() {
        match (&frame.labels, &gt.labels) {
            (Some(a), Some(b)) => dsc(a, b, None).map(|v| v.value),
            _ => Err(Error::LabelMismatch("DSC needs labels on the frame and the ground truth")),
        }
    } else {
        ranking_value(metric, &frame.image, &gt.image, gt.image.dynamic_range() as f64)
    }
}

/// The frame most similar to `gt` under `metric`, ties to the smaller `t`.
/// An unbounded PSNR is reported as `+inf`.
pub fn match_closest<'a>(
    frames: &'a [AgedFrame],
    gt: &GroundTruthItem,
    metric: MetricId,
) -> Result<(&'a AgedFrame, MetricValue)> {
    let mut best: Option<(&AgedFrame, f64)> = None;
    for frame in frames {
        let value = score(frame, gt, metric)?;
        let better = match best {
            None => true,
            Some((b, bv)) => metric.is_better(value, bv) || (value == bv && frame.t < b.t),
        };
        if better {
            best = Some((frame, value));
        }
    }
    let (frame, value) = best.ok_or(Error::Empty { what: "frame list" })?;
    Ok((frame, MetricValue { metric, value }))
}

/// `sqrt(mean((true - estimated)^2))` over `(true, estimated)` pairs.
pub fn age_rmse(matches: &[(f64, f64)]) -> Result<f64> {
    if matches.is_empty() {
        return Err(Error::Empty { what: "match list" });
    }
    let sum: f64 = matches.iter().map(|&(t, e)| (t - e) * (t - e)).sum();
    Ok(libm::sqrt(sum / matches.len() as f64))
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    /// 1 when the estimates are fitted exactly, including the flat case.
    pub r_squared: f64,
    /// RMSE of the residuals about the fitted line.
    pub corrected_rmse: f64,
}

/// Ordinary least squares of estimated age on true age.
pub fn fit_regression(matches: &[(f64, f64)]) -> Result<Regression> {
    if matches.len() < 3 {
        return Err(Error::DegenerateAbscissa);
    }
    let n = matches.len() as f64;
    let mx = matches.iter().map(|m| m.0).sum::<f64>() / n;
    let my = matches.iter().map(|m| m.1).sum::<f64>() / n;
    let sxx: f64 = matches.iter().map(|m| (m.0 - mx) * (m.0 - mx)).sum();
    let sxy: f64 = matches.iter().map(|m| (m.0 - mx) * (m.1 - my)).sum();
    let syy: f64 = matches.iter().map(|m| (m.1 - my) * (m.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateAbscissa);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = matches
        .iter()
        .map(|&(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 || ss_res == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).min(1.0)
    };
    Ok(Regression {
        slope,
        intercept,
        r_squared,
        corrected_rmse: libm::sqrt(ss_res / n),
    })
}

/// One matched gt item under one metric.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Match {
    pub subject: String,
    pub tag: String,
    pub metric: MetricId,
    pub true_age: f64,
    pub estimated_age: f64,
    pub t: f64,
    pub frame_index: usize,
    /// `+inf` for an unbounded PSNR.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct QualityRow {
    pub tag: String,
    pub metric: MetricId,
    pub count: usize,
    /// Mean over the finite values; `None` if every value was unbounded.
    pub mean: Option<f64>,
    pub unbounded: usize,
}

/// Mean matched-frame quality per `(tag, metric)`, sorted by tag then metric.
pub fn quality_table(matches: &[Match]) -> Vec<QualityRow> {
    let mut rows: Vec<(QualityRow, f64)> = Vec::new();
    for m in matches {
        let pos = rows
            .iter()
            .position(|(r, _)| r.tag == m.tag && r.metric == m.metric)
            .unwrap_or_else(|| {
                rows.push((
                    QualityRow {
                        tag: m.tag.clone(),
                        metric: m.metric,
                        count: 0,
                        mean: None,
                        unbounded: 0,
                    },
                    0.0,
                ));
                rows.len() - 1
            });
        let (row, sum) = &mut rows[pos];
        row.count += 1;
        if m.value.is_finite() {
            *sum += m.value;
        } else {
            row.unbounded += 1;
        }
    }
    let mut out: Vec<QualityRow> = rows
        .into_iter()
        .map(|(mut r, sum)| {
            let finite = r.count - r.unbounded;
            r.mean = (finite > 0).then(|| sum / finite as f64);
            r
        })
        .collect();
    out.sort_by(|a, b| a.tag.cmp(&b.tag).then(metric_rank(a.metric).cmp(&metric_rank(b.metric))));
    out
}

fn metric_rank(m: MetricId) -> usize {
    MetricId::ALL.iter().position(|&x| x == m).unwrap_or(usize::MAX)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MetricEvaluation {
    pub metric: MetricId,
    pub rmse: f64,
    /// Absent with fewer than three matches or a single distinct true age.
    pub regression: Option<Regression>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EvaluationReport {
    /// Years between consecutive frames, per subject, so the quantization
    /// of estimated ages can be read off.
    pub age_steps: Vec<(String, f64)>,
    pub metrics: Vec<MetricEvaluation>,
    pub quality: Vec<QualityRow>,
    pub matches: Vec<Match>,
}

impl EvaluationReport {
    pub fn for_metric(&self, metric: MetricId) -> Option<&MetricEvaluation> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    pub fn matches_for(&self, metric: MetricId) -> impl Iterator<Item = &Match> {
        self.matches.iter().filter(move |m| m.metric == metric)
    }
}

/// One subject's generated sequence and its held-out scans.
#[derive(Clone, Copy, Debug)]
pub struct SubjectEvaluation<'a> {
    pub subject: &'a str,
    pub frames: &'a [AgedFrame],
    pub ground_truth: &'a [GroundTruthItem],
}

/// Match every gt item under every metric. DSC is included only when every
/// frame and every gt item carries labels.
pub fn evaluate(subjects: &[SubjectEvaluation<'_>]) -> Result<EvaluationReport> {
    if subjects.iter().all(|s| s.ground_truth.is_empty()) {
        return Err(Error::Empty { what: "ground truth" });
    }
    let labelled = subjects.iter().all(|s| {
        s.frames.iter().all(|f| f.labels.is_some()) && s.ground_truth.iter().all(|g| g.labels.is_some())
    });
    let metrics: Vec<MetricId> = MetricId::ALL
        .iter()
        .copied()
        .filter(|m| labelled || !m.needs_labels())
        .collect();

    let mut matches = Vec::new();
    let mut age_steps = Vec::new();
    for s in subjects {
        if let [a, b, ..] = s.frames {
            age_steps.push((String::from(s.subject), b.age - a.age));
        }
        for &metric in &metrics {
            for gt in s.ground_truth {
                let (frame, value) = match_closest(s.frames, gt, metric)?;
                matches.push(Match {
                    subject: String::from(s.subject),
                    tag: gt.tag.clone(),
                    metric,
                    true_age: gt.true_age,
                    estimated_age: frame.age,
                    t: frame.t,
                    frame_index: frame.index,
                    value: value.value,
                });
            }
        }
    }

    let metrics = metrics
        .into_iter()
        .map(|metric| {
            let pairs: Vec<(f64, f64)> = matches
                .iter()
                .filter(|m| m.metric == metric)
                .map(|m| (m.true_age, m.estimated_age))
                .collect();
            let regression = match fit_regression(&pairs) {
                Ok(r) => Some(r),
                Err(Error::DegenerateAbscissa) => None,
                Err(e) => return Err(e),
            };
            Ok(MetricEvaluation {
                metric,
                rmse: age_rmse(&pairs)?,
                regression,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        age_steps,
        metrics,
        quality: quality_table(&matches),
        matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;
    use alloc::vec;

    fn frame(index: usize, level: f32) -> AgedFrame {
        let dims = Dims::cube(4);
        AgedFrame {
            index,
            t: index as f64 * 0.5,
            age: 60.0 + index as f64,
            image: Volume::from_fn(dims, |x, y, z| level * (1 + x + 2 * y + 3 * z) as f32 / 30.0).unwrap(),
            labels: Some(LabelVolume::from_fn(dims, |x, _, _| u32::from(x < index)).unwrap()),
        }
    }

    fn gt_from(f: &AgedFrame, tag: &str) -> GroundTruthItem {
        GroundTruthItem {
            image: f.image.clone(),
            true_age: f.age,
            labels: f.labels.clone(),
            tag: tag.into(),
        }
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(age_rmse(&[(60.0, 60.0), (65.0, 65.0)]).unwrap(), 0.0);
        assert_eq!(age_rmse(&[(60.0, 61.0), (65.0, 64.0)]).unwrap(), 1.0);
        assert!(age_rmse(&[]).is_err());
    }

    #[test]
    fn regression_examples() {
        let id = [(60.0, 60.0), (62.0, 62.0), (65.0, 65.0)];
        let r = fit_regression(&id).unwrap();
        assert_eq!((r.slope, r.intercept, r.r_squared), (1.0, 0.0, 1.0));
        let off = [(60.0, 61.0), (62.0, 63.0), (65.0, 66.0)];
        let r = fit_regression(&off).unwrap();
        assert!((r.slope - 1.0).abs() < 1e-12 && (r.intercept - 1.0).abs() < 1e-9);
        assert_eq!(r.r_squared, 1.0);
        assert_eq!(fit_regression(&id[..2]).unwrap_err(), Error::DegenerateAbscissa);
        assert_eq!(
            fit_regression(&[(60.0, 1.0), (60.0, 2.0), (60.0, 3.0)]).unwrap_err(),
            Error::DegenerateAbscissa
        );
    }

    #[test]
    fn perfect_copy_is_matched_for_every_metric() {
        let frames: Vec<AgedFrame> = (1..=4).map(|i| frame(i, 0.5 + 0.1 * i as f32)).collect();
        let gt = gt_from(&frames[2], "a");
        for m in MetricId::ALL {
            let (f, v) = match_closest(&frames, &gt, m).unwrap();
            assert_eq!(f.index, 3, "{m}");
            assert_eq!(v.value, m.perfect_value(), "{m}");
        }
        let single = &frames[..1];
        assert_eq!(match_closest(single, &gt, MetricId::Mae).unwrap().0.index, 1);
        assert!(match_closest(&[], &gt, MetricId::Mae).is_err());
    }

    #[test]
    fn identical_matches_table() {
        let frames: Vec<AgedFrame> = (1..=3).map(|i| frame(i, 0.4 + 0.2 * i as f32)).collect();
        let gts = vec![gt_from(&frames[1], "b")];
        let report = evaluate(&[SubjectEvaluation {
            subject: "s1",
            frames: &frames,
            ground_truth: &gts,
        }])
        .unwrap();
        assert_eq!(report.metrics.len(), 6);
        assert_eq!(report.age_steps, vec![(String::from("s1"), 1.0)]);
        let row = |m| report.quality.iter().find(|r| r.metric == m).unwrap();
        assert_eq!(row(MetricId::Mae).mean, Some(0.0));
        assert_eq!(row(MetricId::Ssim).mean, Some(1.0));
        assert_eq!(row(MetricId::Ncc).mean, Some(1.0));
        assert_eq!(row(MetricId::Dsc).mean, Some(1.0));
        assert_eq!(row(MetricId::Nfn).mean, Some(0.0));
        let psnr = row(MetricId::Psnr);
        assert_eq!((psnr.mean, psnr.unbounded), (None, 1));
        assert!(report.for_metric(MetricId::Mae).unwrap().regression.is_none());
        assert_eq!(report.for_metric(MetricId::Mae).unwrap().rmse, 0.0);
    }

    #[test]
    fn tables_group_by_tag() {
        let mk = |tag: &str, metric, value| Match {
            subject: "s".into(),
            tag: tag.into(),
            metric,
            true_age: 1.0,
            estimated_age: 1.0,
            t: 1.0,
            frame_index: 1,
            value,
        };
        let rows = quality_table(&[
            mk("y", MetricId::Ssim, 0.8),
            mk("x", MetricId::Ssim, 0.9),
            mk("y", MetricId::Ssim, 1.0),
            mk("x", MetricId::Mae, 0.1),
        ]);
        assert_eq!(rows.len(), 3);
        assert_eq!((rows[0].tag.as_str(), rows[0].metric), ("x", MetricId::Mae));
        assert_eq!(rows[2].mean, Some(0.9));
        assert_eq!(rows[2].count, 2);
    }
}
