//! The six similarity measurements used to rank generated frames.
//!
//! All moments are whole-volume and use population (1/N) normalisation;
//! sums run in `f64` in memory order.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, Volume};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum MetricId {
    Mae,
    Ssim,
    Ncc,
    Psnr,
    Nfn,
    Dsc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    LowerBetter,
    HigherBetter,
}

impl MetricId {
    pub const ALL: [MetricId; 6] = [
        MetricId::Mae,
        MetricId::Ssim,
        MetricId::Ncc,
        MetricId::Psnr,
        MetricId::Nfn,
        MetricId::Dsc,
    ];

    /// The five intensity metrics; DSC needs segmentations.
    pub const INTENSITY: [MetricId; 5] = [
        MetricId::Mae,
        MetricId::Ssim,
        MetricId::Ncc,
        MetricId::Psnr,
        MetricId::Nfn,
    ];

    pub fn orientation(self) -> Orientation {
        match self {
            MetricId::Mae | MetricId::Nfn => Orientation::LowerBetter,
            _ => Orientation::HigherBetter,
        }
    }

    pub fn needs_labels(self) -> bool {
        self == MetricId::Dsc
    }

    /// Whether `candidate` strictly beats `incumbent`.
    pub fn is_better(self, candidate: f64, incumbent: f64) -> bool {
        match self.orientation() {
            Orientation::LowerBetter => candidate < incumbent,
            Orientation::HigherBetter => candidate > incumbent,
        }
    }

    /// The value a perfect match attains.
    pub fn perfect_value(self) -> f64 {
        match self {
            MetricId::Mae | MetricId::Nfn => 0.0,
            MetricId::Psnr => f64::INFINITY,
            _ => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricId::Mae => "mae",
            MetricId::Ssim => "ssim",
            MetricId::Ncc => "ncc",
            MetricId::Psnr => "psnr",
            MetricId::Nfn => "nfn",
            MetricId::Dsc => "dsc",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(alloc::format!("unknown metric `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricValue {
    pub metric: MetricId,
    pub value: f64,
}

impl MetricValue {
    pub fn orientation(&self) -> Orientation {
        self.metric.orientation()
    }
}

/// SSIM stabilisers `C1 = (k1 Q)^2`, `C2 = (k2 Q)^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            k1: 0.01,
            k2: 0.02,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn with_range(dynamic_range: f64) -> Self {
        SsimParams {
            dynamic_range,
            ..SsimParams::default()
        }
    }

    pub fn c1(&self) -> f64 {
        let v = self.k1 * self.dynamic_range;
        v * v
    }

    pub fn c2(&self) -> f64 {
        let v = self.k2 * self.dynamic_range;
        v * v
    }

    fn validate(&self) -> Result<()> {
        if self.c1() > 0.0 && self.c2() > 0.0 && self.c1().is_finite() && self.c2().is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("SSIM constants must be positive"))
        }
    }
}

fn pair<'a>(a: &'a Volume, b: &'a Volume) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    a.dims().check_same(b.dims())?;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64, y as f64)))
}

fn mean(v: &Volume) -> f64 {
    v.data().iter().map(|&x| x as f64).sum::<f64>() / v.data().len() as f64
}

/// Mean squared voxel difference.
pub fn mse(a: &Volume, b: &Volume) -> Result<f64> {
    let n = a.data().len() as f64;
    Ok(pair(a, b)?.map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

pub fn mae(a: &Volume, b: &Volume) -> Result<MetricValue> {
    let n = a.data().len() as f64;
    let value = pair(a, b)?.map(|(x, y)| (x - y).abs()).sum::<f64>() / n;
    Ok(MetricValue {
        metric: MetricId::Mae,
        value,
    })
}

pub fn ssim(a: &Volume, b: &Volume, params: &SsimParams) -> Result<MetricValue> {
    params.validate()?;
    a.dims().check_same(b.dims())?;
    let n = a.data().len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for (x, y) in pair(a, b)? {
        let (dx, dy) = (x - ma, y - mb);
        va += dx * dx;
        vb += dy * dy;
        cov += dx * dy;
    }
    let (va, vb, cov) = (va / n, vb / n, cov / n);
    let (c1, c2) = (params.c1(), params.c2());
    let value =
        ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    Ok(MetricValue {
        metric: MetricId::Ssim,
        value,
    })
}

/// Absolute normalised cross-correlation of the mean-centred volumes.
pub fn ncc(a: &Volume, b: &Volume) -> Result<MetricValue> {
    a.dims().check_same(b.dims())?;
    for v in [a, b] {
        let (lo, hi) = v.min_max();
        if lo == hi {
            return Err(Error::ZeroVariance);
        }
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in pair(a, b)? {
        let (dx, dy) = (x - ma, y - mb);
        saa += dx * dx;
        sbb += dy * dy;
        sab += dx * dy;
    }
    let value = (sab.abs() / libm::sqrt(saa * sbb)).min(1.0);
    Ok(MetricValue {
        metric: MetricId::Ncc,
        value,
    })
}

pub fn psnr(a: &Volume, b: &Volume, dynamic_range: f64) -> Result<MetricValue> {
    if !(dynamic_range.is_finite() && dynamic_range > 0.0) {
        return Err(Error::invalid("dynamic range must be positive"));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Err(Error::UnboundedPsnr);
    }
    Ok(MetricValue {
        metric: MetricId::Psnr,
        value: 10.0 * libm::log10(dynamic_range * dynamic_range / m),
    })
}

/// Root-mean-square voxel difference.
pub fn nfn(a: &Volume, b: &Volume) -> Result<MetricValue> {
    Ok(MetricValue {
        metric: MetricId::Nfn,
        value: libm::sqrt(mse(a, b)?),
    })
}

/// Unweighted mean of per-label Dice over `labels` (default: every nonzero
/// label in either volume). Labels absent from both are skipped.
pub fn dsc(a: &LabelVolume, b: &LabelVolume, labels: Option<&[u32]>) -> Result<MetricValue> {
    a.dims().check_same(b.dims())?;
    let set: BTreeSet<u32> = match labels {
        Some(l) => l.iter().copied().filter(|&l| l != 0).collect(),
        None => a.labels().union(&b.labels()).copied().collect(),
    };
    let set: Vec<u32> = set.into_iter().collect();
    let mut counts = alloc::vec![(0usize, 0usize, 0usize); set.len()];
    for (&la, &lb) in a.data().iter().zip(b.data()) {
        if la == 0 && lb == 0 {
            continue;
        }
        if let Ok(i) = set.binary_search(&la) {
            counts[i].0 += 1;
            if la == lb {
                counts[i].2 += 1;
            }
        }
        if let Ok(i) = set.binary_search(&lb) {
            counts[i].1 += 1;
        }
    }
    let dice: Vec<f64> = counts
        .iter()
        .filter(|(na, nb, _)| na + nb > 0)
        .map(|&(na, nb, both)| 2.0 * both as f64 / (na + nb) as f64)
        .collect();
    if dice.is_empty() {
        return Err(Error::NoLabels);
    }
    Ok(MetricValue {
        metric: MetricId::Dsc,
        value: dice.iter().sum::<f64>() / dice.len() as f64,
    })
}

/// Any intensity metric by id, with SSIM/PSNR using `dynamic_range`.
pub fn intensity_metric(
    metric: MetricId,
    a: &Volume,
    b: &Volume,
    dynamic_range: f64,
) -> Result<MetricValue> {
    match metric {
        MetricId::Mae => mae(a, b),
        MetricId::Ssim => ssim(a, b, &SsimParams::with_range(dynamic_range)),
        MetricId::Ncc => ncc(a, b),
        MetricId::Psnr => psnr(a, b, dynamic_range),
        MetricId::Nfn => nfn(a, b),
        MetricId::Dsc => Err(Error::LabelMismatch("DSC is computed on label volumes")),
    }
}

/// Like [`intensity_metric`] but reports an unbounded PSNR as `+inf`, which
/// is how frames are ranked.
pub fn ranking_value(metric: MetricId, a: &Volume, b: &Volume, dynamic_range: f64) -> Result<f64> {
    match intensity_metric(metric, a, b, dynamic_range) {
        Ok(v) => Ok(v.value),
        Err(Error::UnboundedPsnr) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}
