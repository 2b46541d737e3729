//! Classical log-domain demons estimator of a stationary velocity field.
//!
//! Coarse to fine over a factor-2 box pyramid. At each iteration the moving
//! image is warped by `exp(v)`, the symmetric (Thirion) demons force is
//! smoothed into an update, added to `v`, and `v` itself is smoothed. The
//! returned field is the best one seen in the SSD sense, so the warped-moving
//! SSD never exceeds the unregistered SSD and is non-increasing across levels.

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{downsample, gradient, smooth_field, upsample_field};
use crate::svf::exp_field_scaling_squaring;
use crate::volume::{warp, Dims, FieldKind, Interpolation, VectorField, Volume};

/// Smallest per-axis size a pyramid level may have.
const MIN_LEVEL_SIZE: usize = 8;
/// Denominator guard of the demons force.
const FORCE_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DemonsParams {
    /// Iterations per pyramid level.
    pub iterations: u32,
    pub update_smoothing_sigma: f64,
    pub field_smoothing_sigma: f64,
    pub step_scale: f64,
    pub multiresolution_levels: u32,
}

impl Default for DemonsParams {
    fn default() -> Self {
        DemonsParams {
            iterations: 200,
            update_smoothing_sigma: 2.0,
            field_smoothing_sigma: 1.0,
            step_scale: 0.5,
            multiresolution_levels: 3,
        }
    }
}

impl DemonsParams {
    pub fn validate(&self) -> Result<()> {
        let sigmas = [self.update_smoothing_sigma, self.field_smoothing_sigma];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("smoothing sigmas must be non-negative"));
        }
        if self.multiresolution_levels == 0 {
            return Err(Error::invalid("at least one multiresolution level is required"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be positive"));
        }
        if !(self.step_scale.is_finite() && self.step_scale > 0.0) {
            return Err(Error::invalid("step_scale must be positive"));
        }
        Ok(())
    }
}

/// The estimate plus its convergence trace.
#[derive(Clone, Debug)]
pub struct DemonsOutcome {
    pub velocity: VectorField,
    /// Full-resolution SSD of the unregistered pair.
    pub initial_ssd: f64,
    /// Full-resolution SSD of the best field after each level, coarse first.
    pub level_ssd: Vec<f64>,
}

/// Sum of squared voxel differences.
pub fn ssd(a: &Volume, b: &Volume) -> Result<f64> {
    a.dims().check_same(b.dims())?;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum())
}

/// Squarings that bring the scaled field under half a voxel.
fn squarings_for(v: &VectorField) -> u32 {
    let mut k = 6;
    let mut scaled = v.max_norm() / 64.0;
    while scaled > 0.5 && k < 20 {
        k += 1;
        scaled *= 0.5;
    }
    k
}

pub(crate) fn deformation(v: &VectorField) -> Result<VectorField> {
    exp_field_scaling_squaring(v, squarings_for(v))
}

fn warped_ssd(moving: &Volume, fixed: &Volume, v: &VectorField) -> Result<f64> {
    let w = warp(moving, &deformation(v)?, Interpolation::Trilinear)?;
    ssd(&w, fixed)
}

fn build_pyramid(vol: &Volume, levels: usize) -> Result<Vec<Volume>> {
    let mut out = alloc::vec![vol.clone()];
    while out.len() < levels {
        let last = out.last().expect("non-empty");
        if last.dims().min_axis() / 2 < MIN_LEVEL_SIZE {
            break;
        }
        out.push(downsample(last)?);
    }
    out.reverse();
    Ok(out)
}

fn demons_update(warped: &Volume, fixed: &Volume) -> Vec<[f64; 3]> {
    let dims = warped.dims();
    let w: Vec<f64> = warped.data().iter().map(|&x| x as f64).collect();
    let g = gradient(dims, &w);
    g.iter()
        .zip(&w)
        .zip(fixed.data())
        .map(|((g, &wv), &fv)| {
            let diff = fv as f64 - wv;
            let denom = g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + diff * diff;
            if denom < FORCE_EPSILON {
                [0.0; 3]
            } else {
                let s = diff / denom;
                [s * g[0], s * g[1], s * g[2]]
            }
        })
        .collect()
}

fn resample_to(v: &VectorField, dims: Dims) -> VectorField {
    let mut v = v.clone();
    while v.dims() != dims {
        let fine = next_finer(v.dims(), dims);
        v = upsample_field(&v, fine);
    }
    v
}

/// The pyramid level above `coarse` on the way to `target`.
fn next_finer(coarse: Dims, target: Dims) -> Dims {
    let mut d = target;
    loop {
        let half = crate::filter::half_dims(d);
        if half == coarse {
            return d;
        }
        d = half;
    }
}

/// Velocity field `v` such that `moving ∘ exp(v)` approximates `fixed`.
pub fn estimate_svf(moving: &Volume, fixed: &Volume, params: &DemonsParams) -> Result<VectorField> {
    estimate_svf_traced(moving, fixed, params).map(|o| o.velocity)
}

pub fn estimate_svf_traced(
    moving: &Volume,
    fixed: &Volume,
    params: &DemonsParams,
) -> Result<DemonsOutcome> {
    params.validate()?;
    moving.dims().check_same(fixed.dims())?;
    if !moving.is_normalized() || !fixed.is_normalized() {
        return Err(Error::NotNormalized);
    }
    let full = moving.dims();
    let levels = params.multiresolution_levels as usize;
    let moving_pyr = build_pyramid(moving, levels)?;
    let fixed_pyr = build_pyramid(fixed, levels)?;

    let initial_ssd = ssd(moving, fixed)?;
    let mut best_full = VectorField::zeros(full, FieldKind::Velocity).with_spacing(moving.spacing());
    let mut best_full_ssd = initial_ssd;
    let mut level_ssd = Vec::with_capacity(moving_pyr.len());

    let mut v = VectorField::zeros(moving_pyr[0].dims(), FieldKind::Velocity);
    for (mv, fx) in moving_pyr.iter().zip(&fixed_pyr) {
        if v.dims() != mv.dims() {
            v = upsample_field(&v, mv.dims());
        }
        let mut best_v = v.clone();
        let mut best_ssd = f64::INFINITY;
        for it in 0..=params.iterations {
            let warped = warp(mv, &deformation(&v)?, Interpolation::Trilinear)?;
            let cost = ssd(&warped, fx)?;
            if cost < best_ssd {
                best_ssd = cost;
                best_v = v.clone();
            }
            if it == params.iterations {
                break;
            }
            let update = VectorField::new(mv.dims(), demons_update(&warped, fx), FieldKind::Velocity)?;
            let update = smooth_field(&update, params.update_smoothing_sigma);
            let mut next = v;
            for (a, u) in next.data_mut().iter_mut().zip(update.data()) {
                for c in 0..3 {
                    a[c] += params.step_scale * u[c];
                }
            }
            v = smooth_field(&next, params.field_smoothing_sigma);
        }
        v = best_v;
        let candidate = resample_to(&v, full).with_spacing(moving.spacing());
        let cost = warped_ssd(moving, fixed, &candidate)?;
        if cost <= best_full_ssd {
            best_full_ssd = cost;
            best_full = candidate;
        }
        level_ssd.push(best_full_ssd);
    }
    Ok(DemonsOutcome {
        velocity: best_full,
        initial_ssd,
        level_ssd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(dims: Dims, cx: f64) -> Volume {
        Volume::from_fn(dims, |x, y, z| {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - 8.0).powi(2) + (z as f64 - 8.0).powi(2);
            (0.9 * libm::exp(-d2 / 18.0)) as f32
        })
        .unwrap()
    }

    #[test]
    fn identical_inputs_give_zero_field() {
        let v = blob(Dims::cube(16), 8.0);
        let p = DemonsParams {
            iterations: 10,
            ..DemonsParams::default()
        };
        let out = estimate_svf_traced(&v, &v, &p).unwrap();
        assert!(out.velocity.max_norm() < 1e-3);
        assert_eq!(out.initial_ssd, 0.0);
    }

    #[test]
    fn rejects_unnormalised_and_mismatched() {
        let a = blob(Dims::cube(16), 8.0);
        let b = Volume::filled(Dims::cube(16), 2.0).unwrap();
        assert_eq!(
            estimate_svf(&a, &b, &DemonsParams::default()).unwrap_err(),
            Error::NotNormalized
        );
        let c = blob(Dims::cube(12), 6.0);
        assert!(matches!(
            estimate_svf(&a, &c, &DemonsParams::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad = DemonsParams {
            multiresolution_levels: 0,
            ..DemonsParams::default()
        };
        assert!(estimate_svf(&a, &a, &bad).is_err());
    }

    #[test]
    fn improves_ssd_and_is_deterministic() {
        let dims = Dims::cube(16);
        let (m, f) = (blob(dims, 7.0), blob(dims, 8.0));
        let p = DemonsParams {
            iterations: 40,
            multiresolution_levels: 2,
            ..DemonsParams::default()
        };
        let a = estimate_svf_traced(&m, &f, &p).unwrap();
        let b = estimate_svf_traced(&m, &f, &p).unwrap();
        assert_eq!(a.velocity, b.velocity);
        assert!(a.level_ssd.windows(2).all(|w| w[1] <= w[0]));
        assert!(*a.level_ssd.last().unwrap() < 0.2 * a.initial_ssd);
    }

    #[test]
    fn pyramid_respects_minimum_size() {
        let v = Volume::filled(Dims::cube(20), 0.5).unwrap();
        let p = build_pyramid(&v, 5).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].dims(), Dims::cube(10));
        assert_eq!(next_finer(Dims::cube(10), Dims::cube(20)), Dims::cube(20));
        assert_eq!(next_finer(Dims::cube(5), Dims::cube(20)), Dims::cube(10));
    }
}
