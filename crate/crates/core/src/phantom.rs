//! Synthetic aging head: an ellipsoid of tissue around a spherical cavity
//! whose radius grows linearly with age, plus a seeded low-amplitude texture
//! that moves with the object.
//!
//! Labels: 0 background, 1 tissue, 2 cavity.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::gaussian_smooth;
use crate::volume::{Dims, FieldKind, LabelVolume, VectorField, Volume};

pub const BACKGROUND: u32 = 0;
pub const TISSUE: u32 = 1;
pub const CAVITY: u32 = 2;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PhantomSpec {
    pub dims: Dims,
    pub head_center: [f64; 3],
    pub head_semi_axes: [f64; 3],
    /// Offset of the cavity centre from the head centre.
    pub cavity_offset: [f64; 3],
    /// Cavity radius at `reference_age`, in voxels.
    pub cavity_radius: f64,
    /// Voxels of radius per year.
    pub growth_rate: f64,
    pub reference_age: f64,
    pub tissue_intensity: f32,
    pub cavity_intensity: f32,
    pub background_intensity: f32,
    /// Soft-edge Gaussian applied to the rendered image.
    pub edge_sigma: f64,
    pub texture_amplitude: f64,
    pub texture_sigma: f64,
    pub seed: u64,
    /// Rigid shift of the whole object, texture included.
    pub translation: [f64; 3],
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: Dims::cube(64),
            head_center: [31.5, 31.5, 31.5],
            head_semi_axes: [26.0, 22.0, 24.0],
            cavity_offset: [0.0, 0.0, 0.0],
            cavity_radius: 5.0,
            growth_rate: 0.3,
            reference_age: 60.0,
            tissue_intensity: 0.8,
            cavity_intensity: 0.2,
            background_intensity: 0.0,
            edge_sigma: 1.0,
            texture_amplitude: 0.05,
            texture_sigma: 2.0,
            seed: 0,
            translation: [0.0, 0.0, 0.0],
        }
    }
}

impl PhantomSpec {
    pub fn cavity_radius_at(&self, age: f64) -> f64 {
        self.cavity_radius + self.growth_rate * (age - self.reference_age)
    }

    /// Checks everything except the age-dependent cavity fit.
    pub fn validate(&self) -> Result<()> {
        if self.dims.min_axis() < 8 {
            return Err(Error::GridTooSmall {
                dims: self.dims,
                min: 8,
            });
        }
        let intensities = [
            self.tissue_intensity,
            self.cavity_intensity,
            self.background_intensity,
        ];
        if intensities.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("phantom intensities must lie in [0, 1]"));
        }
        if !(0.0..=0.05).contains(&self.texture_amplitude) {
            return Err(Error::invalid("texture amplitude must lie in [0, 0.05]"));
        }
        if [self.edge_sigma, self.texture_sigma].iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("phantom sigmas must be non-negative"));
        }
        for (axis, size) in self.dims.as_array().into_iter().enumerate() {
            let c = self.head_center[axis] + self.translation[axis];
            let a = self.head_semi_axes[axis];
            if !(a.is_finite() && a > 0.0) || c - a < 0.0 || c + a > (size - 1) as f64 {
                return Err(Error::invalid(format!(
                    "head ellipsoid leaves the grid along axis {axis}"
                )));
            }
        }
        Ok(())
    }

    /// Radius must be positive and the sphere strictly inside the ellipsoid.
    pub fn check_cavity(&self, age: f64) -> Result<f64> {
        let r = self.cavity_radius_at(age);
        let off = self.cavity_offset;
        let dist = libm::sqrt(off[0] * off[0] + off[1] * off[1] + off[2] * off[2]);
        let min_axis = self.head_semi_axes.iter().copied().fold(f64::INFINITY, f64::min);
        if !(r.is_finite() && r > 0.0) || dist + r >= min_axis {
            return Err(Error::CavityBreach { age, radius: r });
        }
        Ok(r)
    }
}

/// Seeded noise, smoothed and scaled to a max absolute value of `amplitude`.
fn texture(spec: &PhantomSpec) -> Vec<f64> {
    let dims = spec.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise: Vec<f64> = (0..dims.len()).map(|_| unit(&mut rng) * 2.0 - 1.0).collect();
    let smooth = gaussian_smooth(dims, &noise, spec.texture_sigma);
    let peak = smooth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return alloc::vec![0.0; dims.len()];
    }
    let scale = spec.texture_amplitude / peak;
    smooth.into_iter().map(|v| v * scale).collect()
}

/// Uniform in `[0, 1)` from the top 53 bits.
fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Render the phantom at `age`.
pub fn make_phantom(spec: &PhantomSpec, age: f64) -> Result<(Volume, LabelVolume)> {
    spec.validate()?;
    let radius = spec.check_cavity(age)?;
    let dims = spec.dims;
    let tex = texture(spec);
    let tex_vol = VectorField::new(
        dims,
        tex.iter().map(|&t| [t, 0.0, 0.0]).collect(),
        FieldKind::Displacement,
    )?;
    let hc = [
        spec.head_center[0] + spec.translation[0],
        spec.head_center[1] + spec.translation[1],
        spec.head_center[2] + spec.translation[2],
    ];
    let cc = [
        hc[0] + spec.cavity_offset[0],
        hc[1] + spec.cavity_offset[1],
        hc[2] + spec.cavity_offset[2],
    ];
    let ax = spec.head_semi_axes;
    let mut image = Vec::with_capacity(dims.len());
    let mut labels = Vec::with_capacity(dims.len());
    for p in dims.points() {
        let e = (0..3)
            .map(|i| {
                let d = (p[i] - hc[i]) / ax[i];
                d * d
            })
            .sum::<f64>();
        let r2 = (0..3).map(|i| (p[i] - cc[i]) * (p[i] - cc[i])).sum::<f64>();
        let label = if e > 1.0 {
            BACKGROUND
        } else if r2 <= radius * radius {
            CAVITY
        } else {
            TISSUE
        };
        let base = match label {
            BACKGROUND => spec.background_intensity,
            TISSUE => spec.tissue_intensity,
            _ => spec.cavity_intensity,
        } as f64;
        let value = if label == BACKGROUND {
            base
        } else {
            let q = [p[0] - spec.translation[0], p[1] - spec.translation[1], p[2] - spec.translation[2]];
            base + crate::volume::sample_field_unchecked(&tex_vol, q)[0]
        };
        image.push(value);
        labels.push(label);
    }
    let image = gaussian_smooth(dims, &image, spec.edge_sigma);
    let image = Volume::new(dims, image.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect())?;
    Ok((image, LabelVolume::new(dims, labels)?))
}

/// Gaussian-smoothed seeded noise rescaled so its largest vector norm is
/// `max_norm` voxels. Used as a known velocity field in validation runs.
pub fn random_velocity_field(dims: Dims, sigma: f64, max_norm: f64, seed: u64) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut comps: [Vec<f64>; 3] = Default::default();
    for c in &mut comps {
        let noise: Vec<f64> = (0..dims.len()).map(|_| unit(&mut rng) * 2.0 - 1.0).collect();
        *c = gaussian_smooth(dims, &noise, sigma);
    }
    let data: Vec<[f64; 3]> = (0..dims.len())
        .map(|i| [comps[0][i], comps[1][i], comps[2][i]])
        .collect();
    let field = VectorField::new(dims, data, FieldKind::Velocity).expect("finite noise");
    let peak = field.max_norm();
    if peak == 0.0 {
        return field;
    }
    field.scaled(max_norm / peak)
}
