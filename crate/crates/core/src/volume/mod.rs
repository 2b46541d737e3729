//! Voxel grids and the geometric operations on them.
//!
//! All grids share one memory layout: x varies fastest, then y, then z
//! (`index = x + nx * (y + ny * z)`), which is also the NIfTI on-disk order.
//! Coordinates are continuous voxel coordinates; voxel `(i, j, k)` sits at
//! `(i, j, k)`. Displacements are stored in voxel units and the deformation
//! they describe is `p -> p + u(p)`, so the zero field is the identity.

mod sample;
mod transform;

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use sample::{sample, Interpolation};
pub use transform::{compose, jacobian_determinant, normalize_intensity, warp, warp_labels};

pub(crate) use sample::{sample_field_unchecked, sample_unchecked};

/// Grid size in voxels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims { nx, ny, nz }
    }

    pub const fn cube(n: usize) -> Self {
        Dims { nx: n, ny: n, nz: n }
    }

    pub const fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn min_axis(&self) -> usize {
        self.nx.min(self.ny).min(self.nz)
    }

    #[inline]
    pub const fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub const fn coords(&self, index: usize) -> (usize, usize, usize) {
        let x = index % self.nx;
        let yz = index / self.nx;
        (x, yz % self.ny, yz / self.ny)
    }

    /// Voxel coordinates in memory order.
    pub fn points(self) -> impl Iterator<Item = [f64; 3]> {
        let Dims { nx, ny, nz } = self;
        (0..nz).flat_map(move |z| {
            (0..ny).flat_map(move |y| (0..nx).map(move |x| [x as f64, y as f64, z as f64]))
        })
    }

    pub fn check_same(self, other: Dims) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left: self,
                right: other,
            })
        }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

fn check_len(dims: Dims, found: usize) -> Result<()> {
    if dims.is_empty() || dims.len() != found {
        return Err(Error::LengthMismatch { dims, found });
    }
    Ok(())
}

/// A scalar intensity volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing: [f32; 3],
    data: Vec<f32>,
    dynamic_range: f32,
}

impl Volume {
    /// Unit spacing and a dynamic range of 1.
    pub fn new(dims: Dims, data: Vec<f32>) -> Result<Self> {
        check_len(dims, data.len())?;
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Volume {
            dims,
            spacing: [1.0; 3],
            data,
            dynamic_range: 1.0,
        })
    }

    pub fn filled(dims: Dims, value: f32) -> Result<Self> {
        Volume::new(dims, vec![value; dims.len()])
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Volume::new(dims, data)
    }

    pub fn with_spacing(mut self, spacing: [f32; 3]) -> Self {
        self.spacing = spacing;
        self
    }

    /// `dynamic_range` is the Q of SSIM/PSNR; it must be positive.
    pub fn with_dynamic_range(mut self, dynamic_range: f32) -> Result<Self> {
        if !(dynamic_range.is_finite() && dynamic_range > 0.0) {
            return Err(Error::invalid("dynamic range must be positive"));
        }
        self.dynamic_range = dynamic_range;
        Ok(self)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn dynamic_range(&self) -> f32 {
        self.dynamic_range
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.dims.index(x, y, z)]
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// True when every intensity lies in `[0, 1]`.
    pub fn is_normalized(&self) -> bool {
        let (lo, hi) = self.min_max();
        lo >= 0.0 && hi <= 1.0
    }

    /// Same geometry, new intensities.
    pub(crate) fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        let mut out = Volume::new(self.dims, data)?;
        out.spacing = self.spacing;
        out.dynamic_range = self.dynamic_range;
        Ok(out)
    }
}

/// Integer segmentation labels. Label 0 is background.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    dims: Dims,
    spacing: [f32; 3],
    data: Vec<u32>,
}

impl LabelVolume {
    pub fn new(dims: Dims, data: Vec<u32>) -> Result<Self> {
        check_len(dims, data.len())?;
        Ok(LabelVolume {
            dims,
            spacing: [1.0; 3],
            data,
        })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> u32) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    data.push(f(x, y, z));
                }
            }
        }
        LabelVolume::new(dims, data)
    }

    pub fn with_spacing(mut self, spacing: [f32; 3]) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u32 {
        self.data[self.dims.index(x, y, z)]
    }

    /// Distinct nonzero labels, ascending.
    pub fn labels(&self) -> BTreeSet<u32> {
        self.data.iter().copied().filter(|&l| l != 0).collect()
    }

    pub fn count(&self, label: u32) -> usize {
        self.data.iter().filter(|&&l| l == label).count()
    }
}

/// What a [`VectorField`] represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FieldKind {
    Velocity,
    Displacement,
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FieldKind::Velocity => "velocity",
            FieldKind::Displacement => "displacement",
        })
    }
}

/// Three components per voxel, in voxel units.
///
/// Components are kept in `f64`: fields are accumulated over many
/// composition steps and the extra precision keeps integration error
/// dominated by the step size rather than by rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    dims: Dims,
    spacing: [f32; 3],
    data: Vec<[f64; 3]>,
    kind: FieldKind,
}

impl VectorField {
    pub fn new(dims: Dims, data: Vec<[f64; 3]>, kind: FieldKind) -> Result<Self> {
        check_len(dims, data.len())?;
        if let Some(index) = data
            .iter()
            .position(|v| !v.iter().all(|c| c.is_finite()))
        {
            return Err(Error::NonFinite { index });
        }
        Ok(VectorField {
            dims,
            spacing: [1.0; 3],
            data,
            kind,
        })
    }

    pub fn zeros(dims: Dims, kind: FieldKind) -> Self {
        VectorField {
            dims,
            spacing: [1.0; 3],
            data: vec![[0.0; 3]; dims.len()],
            kind,
        }
    }

    pub fn constant(dims: Dims, value: [f64; 3], kind: FieldKind) -> Result<Self> {
        VectorField::new(dims, vec![value; dims.len()], kind)
    }

    pub fn from_fn(
        dims: Dims,
        kind: FieldKind,
        mut f: impl FnMut(usize, usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    data.push(f(x, y, z));
                }
            }
        }
        VectorField::new(dims, data, kind)
    }

    pub fn with_spacing(mut self, spacing: [f32; 3]) -> Self {
        self.spacing = spacing;
        self
    }

    /// Reinterpret the same numbers, e.g. a velocity read from disk.
    pub fn with_kind(mut self, kind: FieldKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        self.data[self.dims.index(x, y, z)]
    }

    /// Trilinear value at a continuous voxel coordinate, clamped to the grid.
    pub fn sample(&self, point: [f64; 3]) -> Result<[f64; 3]> {
        if !point.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinitePoint);
        }
        Ok(sample_field_unchecked(self, point))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = [v[0] * factor, v[1] * factor, v[2] * factor];
        }
        out
    }

    pub fn negated(&self) -> Self {
        self.scaled(-1.0)
    }

    /// Largest per-voxel Euclidean norm.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|v| norm(*v)).fold(0.0, f64::max)
    }

    /// Largest per-voxel Euclidean distance to `other`.
    pub fn max_distance(&self, other: &VectorField) -> Result<f64> {
        self.dims.check_same(other.dims)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| norm([a[0] - b[0], a[1] - b[1], a[2] - b[2]]))
            .fold(0.0, f64::max))
    }

    /// Arithmetic mean of the components over the voxels where `mask` holds.
    pub fn mean_where(&self, mut mask: impl FnMut(usize) -> bool) -> Option<[f64; 3]> {
        let mut acc = [0.0; 3];
        let mut count = 0usize;
        for (i, v) in self.data.iter().enumerate() {
            if mask(i) {
                for (a, c) in acc.iter_mut().zip(v) {
                    *a += c;
                }
                count += 1;
            }
        }
        (count > 0).then(|| acc.map(|a| a / count as f64))
    }

    pub(crate) fn expect_kind(&self, expected: FieldKind) -> Result<()> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(Error::FieldKind {
                expected,
                found: self.kind,
            })
        }
    }
}

#[inline]
pub(crate) fn norm(v: [f64; 3]) -> f64 {
    libm::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}
