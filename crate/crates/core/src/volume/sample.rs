use super::{Dims, VectorField, Volume};
use crate::error::{Error, Result};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Interpolation mode. Out-of-grid coordinates always clamp to the edge voxel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Interpolation {
    #[default]
    Trilinear,
    /// Required for label volumes.
    Nearest,
}

trait Lerp: Copy {
    fn lerp(self, other: Self, f: f64) -> Self;
}

impl Lerp for f64 {
    #[inline(always)]
    fn lerp(self, other: f64, f: f64) -> f64 {
        // Exact at nodes, so the identity warp reproduces its input bit for bit.
        if f == 0.0 {
            self
        } else {
            self + f * (other - self)
        }
    }
}

impl Lerp for [f64; 3] {
    #[inline(always)]
    fn lerp(self, other: [f64; 3], f: f64) -> [f64; 3] {
        [
            self[0].lerp(other[0], f),
            self[1].lerp(other[1], f),
            self[2].lerp(other[2], f),
        ]
    }
}

/// Lower node, upper node and fraction along one axis after clamping.
#[inline(always)]
fn cell(c: f64, n: usize) -> (usize, usize, f64) {
    let hi = (n - 1) as f64;
    let c = if c <= 0.0 {
        0.0
    } else if c >= hi {
        hi
    } else {
        c
    };
    let i0 = c as usize;
    if i0 + 1 >= n {
        (n - 1, n - 1, 0.0)
    } else {
        (i0, i0 + 1, c - i0 as f64)
    }
}

#[inline(always)]
fn trilinear<T: Lerp>(dims: Dims, p: [f64; 3], fetch: impl Fn(usize) -> T) -> T {
    let (x0, x1, fx) = cell(p[0], dims.nx);
    let (y0, y1, fy) = cell(p[1], dims.ny);
    let (z0, z1, fz) = cell(p[2], dims.nz);
    let at = |x, y, z| fetch(dims.index(x, y, z));
    let c00 = at(x0, y0, z0).lerp(at(x1, y0, z0), fx);
    let c10 = at(x0, y1, z0).lerp(at(x1, y1, z0), fx);
    let c01 = at(x0, y0, z1).lerp(at(x1, y0, z1), fx);
    let c11 = at(x0, y1, z1).lerp(at(x1, y1, z1), fx);
    let c0 = c00.lerp(c10, fy);
    let c1 = c01.lerp(c11, fy);
    c0.lerp(c1, fz)
}

#[inline(always)]
pub(crate) fn nearest_index(dims: Dims, p: [f64; 3]) -> usize {
    let axis = |c: f64, n: usize| {
        let hi = (n - 1) as f64;
        libm::round(c.clamp(0.0, hi)) as usize
    };
    dims.index(axis(p[0], dims.nx), axis(p[1], dims.ny), axis(p[2], dims.nz))
}

#[inline]
pub(crate) fn sample_unchecked(vol: &Volume, p: [f64; 3], interp: Interpolation) -> f64 {
    match interp {
        Interpolation::Trilinear => trilinear(vol.dims, p, |i| vol.data[i] as f64),
        Interpolation::Nearest => vol.data[nearest_index(vol.dims, p)] as f64,
    }
}

#[inline]
pub(crate) fn sample_field_unchecked(field: &VectorField, p: [f64; 3]) -> [f64; 3] {
    trilinear(field.dims, p, |i| field.data[i])
}

/// Intensity at a continuous voxel coordinate.
pub fn sample(vol: &Volume, point: [f64; 3], interp: Interpolation) -> Result<f32> {
    if !point.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinitePoint);
    }
    Ok(sample_unchecked(vol, point, interp) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn ramp() -> Volume {
        Volume::from_fn(Dims::new(4, 3, 2), |x, y, z| (x + 10 * y + 100 * z) as f32).unwrap()
    }

    #[test]
    fn reproduces_nodes() {
        let v = ramp();
        for interp in [Interpolation::Trilinear, Interpolation::Nearest] {
            assert_eq!(sample(&v, [2.0, 1.0, 1.0], interp).unwrap(), 112.0);
        }
    }

    #[test]
    fn midpoint_is_average() {
        let v = Volume::new(Dims::new(2, 1, 1), vec![0.0, 1.0]).unwrap();
        assert_eq!(sample(&v, [0.5, 0.0, 0.0], Interpolation::Trilinear).unwrap(), 0.5);
    }

    #[test]
    fn clamps_outside() {
        let v = ramp();
        for interp in [Interpolation::Trilinear, Interpolation::Nearest] {
            assert_eq!(sample(&v, [-3.2, 0.0, 0.0], interp).unwrap(), v.get(0, 0, 0));
            assert_eq!(sample(&v, [9.0, 7.0, -1.0], interp).unwrap(), v.get(3, 2, 0));
        }
    }

    #[test]
    fn nearest_rounds() {
        let v = ramp();
        assert_eq!(sample(&v, [1.6, 0.4, 0.0], Interpolation::Nearest).unwrap(), 2.0);
    }

    #[test]
    fn rejects_non_finite() {
        let v = ramp();
        assert_eq!(
            sample(&v, [f64::NAN, 0.0, 0.0], Interpolation::Trilinear),
            Err(Error::NonFinitePoint)
        );
    }

    proptest! {
        #[test]
        fn exact_on_trilinear_functions(
            c in proptest::array::uniform8(-1.0f64..1.0),
            p in proptest::array::uniform3(0.0f64..7.0),
        ) {
            let f = |x: f64, y: f64, z: f64| {
                c[0] + c[1] * x + c[2] * y + c[3] * z
                    + c[4] * x * y + c[5] * y * z + c[6] * x * z + c[7] * x * y * z
            };
            let dims = Dims::cube(8);
            let field = VectorField::from_fn(dims, super::super::FieldKind::Velocity, |x, y, z| {
                let v = f(x as f64, y as f64, z as f64);
                [v, -v, 2.0 * v]
            }).unwrap();
            let got = sample_field_unchecked(&field, p);
            let want = f(p[0], p[1], p[2]);
            prop_assert!((got[0] - want).abs() < 1e-6);
            prop_assert!((got[2] - 2.0 * want).abs() < 1e-6);
        }
    }
}
