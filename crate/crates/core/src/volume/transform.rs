use alloc::vec::Vec;

use super::sample::nearest_index;
use super::{
    sample_field_unchecked, sample_unchecked, FieldKind, Interpolation, LabelVolume, VectorField,
    Volume,
};
use crate::error::{Error, Result};

/// Affine rescale of intensities onto `[0, 1]`; the dynamic range becomes 1.
pub fn normalize_intensity(vol: &Volume) -> Result<Volume> {
    let (lo, hi) = vol.min_max();
    if hi <= lo {
        return Err(Error::DegenerateRange);
    }
    let (lo, range) = (lo as f64, hi as f64 - lo as f64);
    let data = vol
        .data
        .iter()
        .map(|&v| ((v as f64 - lo) / range) as f32)
        .collect();
    let mut out = vol.with_data(data)?;
    out.dynamic_range = 1.0;
    Ok(out)
}

/// Pull-back warp: `out(p) = vol(p + phi(p))`.
pub fn warp(vol: &Volume, phi: &VectorField, interp: Interpolation) -> Result<Volume> {
    vol.dims.check_same(phi.dims)?;
    phi.expect_kind(FieldKind::Displacement)?;
    let data = phi
        .data
        .iter()
        .zip(vol.dims.points())
        .map(|(u, p)| sample_unchecked(vol, [p[0] + u[0], p[1] + u[1], p[2] + u[2]], interp) as f32)
        .collect();
    vol.with_data(data)
}

/// Pull-back warp of a segmentation. Only nearest-neighbour is allowed.
pub fn warp_labels(
    labels: &LabelVolume,
    phi: &VectorField,
    interp: Interpolation,
) -> Result<LabelVolume> {
    if interp != Interpolation::Nearest {
        return Err(Error::LabelInterpolation);
    }
    labels.dims.check_same(phi.dims)?;
    phi.expect_kind(FieldKind::Displacement)?;
    let dims = labels.dims;
    let data = phi
        .data
        .iter()
        .zip(dims.points())
        .map(|(u, p)| labels.data[nearest_index(dims, [p[0] + u[0], p[1] + u[1], p[2] + u[2]])])
        .collect();
    Ok(LabelVolume {
        dims,
        spacing: labels.spacing,
        data,
    })
}

/// `outer ∘ inner`: `result(p) = inner(p) + outer(p + inner(p))`.
pub fn compose(outer: &VectorField, inner: &VectorField) -> Result<VectorField> {
    outer.dims.check_same(inner.dims)?;
    outer.expect_kind(FieldKind::Displacement)?;
    inner.expect_kind(FieldKind::Displacement)?;
    let data = inner
        .data
        .iter()
        .zip(inner.dims.points())
        .map(|(u, p)| {
            let o = sample_field_unchecked(outer, [p[0] + u[0], p[1] + u[1], p[2] + u[2]]);
            [u[0] + o[0], u[1] + o[1], u[2] + o[2]]
        })
        .collect();
    Ok(VectorField {
        dims: inner.dims,
        spacing: inner.spacing,
        data,
        kind: FieldKind::Displacement,
    })
}

/// Determinant of `∂(p + u)/∂p` per voxel: central differences inside,
/// one-sided on the faces.
pub fn jacobian_determinant(phi: &VectorField) -> Result<Volume> {
    let dims = phi.dims;
    if dims.min_axis() < 3 {
        return Err(Error::GridTooSmall { dims, min: 3 });
    }
    let strides = [1, dims.nx, dims.nx * dims.ny];
    let sizes = dims.as_array();
    let u = &phi.data;
    let mut out = Vec::with_capacity(dims.len());
    for z in 0..dims.nz {
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                let i = dims.index(x, y, z);
                let pos = [x, y, z];
                let mut j = [[0.0f64; 3]; 3];
                for axis in 0..3 {
                    let (s, n, c) = (strides[axis], sizes[axis], pos[axis]);
                    let d = if c == 0 {
                        sub(u[i + s], u[i])
                    } else if c == n - 1 {
                        sub(u[i], u[i - s])
                    } else {
                        let d = sub(u[i + s], u[i - s]);
                        [d[0] * 0.5, d[1] * 0.5, d[2] * 0.5]
                    };
                    for row in 0..3 {
                        j[row][axis] = d[row];
                    }
                }
                for (k, row) in j.iter_mut().enumerate() {
                    row[k] += 1.0;
                }
                out.push(det3(&j) as f32);
            }
        }
    }
    Volume::new(dims, out).map(|v| v.with_spacing(phi.spacing))
}

#[inline]
fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Dims;
    use alloc::vec;

    fn disp(dims: Dims, f: impl FnMut(usize, usize, usize) -> [f64; 3]) -> VectorField {
        VectorField::from_fn(dims, FieldKind::Displacement, f).unwrap()
    }

    #[test]
    fn normalize_rescales() {
        let v = Volume::new(Dims::new(3, 1, 1), vec![0.0, 2.0, 4.0]).unwrap();
        let n = normalize_intensity(&v).unwrap();
        assert_eq!(n.data(), &[0.0, 0.5, 1.0]);
        assert_eq!(n.dynamic_range(), 1.0);
        let again = normalize_intensity(&n).unwrap();
        assert_eq!(again.data(), n.data());
    }

    #[test]
    fn normalize_rejects_constant() {
        let v = Volume::new(Dims::new(3, 1, 1), vec![5.0; 3]).unwrap();
        assert_eq!(normalize_intensity(&v), Err(Error::DegenerateRange));
    }

    #[test]
    fn zero_warp_is_bit_exact() {
        let dims = Dims::new(5, 4, 3);
        let v = Volume::from_fn(dims, |x, y, z| (x * y) as f32 * 0.37 + z as f32 * 1e-3).unwrap();
        let zero = VectorField::zeros(dims, FieldKind::Displacement);
        for interp in [Interpolation::Trilinear, Interpolation::Nearest] {
            let w = warp(&v, &zero, interp).unwrap();
            let same = w.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same);
        }
    }

    #[test]
    fn negative_displacement_moves_content_forward() {
        // Brute-force trace: out(p) = in(p - 1) along x, so the bright voxel at
        // x = k shows up at x = k + 1.
        let dims = Dims::new(8, 3, 3);
        let k = 3;
        let v = Volume::from_fn(dims, |x, y, z| {
            if x == k && y == 1 && z == 1 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let phi = VectorField::constant(dims, [-1.0, 0.0, 0.0], FieldKind::Displacement).unwrap();
        let w = warp(&v, &phi, Interpolation::Trilinear).unwrap();
        let mut bright = vec![];
        for i in 0..dims.len() {
            if w.data()[i] > 0.5 {
                bright.push(dims.coords(i));
            }
        }
        assert_eq!(bright, vec![(k + 1, 1, 1)]);
    }

    #[test]
    fn labels_need_nearest() {
        let dims = Dims::cube(3);
        let l = LabelVolume::new(dims, vec![1; 27]).unwrap();
        let phi = VectorField::zeros(dims, FieldKind::Displacement);
        assert_eq!(
            warp_labels(&l, &phi, Interpolation::Trilinear),
            Err(Error::LabelInterpolation)
        );
        assert_eq!(warp_labels(&l, &phi, Interpolation::Nearest).unwrap(), l);
    }

    #[test]
    fn warp_rejects_mismatch_and_velocity() {
        let v = Volume::filled(Dims::cube(3), 0.0).unwrap();
        let phi = VectorField::zeros(Dims::cube(4), FieldKind::Displacement);
        assert!(matches!(
            warp(&v, &phi, Interpolation::Trilinear),
            Err(Error::DimensionMismatch { .. })
        ));
        let vel = VectorField::zeros(Dims::cube(3), FieldKind::Velocity);
        assert!(matches!(
            warp(&v, &vel, Interpolation::Trilinear),
            Err(Error::FieldKind { .. })
        ));
    }

    #[test]
    fn compose_identity_and_translations() {
        let dims = Dims::cube(6);
        let f = disp(dims, |x, y, z| [0.1 * x as f64, -0.05 * y as f64, 0.02 * (z * x) as f64]);
        let zero = VectorField::zeros(dims, FieldKind::Displacement);
        assert_eq!(compose(&zero, &f).unwrap(), f);
        assert_eq!(compose(&f, &zero).unwrap(), f);
        let a = VectorField::constant(dims, [0.25, -0.5, 0.75], FieldKind::Displacement).unwrap();
        let b = VectorField::constant(dims, [0.5, 0.25, -0.25], FieldKind::Displacement).unwrap();
        let ab = compose(&a, &b).unwrap();
        assert!(ab.data().iter().all(|v| *v == [0.75, -0.25, 0.5]));
    }

    #[test]
    fn jacobian_of_identity_translation_and_stretch() {
        let dims = Dims::cube(5);
        let zero = VectorField::zeros(dims, FieldKind::Displacement);
        assert!(jacobian_determinant(&zero).unwrap().data().iter().all(|&d| d == 1.0));
        let t = VectorField::constant(dims, [1.5, -2.0, 0.3], FieldKind::Displacement).unwrap();
        assert!(jacobian_determinant(&t).unwrap().data().iter().all(|&d| d == 1.0));
        // d/dx (0.1 x) = 0.1 exactly, so det = 1.1 everywhere.
        let s = disp(dims, |x, _, _| [0.1 * x as f64, 0.0, 0.0]);
        let j = jacobian_determinant(&s).unwrap();
        assert!(j.data().iter().all(|&d| (d as f64 - 1.1).abs() < 1e-6));
    }

    #[test]
    fn jacobian_detects_folding() {
        let dims = Dims::new(5, 3, 3);
        let fold = disp(dims, |x, _, _| [-2.0 * x as f64, 0.0, 0.0]);
        let (lo, _) = jacobian_determinant(&fold).unwrap().min_max();
        assert!(lo < 0.0);
        let flat = VectorField::zeros(Dims::new(2, 5, 5), FieldKind::Displacement);
        assert!(matches!(jacobian_determinant(&flat), Err(Error::GridTooSmall { .. })));
    }
}
