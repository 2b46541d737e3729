//! Separable Gaussian smoothing, finite-difference gradients and the
//! factor-2 pyramid used by the registration.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::volume::{Dims, VectorField, Volume};

/// Normalised kernel truncated at `ceil(3 sigma)`. `sigma = 0` is the identity.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = libm::ceil(3.0 * sigma) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Convolve every line along `axis`, each copied into an edge-padded buffer.
fn convolve_axis(dims: Dims, src: &[f64], dst: &mut [f64], kernel: &[f64], axis: usize) {
    let (n, stride) = match axis {
        0 => (dims.nx, 1),
        1 => (dims.ny, dims.nx),
        _ => (dims.nz, dims.nx * dims.ny),
    };
    let r = kernel.len() / 2;
    let mut line = vec![0.0; n + 2 * r];
    let block = n * stride;
    for start in (0..src.len()).step_by(block) {
        for offset in 0..stride {
            let first = start + offset;
            for (j, slot) in line.iter_mut().enumerate() {
                let c = j.saturating_sub(r).min(n - 1);
                *slot = src[first + c * stride];
            }
            for c in 0..n {
                let window = &line[c..c + kernel.len()];
                dst[first + c * stride] = window.iter().zip(kernel).map(|(a, w)| a * w).sum();
            }
        }
    }
}

/// Gaussian smoothing with clamp-to-edge boundaries.
pub fn gaussian_smooth(dims: Dims, data: &[f64], sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    if kernel.len() == 1 {
        return data.to_vec();
    }
    let mut a = data.to_vec();
    let mut b = vec![0.0; data.len()];
    for axis in 0..3 {
        convolve_axis(dims, &a, &mut b, &kernel, axis);
        core::mem::swap(&mut a, &mut b);
    }
    a
}

pub fn smooth_volume(vol: &Volume, sigma: f64) -> Result<Volume> {
    let data: Vec<f64> = vol.data().iter().map(|&v| v as f64).collect();
    let out = gaussian_smooth(vol.dims(), &data, sigma);
    vol.with_data(out.into_iter().map(|v| v as f32).collect())
}

/// Componentwise Gaussian smoothing of a vector field.
pub fn smooth_field(field: &VectorField, sigma: f64) -> VectorField {
    if sigma <= 0.0 {
        return field.clone();
    }
    let dims = field.dims();
    let mut out = field.clone();
    for c in 0..3 {
        let comp: Vec<f64> = field.data().iter().map(|v| v[c]).collect();
        let s = gaussian_smooth(dims, &comp, sigma);
        for (v, s) in out.data_mut().iter_mut().zip(s) {
            v[c] = s;
        }
    }
    out
}

/// Central-difference gradient, one-sided on the faces, per voxel.
pub fn gradient(dims: Dims, data: &[f64]) -> Vec<[f64; 3]> {
    let strides = [1, dims.nx, dims.nx * dims.ny];
    let sizes = dims.as_array();
    let mut out = Vec::with_capacity(data.len());
    for z in 0..dims.nz {
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                let i = dims.index(x, y, z);
                let pos = [x, y, z];
                let mut g = [0.0; 3];
                for axis in 0..3 {
                    let (s, n, c) = (strides[axis], sizes[axis], pos[axis]);
                    g[axis] = if n < 2 {
                        0.0
                    } else if c == 0 {
                        data[i + s] - data[i]
                    } else if c == n - 1 {
                        data[i] - data[i - s]
                    } else {
                        0.5 * (data[i + s] - data[i - s])
                    };
                }
                out.push(g);
            }
        }
    }
    out
}

/// Dims after one 2x box reduction (odd sizes round up).
pub fn half_dims(dims: Dims) -> Dims {
    Dims::new(dims.nx.div_ceil(2), dims.ny.div_ceil(2), dims.nz.div_ceil(2))
}

/// 2x2x2 box average; the trailing block of an odd axis averages what exists.
pub fn downsample(vol: &Volume) -> Result<Volume> {
    let dims = vol.dims();
    let coarse = half_dims(dims);
    let mut data = Vec::with_capacity(coarse.len());
    for z in 0..coarse.nz {
        for y in 0..coarse.ny {
            for x in 0..coarse.nx {
                let mut acc = 0.0f64;
                let mut n = 0usize;
                for zz in 2 * z..(2 * z + 2).min(dims.nz) {
                    for yy in 2 * y..(2 * y + 2).min(dims.ny) {
                        for xx in 2 * x..(2 * x + 2).min(dims.nx) {
                            acc += vol.get(xx, yy, zz) as f64;
                            n += 1;
                        }
                    }
                }
                data.push((acc / n as f64) as f32);
            }
        }
    }
    let sp = vol.spacing();
    Volume::new(coarse, data)?
        .with_spacing([sp[0] * 2.0, sp[1] * 2.0, sp[2] * 2.0])
        .with_dynamic_range(vol.dynamic_range())
}

/// Trilinear upsampling of a coarse field onto `fine` dims, displacements
/// scaled by 2. Fine voxel `x` lies at coarse coordinate `(x - 0.5) / 2`.
pub fn upsample_field(field: &VectorField, fine: Dims) -> VectorField {
    let data = fine
        .points()
        .map(|p| {
            let q = [(p[0] - 0.5) * 0.5, (p[1] - 0.5) * 0.5, (p[2] - 0.5) * 0.5];
            let v = crate::volume::sample_field_unchecked(field, q);
            [2.0 * v[0], 2.0 * v[1], 2.0 * v[2]]
        })
        .collect();
    let sp = field.spacing();
    VectorField::new(fine, data, field.kind())
        .expect("interpolated finite values stay finite")
        .with_spacing([sp[0] * 0.5, sp[1] * 0.5, sp[2] * 0.5])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::FieldKind;

    #[test]
    fn kernel_is_normalised_and_symmetric() {
        let k = gaussian_kernel(1.5);
        assert_eq!(k.len(), 11);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..k.len() {
            assert_eq!(k[i], k[k.len() - 1 - i]);
        }
        assert_eq!(gaussian_kernel(0.0), vec![1.0]);
    }

    #[test]
    fn smoothing_preserves_constants_and_mean_shape() {
        let dims = Dims::new(7, 5, 4);
        let c = vec![0.3; dims.len()];
        let s = gaussian_smooth(dims, &c, 2.0);
        assert!(s.iter().all(|v| (v - 0.3).abs() < 1e-12));
        // Linear ramps are preserved away from the clamped faces.
        let ramp: Vec<f64> = dims.points().map(|p| p[0]).collect();
        let dims_big = Dims::new(31, 3, 3);
        let ramp_big: Vec<f64> = dims_big.points().map(|p| p[0]).collect();
        let s = gaussian_smooth(dims_big, &ramp_big, 1.0);
        assert!((s[dims_big.index(15, 1, 1)] - 15.0).abs() < 1e-12);
        assert_eq!(ramp.len(), dims.len());
    }

    #[test]
    fn gradient_of_linear_function() {
        let dims = Dims::new(5, 4, 3);
        let f: Vec<f64> = dims.points().map(|p| 2.0 * p[0] - p[1] + 0.5 * p[2]).collect();
        for g in gradient(dims, &f) {
            assert!((g[0] - 2.0).abs() < 1e-12);
            assert!((g[1] + 1.0).abs() < 1e-12);
            assert!((g[2] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn pyramid_round_trip_of_constant_field() {
        let v = Volume::filled(Dims::new(9, 8, 6), 0.5).unwrap();
        let d = downsample(&v).unwrap();
        assert_eq!(d.dims(), Dims::new(5, 4, 3));
        assert!(d.data().iter().all(|&x| x == 0.5));
        let f = VectorField::constant(Dims::new(5, 4, 3), [0.5, -1.0, 0.25], FieldKind::Velocity)
            .unwrap();
        let up = upsample_field(&f, Dims::new(9, 8, 6));
        assert!(up.data().iter().all(|v| *v == [1.0, -2.0, 0.5]));
    }

    #[test]
    fn upsampling_doubles_a_linear_map() {
        // Coarse u(xc) = 0.1 xc maps to fine u(x) = 2 * 0.1 * (x - 0.5) / 2.
        let coarse = VectorField::from_fn(Dims::new(8, 2, 2), FieldKind::Velocity, |x, _, _| {
            [0.1 * x as f64, 0.0, 0.0]
        })
        .unwrap();
        let up = upsample_field(&coarse, Dims::new(16, 4, 4));
        for x in 1..14 {
            let got = up.get(x, 1, 1)[0];
            assert!((got - 0.1 * (x as f64 - 0.5)).abs() < 1e-12, "x={x} got={got}");
        }
    }
}
