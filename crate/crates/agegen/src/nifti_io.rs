//! NIfTI-1 reading and writing. Volumes are stored as FLOAT32, labels as
//! INT32 and vector fields as 5-D FLOAT64 with intent "vector" and the
//! field kind in `intent_name`.

use std::path::Path;

use agegen_core::volume::{Dims, FieldKind, LabelVolume, VectorField, Volume};
use ndarray::{Array, ArrayD, IxDyn, ShapeBuilder};
use nifti::writer::WriterOptions;
use nifti::{IntoNdArray, NiftiHeader, NiftiObject, NiftiVolume, ReaderOptions};

use crate::error::{AppError, Result};

const INTENT_VECTOR: i16 = 1007;
const UNITS_MM: u8 = 2;

pub fn is_nifti(path: &Path) -> bool {
    let name = path.to_string_lossy();
    name.ends_with(".nii") || name.ends_with(".nii.gz")
}

fn header(spacing: [f32; 3]) -> NiftiHeader {
    let mut pixdim = [1.0f32; 8];
    pixdim[1..4].copy_from_slice(&spacing);
    NiftiHeader {
        pixdim,
        xyzt_units: UNITS_MM,
        ..NiftiHeader::default()
    }
}

fn nifti_err(path: &Path, e: nifti::NiftiError) -> AppError {
    match e {
        nifti::NiftiError::Io(io) => AppError::io(path, io),
        other => AppError::format(path, other.to_string()),
    }
}

/// A logical `[x, y, z, (1, 3)]` array over x-fastest data.
fn array<T>(shape: &[usize], data: Vec<T>) -> ArrayD<T> {
    Array::from_shape_vec(IxDyn(shape).f(), data).expect("shape matches data length")
}

struct Raw {
    header: NiftiHeader,
    shape: Vec<usize>,
    /// x fastest, components slowest.
    data: Vec<f64>,
}

fn read_raw(path: &Path) -> Result<Raw> {
    if !path.exists() {
        return Err(AppError::NotFound(path.to_path_buf()));
    }
    let obj = ReaderOptions::new().read_file(path).map_err(|e| nifti_err(path, e))?;
    let header = obj.header().clone();
    let volume = obj.into_volume();
    let shape: Vec<usize> = volume.dim().iter().map(|&d| d as usize).collect();
    let arr: ArrayD<f64> = volume.into_ndarray::<f64>().map_err(|e| nifti_err(path, e))?;
    // Indexed [x, y, z, ...]; the transpose iterates x fastest.
    let data = arr.t().iter().copied().collect();
    Ok(Raw { header, shape, data })
}

fn spatial(path: &Path, raw: &Raw) -> Result<(Dims, [f32; 3])> {
    if raw.shape.len() < 3 {
        return Err(AppError::format(
            path,
            format!("expected a 3-D grid, got {} dimension(s)", raw.shape.len()),
        ));
    }
    let dims = Dims::new(raw.shape[0], raw.shape[1], raw.shape[2]);
    let p = raw.header.pixdim;
    let spacing = [p[1], p[2], p[3]].map(|s| if s > 0.0 && s.is_finite() { s } else { 1.0 });
    Ok((dims, spacing))
}

fn components(raw: &Raw) -> usize {
    raw.shape.iter().skip(3).product()
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let raw = read_raw(path)?;
    let (dims, spacing) = spatial(path, &raw)?;
    if components(&raw) != 1 {
        return Err(AppError::format(path, "expected a scalar volume"));
    }
    let data = raw.data.iter().map(|&v| v as f32).collect();
    Ok(Volume::new(dims, data)?.with_spacing(spacing))
}

pub fn write_volume(path: &Path, vol: &Volume) -> Result<()> {
    let [nx, ny, nz] = vol.dims().as_array();
    let arr = array(&[nx, ny, nz], vol.data().to_vec());
    WriterOptions::new(path)
        .reference_header(&header(vol.spacing()))
        .write_nifti(&arr)
        .map_err(|e| nifti_err(path, e))
}

pub fn read_labels(path: &Path) -> Result<LabelVolume> {
    let raw = read_raw(path)?;
    let (dims, spacing) = spatial(path, &raw)?;
    if components(&raw) != 1 {
        return Err(AppError::format(path, "expected a scalar label volume"));
    }
    let data = raw
        .data
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as u32)
            } else {
                Err(AppError::format(path, format!("label {v} is not a non-negative integer")))
            }
        })
        .collect::<Result<Vec<u32>>>()?;
    Ok(LabelVolume::new(dims, data)?.with_spacing(spacing))
}

pub fn write_labels(path: &Path, labels: &LabelVolume) -> Result<()> {
    let [nx, ny, nz] = labels.dims().as_array();
    let data = labels
        .data()
        .iter()
        .map(|&l| i32::try_from(l).map_err(|_| AppError::Data(format!("label {l} does not fit INT32"))))
        .collect::<Result<Vec<i32>>>()?;
    WriterOptions::new(path)
        .reference_header(&header(labels.spacing()))
        .write_nifti(&array(&[nx, ny, nz], data))
        .map_err(|e| nifti_err(path, e))
}

fn kind_name(kind: FieldKind) -> &'static [u8] {
    match kind {
        FieldKind::Velocity => b"velocity",
        FieldKind::Displacement => b"displacement",
    }
}

/// Reads a 3-vector field. The stored kind, if any, must equal `kind`.
pub fn read_field(path: &Path, kind: FieldKind) -> Result<VectorField> {
    let raw = read_raw(path)?;
    let (dims, spacing) = spatial(path, &raw)?;
    if components(&raw) != 3 {
        return Err(AppError::format(
            path,
            format!("expected 3 components, found {}", components(&raw)),
        ));
    }
    let name = &raw.header.intent_name;
    let stored = name.iter().position(|&b| b == 0).map_or(&name[..], |end| &name[..end]);
    if !stored.is_empty()
        && stored != kind_name(kind)
        && (stored == kind_name(FieldKind::Velocity) || stored == kind_name(FieldKind::Displacement))
    {
        return Err(AppError::format(
            path,
            format!("expected a {kind} field, found {}", String::from_utf8_lossy(stored)),
        ));
    }
    let n = dims.len();
    let data = (0..n)
        .map(|i| [raw.data[i], raw.data[n + i], raw.data[2 * n + i]])
        .collect();
    Ok(VectorField::new(dims, data, kind)?.with_spacing(spacing))
}

pub fn write_field(path: &Path, field: &VectorField) -> Result<()> {
    let [nx, ny, nz] = field.dims().as_array();
    let n = field.dims().len();
    let mut data = Vec::with_capacity(3 * n);
    for c in 0..3 {
        data.extend(field.data().iter().map(|v| v[c]));
    }
    let mut hdr = header(field.spacing());
    hdr.intent_code = INTENT_VECTOR;
    let name = kind_name(field.kind());
    hdr.intent_name = [0; 16];
    hdr.intent_name[..name.len()].copy_from_slice(name);
    WriterOptions::new(path)
        .reference_header(&hdr)
        .write_nifti(&array(&[nx, ny, nz, 1, 3], data))
        .map_err(|e| nifti_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_round_trip_keeps_layout_and_spacing() {
        let dir = tempfile::tempdir().unwrap();
        let dims = Dims::new(4, 3, 2);
        let vol = Volume::from_fn(dims, |x, y, z| (x + 10 * y + 100 * z) as f32 / 250.0)
            .unwrap()
            .with_spacing([1.0, 1.5, 2.0]);
        for name in ["v.nii", "v.nii.gz"] {
            let p = dir.path().join(name);
            write_volume(&p, &vol).unwrap();
            assert_eq!(read_volume(&p).unwrap(), vol);
        }
    }

    #[test]
    fn field_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let f = VectorField::from_fn(Dims::new(3, 4, 5), FieldKind::Velocity, |x, y, z| {
            [x as f64 * 0.1 + 1e-9, -(y as f64) / 3.0, z as f64 * std::f64::consts::PI]
        })
        .unwrap();
        let p = dir.path().join("v.nii.gz");
        write_field(&p, &f).unwrap();
        assert_eq!(read_field(&p, FieldKind::Velocity).unwrap(), f);
        assert!(read_field(&p, FieldKind::Displacement).is_err());
    }

    #[test]
    fn scalar_file_is_not_a_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.nii");
        write_volume(&p, &Volume::filled(Dims::cube(3), 0.5).unwrap()).unwrap();
        let err = read_field(&p, FieldKind::Velocity).unwrap_err().to_string();
        assert!(err.contains("expected 3 components"), "{err}");
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let l = LabelVolume::from_fn(Dims::cube(4), |x, y, _| (x + y) as u32 % 3).unwrap();
        let p = dir.path().join("l.nii.gz");
        write_labels(&p, &l).unwrap();
        assert_eq!(read_labels(&p).unwrap(), l);
    }

    #[test]
    fn missing_file_is_reported() {
        let err = read_volume(Path::new("/nonexistent/x.nii")).unwrap_err();
        assert!(err.to_string().contains("file not found"));
    }
}
