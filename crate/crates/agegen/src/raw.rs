//! Little-endian float32 blobs with a JSON sidecar next to them
//! (`x.raw` + `x.json`). Vector fields store the three components
//! interleaved per voxel, x fastest.

use std::fs;
use std::path::{Path, PathBuf};

use agegen_core::volume::{Dims, FieldKind, VectorField, Volume};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RawKind {
    Scalar,
    Velocity,
    Displacement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub dims: [usize; 3],
    pub spacing: [f32; 3],
    pub kind: RawKind,
    pub components: usize,
}

pub fn is_raw(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "raw")
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_blob(path: &Path, sidecar: &Sidecar, values: impl Iterator<Item = f32>) -> Result<()> {
    let bytes: Vec<u8> = values.flat_map(f32::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| AppError::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    fs::write(&side, json + "\n").map_err(|e| AppError::io(&side, e))
}

fn read_blob(path: &Path) -> Result<(Sidecar, Vec<f32>)> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| AppError::io(&side, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| AppError::Parse {
        path: side.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    let expected = sidecar.dims.iter().product::<usize>() * sidecar.components * 4;
    if bytes.len() != expected {
        return Err(AppError::format(
            path,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((sidecar, values))
}

fn dims(s: &Sidecar) -> Dims {
    Dims::new(s.dims[0], s.dims[1], s.dims[2])
}

pub fn write_volume(path: &Path, vol: &Volume) -> Result<()> {
    let sidecar = Sidecar {
        dims: vol.dims().as_array(),
        spacing: vol.spacing(),
        kind: RawKind::Scalar,
        components: 1,
    };
    write_blob(path, &sidecar, vol.data().iter().copied())
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let (s, values) = read_blob(path)?;
    if s.kind != RawKind::Scalar || s.components != 1 {
        return Err(AppError::format(path, "expected a scalar volume"));
    }
    Ok(Volume::new(dims(&s), values)?.with_spacing(s.spacing))
}

/// Components are narrowed to f32.
pub fn write_field(path: &Path, field: &VectorField) -> Result<()> {
    let kind = match field.kind() {
        FieldKind::Velocity => RawKind::Velocity,
        FieldKind::Displacement => RawKind::Displacement,
    };
    let sidecar = Sidecar {
        dims: field.dims().as_array(),
        spacing: field.spacing(),
        kind,
        components: 3,
    };
    write_blob(path, &sidecar, field.data().iter().flat_map(|v| v.map(|c| c as f32)))
}

pub fn read_field(path: &Path, kind: FieldKind) -> Result<VectorField> {
    let (s, values) = read_blob(path)?;
    if s.components != 3 {
        return Err(AppError::format(path, format!("expected 3 components, found {}", s.components)));
    }
    let stored = match s.kind {
        RawKind::Velocity => FieldKind::Velocity,
        RawKind::Displacement => FieldKind::Displacement,
        RawKind::Scalar => return Err(AppError::format(path, "expected 3 components, found a scalar")),
    };
    if stored != kind {
        return Err(AppError::format(path, format!("expected a {kind} field, found {stored}")));
    }
    let data = values
        .chunks_exact(3)
        .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
        .collect();
    Ok(VectorField::new(dims(&s), data, kind)?.with_spacing(s.spacing))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_and_field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let vol = Volume::from_fn(Dims::new(3, 2, 2), |x, y, z| (x * y + z) as f32 / 4.0)
            .unwrap()
            .with_spacing([2.0, 1.0, 1.0]);
        let p = dir.path().join("a.raw");
        write_volume(&p, &vol).unwrap();
        assert_eq!(read_volume(&p).unwrap(), vol);
        assert!(read_field(&p, FieldKind::Velocity).is_err());

        let f = VectorField::from_fn(Dims::new(2, 2, 3), FieldKind::Displacement, |x, y, z| {
            [x as f64 * 0.5, y as f64, -(z as f64)]
        })
        .unwrap();
        let q = dir.path().join("f.raw");
        write_field(&q, &f).unwrap();
        assert_eq!(read_field(&q, FieldKind::Displacement).unwrap(), f);
        assert!(read_field(&q, FieldKind::Velocity).is_err());
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.raw");
        write_volume(&p, &Volume::filled(Dims::cube(2), 0.1).unwrap()).unwrap();
        std::fs::write(&p, [0u8; 12]).unwrap();
        assert!(read_volume(&p).unwrap_err().to_string().contains("expected 32 bytes"));
    }
}
