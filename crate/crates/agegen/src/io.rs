//! Format dispatch on the file extension: `.nii`/`.nii.gz` or `.raw`.

use std::path::Path;

use agegen_core::volume::{FieldKind, LabelVolume, VectorField, Volume};

use crate::error::{AppError, Result};
use crate::{nifti_io, raw};

fn unsupported(path: &Path) -> AppError {
    AppError::format(path, "unsupported extension; expected .nii, .nii.gz or .raw")
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    if nifti_io::is_nifti(path) {
        nifti_io::read_volume(path)
    } else if raw::is_raw(path) {
        raw::read_volume(path)
    } else {
        Err(unsupported(path))
    }
}

pub fn write_volume(path: &Path, vol: &Volume) -> Result<()> {
    if nifti_io::is_nifti(path) {
        nifti_io::write_volume(path, vol)
    } else if raw::is_raw(path) {
        raw::write_volume(path, vol)
    } else {
        Err(unsupported(path))
    }
}

/// Labels are NIfTI only.
pub fn read_labels(path: &Path) -> Result<LabelVolume> {
    if nifti_io::is_nifti(path) {
        nifti_io::read_labels(path)
    } else {
        Err(AppError::format(path, "label volumes must be .nii or .nii.gz"))
    }
}

pub fn write_labels(path: &Path, labels: &LabelVolume) -> Result<()> {
    if nifti_io::is_nifti(path) {
        nifti_io::write_labels(path, labels)
    } else {
        Err(AppError::format(path, "label volumes must be .nii or .nii.gz"))
    }
}

pub fn read_field(path: &Path, kind: FieldKind) -> Result<VectorField> {
    if nifti_io::is_nifti(path) {
        nifti_io::read_field(path, kind)
    } else if raw::is_raw(path) {
        raw::read_field(path, kind)
    } else {
        Err(unsupported(path))
    }
}

pub fn write_field(path: &Path, field: &VectorField) -> Result<()> {
    if nifti_io::is_nifti(path) {
        nifti_io::write_field(path, field)
    } else if raw::is_raw(path) {
        raw::write_field(path, field)
    } else {
        Err(unsupported(path))
    }
}

/// The velocity field at `path`, checked against the grid of `reference`.
pub fn load_velocity_field(path: &Path, reference: Option<&Volume>) -> Result<VectorField> {
    let v = read_field(path, FieldKind::Velocity)?;
    if let Some(r) = reference {
        if r.dims() != v.dims() {
            return Err(agegen_core::Error::DimensionMismatch {
                left: v.dims(),
                right: r.dims(),
            }
            .into());
        }
    }
    Ok(v)
}
