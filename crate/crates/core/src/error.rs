use alloc::string::String;

use crate::volume::Dims;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: Dims, right: Dims },

    #[error("data length {found} does not match dims {dims} ({} voxels)", dims.len())]
    LengthMismatch { dims: Dims, found: usize },

    #[error("non-finite value at voxel {index}")]
    NonFinite { index: usize },

    #[error("non-finite sample point")]
    NonFinitePoint,

    #[error("degenerate intensity range")]
    DegenerateRange,

    #[error("zero variance")]
    ZeroVariance,

    #[error("identical inputs, PSNR unbounded")]
    UnboundedPsnr,

    #[error("no nonzero labels in either volume")]
    NoLabels,

    #[error("label volumes can only be warped with nearest-neighbour interpolation")]
    LabelInterpolation,

    #[error("expected a {expected} field, got a {found} field")]
    FieldKind {
        expected: crate::volume::FieldKind,
        found: crate::volume::FieldKind,
    },

    #[error("grid {dims} too small: need at least {min} voxels per axis")]
    GridTooSmall { dims: Dims, min: usize },

    #[error("input volume is not normalized to [0, 1]")]
    NotNormalized,

    #[error("fixed must be older than moving (age gap {gap})")]
    NonPositiveAgeGap { gap: f64 },

    #[error("cavity of radius {radius} breaches the head ellipsoid at age {age}")]
    CavityBreach { age: f64, radius: f64 },

    #[error("{what} must not be empty")]
    Empty { what: &'static str },

    #[error("metric/label mismatch: {0}")]
    LabelMismatch(&'static str),

    #[error("length mismatch: expected {expected} {what}, found {found}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("degenerate abscissa: regression needs at least 3 points and 2 distinct true ages")]
    DegenerateAbscissa,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// Failures of the numerics themselves, as opposed to malformed or
    /// mismatched inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NonFinitePoint
                | Error::DegenerateRange
                | Error::ZeroVariance
                | Error::UnboundedPsnr
                | Error::DegenerateAbscissa
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
