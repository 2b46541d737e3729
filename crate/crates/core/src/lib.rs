//! Subject-specific aging sequences from a pair of 3D volumes.
//!
//! A stationary velocity field relating a younger (moving) and an older
//! (fixed) scan is integrated to a regular grid of times, every integration
//! time yields a warped frame, and a six-metric quality search picks the
//! stopping point at which the frames are assigned ages under a linear
//! progression model.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO; file formats
//! and the command line live in the `agegen` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod evaluation;
pub mod filter;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod qcm;
pub mod registration;
pub mod svf;
pub mod volume;

pub use error::{Error, Result};
pub use metrics::{MetricId, MetricValue, Orientation, SsimParams};
pub use svf::{IntegrationMethod, IntegrationParams, TimeGrid};
pub use volume::{Dims, FieldKind, Interpolation, LabelVolume, VectorField, Volume};
