//! File formats, configuration, manifests and reports around
//! [`agegen_core`], plus the subcommands of the `agegen` binary.

pub mod cli;
pub mod commands;
pub mod config;
pub mod curves;
pub mod error;
pub mod io;
pub mod listing;
pub mod manifest;
pub mod nifti_io;
pub mod raw;
pub mod report;

pub use error::{AppError, Result};
