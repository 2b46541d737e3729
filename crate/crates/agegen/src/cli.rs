//! Argument definitions. Flags override the matching config keys.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "agegen", version, about = "Subject-specific aging sequences from longitudinal scan pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the stationary velocity field between two scans.
    Register(RegisterArgs),
    /// Generate aged frames for every subject in a config file.
    Generate(GenerateArgs),
    /// Match generated frames against ground-truth scans.
    Evaluate(EvaluateArgs),
    /// Write a synthetic phantom series with segmentations.
    Phantom(PhantomArgs),
    /// Print the similarity metrics between two volumes.
    Metrics(MetricsArgs),
    /// Exponentiate a velocity field to a displacement at time t.
    Exp(ExpArgs),
}

#[derive(Debug, Args, Default)]
pub struct DemonsOverrides {
    /// Config file supplying [demons] and `normalize`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<u32>,
    #[arg(long)]
    pub levels: Option<u32>,
    #[arg(long)]
    pub step_scale: Option<f64>,
    #[arg(long)]
    pub update_sigma: Option<f64>,
    #[arg(long)]
    pub field_sigma: Option<f64>,
    /// Rescale both inputs onto [0, 1] first.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub moving: PathBuf,
    #[arg(long)]
    pub fixed: PathBuf,
    /// Output velocity field (.nii, .nii.gz or .raw).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub demons: DemonsOverrides,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Subjects processed concurrently.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: u32,
    #[arg(long)]
    pub initial_s: Option<f64>,
    #[arg(long)]
    pub steps_per_unit: Option<u32>,
    /// `mean` or a metric name.
    #[arg(long)]
    pub stopping: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// A subject manifest; repeat for several subjects.
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    #[arg(long)]
    pub ground_truth: PathBuf,
    /// Directory for the report files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Config file supplying [phantom].
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ages to render, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ages: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long, requires = "labels_b")]
    pub labels_a: Option<PathBuf>,
    #[arg(long, requires = "labels_a")]
    pub labels_b: Option<PathBuf>,
    /// Dynamic range for SSIM and PSNR; defaults to that of `b`.
    #[arg(long)]
    pub range: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExpArgs {
    #[arg(long)]
    pub velocity: PathBuf,
    #[arg(long)]
    pub t: f64,
    /// Output displacement field.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub steps_per_unit: u32,
    /// Also warp this image with the result.
    #[arg(long, requires = "warped")]
    pub image: Option<PathBuf>,
    #[arg(long, requires = "image")]
    pub warped: Option<PathBuf>,
}
