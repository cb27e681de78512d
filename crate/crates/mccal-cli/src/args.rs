//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "mccal",
    version,
    about = "Measure and repair miscalibration of MC-dropout uncertainty",
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the toy MC-dropout classifier on synthetic blobs and dump
    /// validation and test logits
    Demo(DemoArgs),
    /// Fit a temperature by NLL minimization on a validation logit dump
    Fit(FitArgs),
    /// Score a test dump uncalibrated and calibrated and write the report
    Evaluate(EvaluateArgs),
    /// Write per-bin reliability tables for one axis, uncalibrated and
    /// calibrated
    Reliability(ReliabilityArgs),
    /// Write rejection-curve data for a descending uncertainty threshold
    /// sweep
    Reject(RejectArgs),
    /// Cross-check the metric implementations against naive oracles
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Confidence,
    Uncertainty,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Directory for val.jsonl and test.jsonl
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Master seed; dataset, initialization, training, and MC sampling
    /// streams are all derived from it
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stochastic forward passes per dumped input
    #[arg(long, default_value_t = 25)]
    pub passes: usize,
    /// Confidence-penalty weight during training
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// Number of blob classes
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Blob spread; larger overlaps the classes more
    #[arg(long, default_value_t = 1.2)]
    pub sigma: f64,
    /// Input dimensions; the blob centers live in the first two, the rest
    /// carry pure noise the net can overfit to
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    /// Training points (kept small so the net overfits)
    #[arg(long, default_value_t = 200)]
    pub train_n: usize,
    /// Validation inputs to dump
    #[arg(long, default_value_t = 2000)]
    pub val_n: usize,
    /// Test inputs to dump
    #[arg(long, default_value_t = 4000)]
    pub test_n: usize,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.2)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Hidden layer width
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    /// Also write the trained net as a checkpoint
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Validation logit dump (line-delimited JSON)
    #[arg(long)]
    pub input: PathBuf,
    /// Where to write the fitted temperature JSON
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub t_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub t_max: f64,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("temp").required(true).args(["temperature", "temperature_file"])))]
pub struct EvaluateArgs {
    /// Test logit dump (line-delimited JSON)
    #[arg(long)]
    pub input: PathBuf,
    /// Where to write the calibration report JSON
    #[arg(long)]
    pub output: PathBuf,
    /// Temperature to evaluate at
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Read the temperature from a fit output file
    #[arg(long)]
    pub temperature_file: Option<PathBuf>,
    #[arg(long, default_value_t = mccal::binning::DEFAULT_BINS)]
    pub bins: usize,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("temp").required(true).args(["temperature", "temperature_file"])))]
pub struct ReliabilityArgs {
    /// Test logit dump (line-delimited JSON)
    #[arg(long)]
    pub input: PathBuf,
    /// Where to write the table
    #[arg(long)]
    pub output: PathBuf,
    /// Binning axis
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Temperature for the calibrated table
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Read the temperature from a fit output file
    #[arg(long)]
    pub temperature_file: Option<PathBuf>,
    #[arg(long, default_value_t = mccal::binning::DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("temp").args(["temperature", "temperature_file"])))]
pub struct RejectArgs {
    /// Test logit dump (line-delimited JSON)
    #[arg(long)]
    pub input: PathBuf,
    /// Where to write the curve
    #[arg(long)]
    pub output: PathBuf,
    /// Temperature for an additional calibrated curve
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Read the temperature from a fit output file
    #[arg(long)]
    pub temperature_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Randomized instances for the binning cross-check
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,
    /// Largest record count per instance
    #[arg(long, default_value_t = 500)]
    pub max_n: usize,
}
