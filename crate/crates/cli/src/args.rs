use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sfconf::metrics::BinScheme;
use sfconf::Method;

#[derive(Debug, Parser)]
#[command(
    name = "sfconf",
    version,
    about = "Sampling-free confidence for Gaussian logit fields"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prediction, confidence and uncertainty maps for one field.
    Confidence(ConfidenceArgs),
    /// Calibration report (ACE, ECE, reliability bins) for a confidence map.
    Calibrate(CalibrateArgs),
    /// Per-pixel table of every estimator for the argmax-mean class.
    Compare(CompareArgs),
    /// Maps for a deep ensemble of fields.
    Ensemble(EnsembleArgs),
    /// Times the confidence stage of each method on a random field.
    Bench(BenchArgs),
    /// Synthetic end-to-end pipeline.
    #[command(subcommand)]
    Toy(ToyCommand),
}

#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    #[arg(long, default_value = "lower-bound")]
    pub method: Method,
    /// Samples per pixel for the sampling methods.
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Minimum quadrature points per integral.
    #[arg(long, default_value_t = 101)]
    pub quad_points: usize,
    /// Share one noise pool across all pixels.
    #[arg(long)]
    pub shared_pool: bool,
}

#[derive(Debug, Clone, Args)]
pub struct MapOutputs {
    #[arg(long)]
    pub out_pred: PathBuf,
    #[arg(long)]
    pub out_conf: PathBuf,
    #[arg(long)]
    pub out_unc: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConfidenceArgs {
    #[arg(long)]
    pub means: PathBuf,
    #[arg(long)]
    pub stds: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub out: MapOutputs,
}

#[derive(Debug, Clone, Args)]
pub struct BinArgs {
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, default_value = "equal-width")]
    pub scheme: BinScheme,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub conf: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Label value excluded from every metric.
    #[arg(long)]
    pub ignore: Option<u32>,
    #[command(flatten)]
    pub binning: BinArgs,
    /// Class count for mIoU; inferred from the largest label or prediction
    /// when omitted.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Method name recorded in the report.
    #[arg(long, default_value = "unspecified")]
    pub method: String,
    /// Sample count recorded in the report.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    /// Seed recorded in the report.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_json: PathBuf,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub means: PathBuf,
    #[arg(long)]
    pub stds: PathBuf,
    /// Samples for Monte-Carlo integration and trials for joint sampling.
    #[arg(long, default_value_t = 10_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 50)]
    pub softmax_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 101)]
    pub quad_points: usize,
    #[arg(long)]
    pub out_csv: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// One member as `MEANS,STDS`; repeat for every member.
    #[arg(long = "member", required = true, value_parser = parse_member)]
    pub members: Vec<(PathBuf, PathBuf)>,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub out: MapOutputs,
    /// Labels for an optional calibration report.
    #[arg(long, requires = "out_json")]
    pub labels: Option<PathBuf>,
    #[arg(long, requires = "labels")]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub ignore: Option<u32>,
    #[command(flatten)]
    pub binning: BinArgs,
}

fn parse_member(s: &str) -> Result<(PathBuf, PathBuf), String> {
    match s.split_once(',') {
        Some((m, sd)) if !m.is_empty() && !sd.is_empty() => Ok((m.into(), sd.into())),
        _ => Err(format!("expected MEANS,STDS, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 64 * 1024)]
    pub pixels: usize,
    #[arg(long, value_delimiter = ',', default_value = "lower-bound,softmax-avg")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out_json: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ToyCommand {
    /// Trains the Gaussian-head and point-estimate models on one seed.
    Train(ToyTrainArgs),
    /// Evaluates a trained run: maps, reports and a summary table.
    Eval(ToyEvalArgs),
    /// Trains one Gaussian-head model per seed and evaluates the ensemble.
    Ensemble(ToyEnsembleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ToyTrainingArgs {
    #[arg(long, default_value_t = 20_000)]
    pub train_size: usize,
    #[arg(long, default_value_t = 100_000)]
    pub test_size: usize,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Logit samples per example in the training loss.
    #[arg(long, default_value_t = 30)]
    pub loss_samples: usize,
    /// Use 150 loss samples per example.
    #[arg(long, conflicts_with = "loss_samples")]
    pub full_samples: bool,
}

#[derive(Debug, Args)]
pub struct ToyTrainArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub training: ToyTrainingArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ToyEvalArgs {
    /// Directory written by `toy train`.
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Samples for softmax averaging.
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[command(flatten)]
    pub binning: BinArgs,
    /// Defaults to the run directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ToyEnsembleArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    /// Seed of the shared train and test splits.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[command(flatten)]
    pub training: ToyTrainingArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub binning: BinArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}
