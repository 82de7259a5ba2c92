use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug, Serialize)]
#[command(name = "bae-oed", version, about = "Uncertainty-aware A-optimal sensor placement", args_override_self = true)]
pub struct Cli {
    /// Cap on worker threads everywhere (defaults to all cores).
    #[arg(long, global = true, env = "BAE_OED_THREADS")]
    pub threads: Option<usize>,

    /// key = value file supplying defaults for any long option.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Print the plan, including estimated forward solves, and exit.
    #[arg(long, global = true)]
    pub dry_run: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
pub enum Command {
    /// Build an ensemble of (parameter, accurate output) pairs.
    Sample(SampleArgs),
    /// Estimate approximation-error statistics and save them.
    Stats(StatsArgs),
    /// Greedy sensor selection.
    Design(DesignArgs),
    /// Greedy versus random designs over a range of sensor counts.
    Baseline(BaselineArgs),
    /// Gaussian posterior for a given design and data set.
    Posterior(PosteriorArgs),
    /// Compare designs by MCMC under the accurate model.
    Validate(ValidateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sample(_) => "sample",
            Command::Stats(_) => "stats",
            Command::Design(_) => "design",
            Command::Baseline(_) => "baseline",
            Command::Posterior(_) => "posterior",
            Command::Validate(_) => "validate",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub enum ProblemKind {
    Linear,
    Exp,
    Darcy,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub enum FileFormat {
    Baem,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub enum SourceArg {
    Auto,
    Sample,
    Analytic,
}

/// Built-in forward model selection.
#[derive(Args, Debug, Serialize, Clone)]
pub struct ProblemArgs {
    #[arg(long, value_enum)]
    pub problem: Option<ProblemKind>,
    /// CSV operator for linear/exp problems (otherwise drawn from --problem-seed).
    #[arg(long)]
    pub operator: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub problem_seed: u64,
    #[arg(long, default_value_t = 8)]
    pub n_params: usize,
    #[arg(long, default_value_t = 10)]
    pub sensors: usize,
    #[arg(long, default_value_t = 1)]
    pub times: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Darcy grid nodes per side.
    #[arg(long, default_value_t = 16)]
    pub grid: usize,
    /// Darcy candidate sensor grid, e.g. 8x8.
    #[arg(long, default_value = "8x8")]
    pub sensor_grid: String,
    #[arg(long, default_value_t = 0.125)]
    pub c1: f64,
    #[arg(long, default_value_t = 2.0)]
    pub c2: f64,
    #[arg(long, default_value_t = 0.08)]
    pub c3: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// External forward model run once per parameter row.
    #[arg(long, conflicts_with = "problem")]
    pub black_box: Option<PathBuf>,
    /// Parameter rows for --black-box (BAEM; a CSV matrix also works).
    #[arg(long, requires = "black_box")]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000)]
    pub q: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FileFormat::Baem)]
    pub format: FileFormat,
    /// Black-box timeout per row in seconds.
    #[arg(long, default_value_t = 3600.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 1)]
    pub max_parallel: usize,
    /// Black-box working directory.
    #[arg(long)]
    pub work_dir: Option<PathBuf>,
}

/// Where the error model comes from: a saved statistics file, or an ensemble
/// plus surrogate choice.
#[derive(Args, Debug, Serialize, Clone)]
pub struct ModelArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, conflicts_with = "stats")]
    pub ensemble: Option<PathBuf>,
    /// Saved statistics (BAES) to reuse instead of an ensemble.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Data layout SxT for CSV ensembles.
    #[arg(long)]
    pub layout: Option<String>,
    /// zero | fd | matrix:<csv>
    #[arg(long, default_value = "zero")]
    pub surrogate: String,
    /// Drop the error/parameter cross-covariance.
    #[arg(long)]
    pub enhanced: bool,
    #[arg(long, value_enum, default_value_t = SourceArg::Auto)]
    pub stats_source: SourceArg,
    /// Absolute noise standard deviation (overrides --noise-fraction).
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Noise std as a fraction of the RMS prior-predictive data std.
    #[arg(long, default_value_t = 0.01)]
    pub noise_fraction: f64,
    /// Use only the first Q ensemble rows.
    #[arg(long)]
    pub max_samples: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct StatsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct DesignArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Optimize only the first N parameters (marginalizing the rest).
    #[arg(long)]
    pub marginal: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 100)]
    pub n_random: usize,
    /// Inclusive range A..B or a comma list.
    #[arg(long, default_value = "1..20")]
    pub k_range: String,
    #[arg(long)]
    pub marginal: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct PosteriorArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// design.csv from the design command.
    #[arg(long, conflicts_with = "sensor_list")]
    pub design: Option<PathBuf>,
    /// Comma-separated sensor indices.
    #[arg(long)]
    pub sensor_list: Option<String>,
    /// Full-length observation vector (one value per line or row).
    #[arg(long, conflicts_with = "data_seed")]
    pub data: Option<PathBuf>,
    /// Synthesize data from the problem's prior and noise with this seed.
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Design files (design.csv, or name,sensors rows).
    #[arg(long, required = true, num_args = 1..)]
    pub designs: Vec<PathBuf>,
    /// Extra random designs with the size of the first design.
    #[arg(long, default_value_t = 0)]
    pub n_random: usize,
    #[arg(long, default_value_t = 10)]
    pub data_seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20_000)]
    pub n_steps: usize,
    #[arg(long, default_value_t = 2_000)]
    pub n_burn: usize,
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    #[arg(long, default_value_t = 0.2)]
    pub beta: f64,
    /// Tune beta toward 20–30% acceptance on pilot chains first.
    #[arg(long)]
    pub tune: bool,
    /// Noise std as a fraction of the RMS prior-predictive data std.
    #[arg(long, default_value_t = 0.01)]
    pub noise_fraction: f64,
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Refuse plans with more forward solves than this.
    #[arg(long, default_value_t = 50_000_000)]
    pub max_forward_solves: u128,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}
