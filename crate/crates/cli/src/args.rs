use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "LPLAB_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "lplab",
    version,
    about = "Isotropic measures, Lewis position and Gaussian concentration experiments"
)]
pub struct Cli {
    /// Worker threads for Monte Carlo shards.
    #[arg(long, global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,

    /// key=value file with default flag values; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Turn failed checks into exit status 2.
    #[arg(long = "assert", global = true)]
    pub assert_mode: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lewis weights and the isotropic measure of a matrix.
    Lewis(LewisArgs),
    /// Monte Carlo moments I_q of Gaussian vectors.
    Moments(MomentsArgs),
    /// Empirical tail profile of the norm around its center.
    Concentrate(ConcentrateArgs),
    /// Certify one random Gaussian embedding.
    Embed(EmbedArgs),
    /// Largest certified embedding dimension per distortion target.
    Sweep(SweepArgs),
    /// Monte Carlo volume of a unit ball in low dimension.
    Volume(VolumeArgs),
    /// Plot-ready columns from a result file.
    Plot(PlotArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Lewis(_) => "lewis",
            Command::Moments(_) => "moments",
            Command::Concentrate(_) => "concentrate",
            Command::Embed(_) => "embed",
            Command::Sweep(_) => "sweep",
            Command::Volume(_) => "volume",
            Command::Plot(_) => "plot",
        }
    }
}

pub const SUBCOMMANDS: &[&str] = &["lewis", "moments", "concentrate", "embed", "sweep", "volume", "plot"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    /// ±e_i with mass 1/2 each.
    Coordinate,
    /// Isotropic measure from a random Gaussian frame.
    Random,
    /// Measure CSV (theta_1,...,theta_n,mass).
    File,
    /// Lewis position of a matrix file.
    Lewis,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterArg {
    PMean,
    Median,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetArg {
    Greedy,
    Random,
}

#[derive(Debug, Args, Serialize)]
pub struct MeasureArgs {
    #[arg(long, value_enum, default_value = "coordinate")]
    pub measure: MeasureKind,
    /// Dimension for coordinate and random measures.
    #[arg(long)]
    pub n: Option<usize>,
    /// Antipodal pairs of a random measure (default 2n).
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Measure or matrix file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Accept a measure file without the isotropy and total-mass checks.
    #[arg(long)]
    pub no_isotropy_check: bool,
    /// Exponent of the Lewis position (defaults to the command's p).
    #[arg(long)]
    pub lewis_p: Option<f64>,
    /// Seed of a random measure (defaults to --seed).
    #[arg(long)]
    pub measure_seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct LewisArgs {
    /// Matrix file, comma- or whitespace-separated.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the symmetrized measure as CSV.
    #[arg(long)]
    pub measure_out: Option<PathBuf>,
    /// Random vectors for the isometry check.
    #[arg(long, default_value_t = 1000)]
    pub isometry_trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct MomentsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub measure: MeasureArgs,
    /// Exponents of the bodies B_q.
    #[arg(long, value_delimiter = ',', required = true)]
    pub q: Vec<f64>,
    /// Moment order; defaults to q for each body.
    #[arg(long)]
    pub r: Option<f64>,
    /// Orders r for the I_{rq}/I_q ratio check.
    #[arg(long, value_delimiter = ',')]
    pub ratio_r: Vec<f64>,
    /// Also estimate the critical dimension.
    #[arg(long)]
    pub critical: bool,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ConcentrateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub measure: MeasureArgs,
    #[arg(long)]
    pub p: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub eps: Vec<f64>,
    #[arg(long, value_enum, default_value = "p-mean")]
    pub center: CenterArg,
    #[arg(long, default_value_t = 200_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Long-form CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON summary (default: next to --out with a .json extension).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub measure: MeasureArgs,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub eps: f64,
    /// Net mesh (default eps/(4+2 eps)).
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 20_000)]
    pub ip_samples: usize,
    /// Fresh directions for the soundness check.
    #[arg(long, default_value_t = 10_000)]
    pub fresh: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub measure: MeasureArgs,
    #[arg(long)]
    pub p: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.9)]
    pub pass_threshold: f64,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum, default_value = "greedy")]
    pub net: NetArg,
    #[arg(long, default_value_t = 20_000)]
    pub ip_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct VolumeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub measure: MeasureArgs,
    #[arg(long)]
    pub q: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PlotArgs {
    /// Result file written by another subcommand.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
