//! `igp` command line front end.

mod artifact;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "igp", version, about = "Integral-kernel Gaussian process estimation over mixed spatial supports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one of the synthetic fold scenarios.
    Synth(SynthArgs),
    /// Learn kernel hyperparameters from a sample file.
    Fit(FitArgs),
    /// Posterior mean and standard deviation at query supports.
    Predict(PredictArgs),
    /// Fuse a block model with interval assays from the bench above.
    Fuse(FuseArgs),
    /// Compare a field against reference assays.
    Validate(ValidateArgs),
    /// Attach material classes (and optionally P(HG)) to a field.
    Classify(ClassifyArgs),
    /// Run both synthetic scenarios over several seeds and tabulate the arms.
    Repro(ReproArgs),
}

#[derive(Args, Serialize, Clone)]
pub struct OptimArgs {
    /// Kernel family: se, exp, matern32, matern52.
    #[arg(long, default_value = "matern32")]
    pub kernel: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of optimizer starts.
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    /// Box constraints, e.g. `ls=1e-6:1e3,amp=1e-6:5,noise=1e-6:5`
    /// (`amp` and `noise` bound the standard deviations).
    #[arg(long)]
    pub bounds: Option<String>,
    /// Where start points are drawn: `bounds` or the data-scaled `search` box.
    #[arg(long, default_value = "bounds")]
    pub init: String,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
}

#[derive(Args, Serialize)]
pub struct SynthArgs {
    /// Scenario 1 (fold) or 2 (compressed fold).
    #[arg(long, default_value_t = 1)]
    pub scenario: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Resolution of truth_grid.csv as `nx,ny`.
    #[arg(long, default_value = "252,148")]
    pub grid: String,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct FitArgs {
    /// Training sample CSV.
    #[arg(long = "train")]
    #[serde(skip)]
    pub train: Vec<PathBuf>,
    /// Collapse every support to its centroid before fitting.
    #[arg(long)]
    pub points: bool,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct PredictArgs {
    /// Model file written by `fit`.
    #[arg(long)]
    #[serde(skip)]
    pub model: PathBuf,
    /// Training sample CSV (repeatable).
    #[arg(long = "train")]
    #[serde(skip)]
    pub train: Vec<PathBuf>,
    /// Query supports; only the geometry columns are used.
    #[arg(long)]
    #[serde(skip)]
    pub query: PathBuf,
    /// Collapse training and query supports to centroids.
    #[arg(long)]
    pub points: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct FuseArgs {
    /// Block model CSV with grid metadata comments.
    #[arg(long)]
    #[serde(skip)]
    pub epr: PathBuf,
    /// Interval assays CSV.
    #[arg(long)]
    #[serde(skip)]
    pub bh: PathBuf,
    /// Elevation Z of the top of the drilled bench.
    #[arg(long, allow_hyphen_values = true)]
    pub z: f64,
    /// Floor for the block noise.
    #[arg(long, default_value_t = igp::fusion::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Neighbourhood radius in cells for assay counts.
    #[arg(long, default_value_t = 0)]
    pub radius: usize,
    /// Horizontal subdivision factor of the output blocks.
    #[arg(long, default_value_t = 1)]
    pub subdiv: usize,
    /// Ignore the block values and predict from assays alone.
    #[arg(long)]
    pub no_epr: bool,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct ValidateArgs {
    /// Field CSV (`mean` column) or sample CSV (`value` column).
    #[arg(long)]
    #[serde(skip)]
    pub field: PathBuf,
    /// Reference samples; averaged within each field cell.
    #[arg(long)]
    #[serde(skip)]
    pub reference: PathBuf,
    #[arg(long, default_value = "55,60")]
    pub thresholds: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the summary to this file.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    #[serde(skip)]
    pub field: PathBuf,
    #[arg(long, default_value = "55,60")]
    pub thresholds: String,
    /// Add a `p_hg` column, the probability of exceeding the upper threshold.
    #[arg(long)]
    pub hg_prob: bool,
    /// Report labels that change under these alternative thresholds.
    #[arg(long)]
    pub compare: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct ReproArgs {
    /// Scenarios to run, comma separated.
    #[arg(long, default_value = "1,2")]
    pub scenarios: String,
    /// Number of seeds, starting at `--seed`.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "matern32")]
    pub kernel: String,
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    /// Where start points are drawn: `search` or `bounds`.
    #[arg(long, default_value = "search")]
    pub init: String,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Fuse(a) => commands::fuse(&a),
        Command::Validate(a) => commands::validate(&a),
        Command::Classify(a) => commands::classify(&a),
        Command::Repro(a) => commands::repro(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
