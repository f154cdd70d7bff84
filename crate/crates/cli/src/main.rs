//! `gems`: model selection with incomplete data from the command line.
//!
//! Every subcommand writes its outputs atomically into the output directory
//! together with a `manifest.json` holding the resolved configuration, the
//! seed and the crate version.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gems_core::GemsError;

#[derive(Parser, Debug)]
#[command(name = "gems", version, about = "Model selection for data with missing values")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "GEMS_OUT_DIR", default_value = "gems-out")]
    out: PathBuf,

    /// Root seed; drawn from the clock and logged when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (defaults to the available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Input CSV with a header row.
    pub data: PathBuf,

    /// Token marking a missing cell.
    #[arg(long, default_value = gems_core::io::DEFAULT_NA_TOKEN)]
    pub na: String,

    /// JSON sidecar mapping column names to "categorical" or "continuous".
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select a Gaussian graphical model from a numeric CSV.
    SelectGgm(SelectGgmArgs),
    /// Select predictors of a binary response.
    SelectGlm(SelectGlmArgs),
    /// Learn a strongly decomposable forest over mixed variables.
    LearnForest(LearnForestArgs),
    /// Run a simulation benchmark from a JSON configuration.
    Bench(BenchArgs),
    /// Compare an estimated structure with the truth.
    Metrics(MetricsArgs),
}

#[derive(Args, Debug)]
pub struct SelectGgmArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Extended-BIC parameter (0 gives plain BIC).
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    /// Explicit comma-separated penalties, overriding the automatic grid.
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 20)]
    pub lambda_count: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lambda_min_ratio: f64,
    /// Convergence tolerance on the expected criterion.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Abort when the observed criterion rises instead of flagging it.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug)]
pub struct SelectGlmArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Name of the binary response column.
    #[arg(long)]
    pub response: String,
    /// Monte-Carlo completions per row (30, 50, 100 and 200 are the usual choices).
    #[arg(short, long, default_value_t = 30)]
    pub m: usize,
    #[arg(long, default_value_t = 20)]
    pub lambda_count: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lambda_min_ratio: f64,
    #[arg(long, default_value_t = 20)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = Mode::Forest)]
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Penalty {
    Bic,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Forest,
    Tree,
}

#[derive(Args, Debug)]
pub struct LearnForestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = Penalty::Bic)]
    pub penalty: Penalty,
    #[arg(long, value_enum, default_value_t = Mode::Forest)]
    pub mode: Mode,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Experiment configuration (JSON).
    pub config: PathBuf,
    /// Override the replicate count.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Override the method list (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Keep replicates already recorded in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Estimate: edge-list CSV (columns i,j) or model JSON from select-ggm.
    #[arg(long)]
    pub estimated: PathBuf,
    /// Truth, in the same formats.
    #[arg(long)]
    pub truth: PathBuf,
    /// Number of vertices; required unless a model JSON is given.
    #[arg(long)]
    pub p: Option<usize>,
}

/// Input problems exit with 2, everything else with 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<GemsError>() {
        Some(GemsError::Ingest(_) | GemsError::InvalidInput(_) | GemsError::Shape(_) | GemsError::EmptyRow { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let seed = cli.seed.unwrap_or_else(|| {
        let s = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        log::warn!("no --seed given; using {s}");
        s
    });
    let ctx = commands::Context {
        out: cli.out,
        seed,
        seed_given: cli.seed.is_some(),
    };

    let res = match cli.command {
        Command::SelectGgm(a) => commands::select_ggm(&ctx, &a),
        Command::SelectGlm(a) => commands::select_glm(&ctx, &a),
        Command::LearnForest(a) => commands::learn_forest(&ctx, &a),
        Command::Bench(a) => commands::bench(&ctx, &a),
        Command::Metrics(a) => commands::metrics(&ctx, &a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
