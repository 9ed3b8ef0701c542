//! CLI for the two-stage estimator, the recycled bootstrap and the Monte
//! Carlo experiment harness. One binary, subcommand style; all file I/O
//! lives here.
//!
//! Exit codes: 0 success, 1 estimation failure, 2 input/config error.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod manifest;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use recycled_sts::Error as LibError;

/// Application error carrying the process exit code.
#[derive(Debug)]
pub enum AppError {
    /// Malformed input or configuration (exit 2).
    Input(String),
    /// Estimation or resampling failure (exit 1).
    Estimation(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Input(_) => 2,
            AppError::Estimation(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            AppError::Input(m) | AppError::Estimation(m) => m,
        }
    }
}

impl From<LibError> for AppError {
    fn from(e: LibError) -> Self {
        match e {
            LibError::UnknownModel(_)
            | LibError::UnknownScheme(_)
            | LibError::InvalidArgument(_)
            | LibError::DimensionMismatch { .. } => AppError::Input(e.to_string()),
            _ => AppError::Estimation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "recycled-sts",
    version,
    about = "Two-stage estimation for hierarchical nonlinear regression with a random-weight (recycled) bootstrap"
)]
pub struct Cli {
    /// Worker thread cap (falls back to RECYCLED_STS_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the two-stage estimator to a dataset.
    Fit(FitArgs),
    /// Fit, then run the recycled bootstrap and build intervals.
    Recycle(RecycleArgs),
    /// Run Monte Carlo experiments from a config file.
    Simulate(SimulateArgs),
    /// Check a weight scheme's moment conditions empirically.
    CheckWeights(CheckWeightsArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset CSV with header `id,time,value`.
    pub data: PathBuf,

    /// Model name: biexp4, singleexp1 or linear1.
    #[arg(long)]
    pub model: String,

    /// Comma-separated initial parameter values (length p).
    #[arg(long)]
    pub init: String,

    /// Output directory (created if absent).
    #[arg(long)]
    pub out: PathBuf,

    /// Solver iteration cap.
    #[arg(long, default_value_t = 200)]
    pub max_iterations: usize,

    /// Number of solver starts (extra starts perturb the initial guess).
    #[arg(long, default_value_t = 1)]
    pub multistart: usize,
}

#[derive(Debug, Args)]
pub struct RecycleArgs {
    #[command(flatten)]
    pub fit: FitArgs,

    /// Bootstrap replicate count.
    #[arg(long = "B", default_value_t = 1000)]
    pub replicates: usize,

    /// Stage I* weight scheme: multinomial, dirichlet or exponential.
    #[arg(long, default_value = "dirichlet")]
    pub inner_weights: String,

    /// Stage II* weight scheme.
    #[arg(long, default_value = "dirichlet")]
    pub outer_weights: String,

    /// Interval coverage target in (0, 1).
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,

    /// Interval method: basic_studentized or percentile.
    #[arg(long, default_value = "basic_studentized")]
    pub ci_method: String,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Test hook: force every weight to 1 (replicates collapse onto the
    /// base estimate).
    #[arg(long, default_value_t = false)]
    pub debug_unit_weights: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment config file (flat key = value schema).
    pub config: PathBuf,

    /// Output directory (created if absent).
    #[arg(long)]
    pub out: PathBuf,

    /// Use the config's paper-scale replication counts.
    #[arg(long, default_value_t = false)]
    pub paper_scale: bool,
}

#[derive(Debug, Args)]
pub struct CheckWeightsArgs {
    /// Scheme name: multinomial, dirichlet or exponential.
    #[arg(long)]
    pub weights: String,

    /// Weight vector length.
    #[arg(long)]
    pub n: usize,

    /// Monte Carlo draw count (>= 10^4).
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Configures the global worker pool from --threads or
/// RECYCLED_STS_THREADS. No-op in sequential builds.
pub fn configure_threads(threads: Option<usize>) -> Result<(), AppError> {
    let requested = match threads {
        Some(t) => Some(t),
        None => match std::env::var("RECYCLED_STS_THREADS") {
            Ok(v) => Some(v.parse::<usize>().map_err(|_| {
                AppError::Input(format!("RECYCLED_STS_THREADS must be an integer, got `{v}`"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(t) = requested {
        if t == 0 {
            return Err(AppError::Input("thread count must be positive".to_string()));
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| AppError::Input(format!("thread pool: {e}")))?;
        #[cfg(not(feature = "parallel"))]
        eprintln!("note: sequential build; --threads ignored");
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), AppError> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Fit(args) => commands::fit::run(&args),
        Command::Recycle(args) => commands::recycle::run(&args),
        Command::Simulate(args) => commands::simulate::run(&args),
        Command::CheckWeights(args) => commands::check_weights::run(&args),
    }
}

/// Parses a comma-separated list of finite numbers.
pub fn parse_number_list(text: &str, what: &str) -> Result<Vec<f64>, AppError> {
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| AppError::Input(format!("{what}: `{tok}` is not a finite number")))
        })
        .collect()
}
