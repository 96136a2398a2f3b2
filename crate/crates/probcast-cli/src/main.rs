//! Command-line front end: generate, train, predict, backtest, detect,
//! plot-data. Every command writes a config log next to its outputs with
//! all effective arguments expanded; `--config` re-runs a command from
//! such a log and reproduces its outputs byte for byte.
//!
//! Set `PROBCAST_LOG` (error/warn/info/debug) to control log verbosity.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "probcast", version, about = "Probabilistic time series forecasting toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic series from a declarative spec (JSON).
    Generate(GenerateArgs),
    /// Train a global estimator and save the model.
    Train(TrainArgs),
    /// Forecast past the end of each series with a saved or configured model.
    Predict(PredictArgs),
    /// Split, train, forecast and score against held-out windows.
    Backtest(BacktestArgs),
    /// Flag improbable observations under a fitted probabilistic model.
    Detect(DetectArgs),
    /// Emit observed history plus forecast quantiles as plot-ready CSV.
    PlotData(PlotDataArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// JSON file holding the generator spec.
    #[arg(long, required_unless_present = "config")]
    spec: Option<PathBuf>,
    /// Output jsonlines file.
    #[arg(long)]
    out: PathBuf,
    /// Override the spec's rng seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Re-run from a previously emitted config log.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EstimatorArgs {
    /// Estimator family: npts | ssm | mlpqr.
    #[arg(long, default_value = "npts")]
    estimator: String,
    /// NPTS decay rate: a number, 'inf', or 'auto'.
    #[arg(long, default_value = "auto")]
    alpha: String,
    /// NPTS: restrict sampling to the same seasonal phase.
    #[arg(long)]
    seasonal: bool,
    /// SSM preset: local_level | level_trend | seasonal.
    #[arg(long, default_value = "local_level")]
    preset: String,
    /// Season length for seasonal models; 0 uses the frequency default.
    #[arg(long, default_value_t = 0)]
    season_length: usize,
    /// Sample paths drawn per forecast.
    #[arg(long, default_value_t = 100)]
    num_paths: usize,
    /// SSM: maximum optimizer iterations.
    #[arg(long, default_value_t = 400)]
    max_iters: usize,
    /// MLP-QR: context window length.
    #[arg(long, default_value_t = 30)]
    context_len: usize,
    /// MLP-QR: hidden layer sizes.
    #[arg(long, default_value = "40,40,40")]
    hidden: String,
    /// MLP-QR: training batches.
    #[arg(long, default_value_t = 5000)]
    batches: usize,
    /// Comma-separated quantile levels.
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    quantiles: String,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, required_unless_present = "config")]
    data: Option<PathBuf>,
    /// Default frequency for records without one (pandas-style token).
    #[arg(long, default_value = "D")]
    freq: String,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Forecast horizon the model is trained for.
    #[arg(long, required_unless_present = "config")]
    pred_len: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the model and config log.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long, required_unless_present = "config")]
    data: Option<PathBuf>,
    #[arg(long, default_value = "D")]
    freq: String,
    /// Directory produced by `train`; replaces the --estimator flags.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(long, required_unless_present_any = ["config", "model"])]
    pred_len: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BacktestArgs {
    #[arg(long, required_unless_present = "config")]
    data: Option<PathBuf>,
    #[arg(long, default_value = "D")]
    freq: String,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(long, required_unless_present = "config")]
    pred_len: Option<usize>,
    /// Rolling evaluation windows (1 = simple split).
    #[arg(long, default_value_t = 1)]
    windows: usize,
    /// Steps between window starts; 0 uses the prediction length.
    #[arg(long, default_value_t = 0)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate sequentially instead of in parallel.
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long, required_unless_present = "config")]
    data: Option<PathBuf>,
    #[arg(long, default_value = "D")]
    freq: String,
    /// Detection scheme: cdf | nll.
    #[arg(long, default_value = "cdf")]
    method: String,
    /// p-value threshold for the cdf method.
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    /// Calibration levels for the nll method.
    #[arg(long, default_value = "0.99,0.999,0.9999")]
    levels: String,
    /// Flagging level for the nll method (one of --levels).
    #[arg(long, default_value_t = 0.99)]
    level: f64,
    /// SSM preset scoring the series.
    #[arg(long, default_value = "local_level")]
    preset: String,
    #[arg(long, default_value_t = 0)]
    season_length: usize,
    #[arg(long, default_value_t = 400)]
    max_iters: usize,
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotDataArgs {
    #[arg(long, required_unless_present = "config")]
    data: Option<PathBuf>,
    #[arg(long, default_value = "D")]
    freq: String,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(long, required_unless_present = "config")]
    pred_len: Option<usize>,
    /// Trailing history steps included before the forecast (0 = 4 horizons).
    #[arg(long, default_value_t = 0)]
    history: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PROBCAST_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Train(args) => commands::train(args),
        Command::Predict(args) => commands::predict(args),
        Command::Backtest(args) => commands::backtest(args),
        Command::Detect(args) => commands::detect(args),
        Command::PlotData(args) => commands::plot_data(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
