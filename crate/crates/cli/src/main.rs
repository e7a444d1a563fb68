mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use poakit::metrics::{EarlyPoint, MetricParams};
use poakit::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "poakit", version, about = "Precursor-of-anomaly detection and PTaPR evaluation")]
pub struct Cli {
    /// Worker threads for forecasting and sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// Index base of timestamps in input and output files.
    #[arg(long, global = true, default_value_t = 0, value_parser = clap::value_parser!(i64).range(0..=1))]
    pub index_base: i64,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with injected precursors and anomalies.
    Synth(SynthArgs),
    /// Split a series chronologically into train and validation parts.
    Split(SplitArgs),
    /// Fit forecasters, rank them on validation data and forecast.
    Forecast(ForecastArgs),
    /// Turn ensemble forecasts into per-timestamp uncertainty scores.
    Score(ScoreArgs),
    /// Choose a threshold by best-F1 search and flag timestamps.
    Detect(DetectArgs),
    /// Evaluate detections against labels.
    Evaluate(EvaluateArgs),
    /// Sensitivity of PTaPR to the early-reward parameters.
    Sweep(SweepArgs),
    /// Consolidate a run directory into summary and plot files.
    Report(ReportArgs),
    /// Run every stage on a dataset directory.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON configuration; defaults are used for missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub series: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    pub train_frac: f64,
    /// Directory receiving train.csv and valid.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    #[arg(long, default_value_t = 100)]
    pub input_len: usize,
    #[arg(long, default_value_t = 24)]
    pub horizon: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Validation series; without it the tail of --train validates.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub test: PathBuf,
    /// Comma-separated members, e.g. `persistence,ar_ols(3),holt_linear(0.5,0.1)`.
    #[arg(long)]
    pub members: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    #[arg(long, default_value = "mse")]
    pub criterion: String,
    #[arg(long, default_value_t = 0.7)]
    pub train_frac: f64,
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Forecast file format: csv or ndjson.
    #[arg(long, default_value = "csv")]
    pub format: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Test forecasts (CSV or NDJSON).
    #[arg(long)]
    pub forecasts: PathBuf,
    /// Validation forecasts used for horizon statistics.
    #[arg(long, conflicts_with = "valid_stats")]
    pub valid_forecasts: Option<PathBuf>,
    /// Precomputed horizon statistics (JSON).
    #[arg(long)]
    pub valid_stats: Option<PathBuf>,
    #[arg(long, default_value = "mean")]
    pub agg: String,
    #[arg(long, default_value = "max")]
    pub collate: String,
    /// Score raw variances instead of normalized ones.
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long, default_value_t = poakit::uncertainty::DEFAULT_EPS_SIGMA)]
    pub eps_sigma: f64,
    /// Timeline length; defaults to the last origin + 1.
    #[arg(long)]
    pub length: Option<usize>,
    /// Internal timestamp of the first timeline row.
    #[arg(long, default_value_t = 0)]
    pub first_timestamp: i64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MetricArgs {
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 7)]
    pub epsilon: usize,
    #[arg(long, default_value_t = 0.001)]
    pub k: f64,
    #[arg(long, default_value_t = 24)]
    pub delta: usize,
    #[arg(long, default_value_t = 0.5)]
    pub tapr_alpha: f64,
    /// Precursor point used for the early reward: earliest or max-reward.
    #[arg(long, default_value = "earliest")]
    pub early_point: String,
    /// Number of evenly spaced θ values in the sweep.
    #[arg(long, default_value_t = 101)]
    pub theta_grid: usize,
}

impl MetricArgs {
    pub fn params(&self) -> Result<MetricParams> {
        let early_point = match self.early_point.as_str() {
            "earliest" => EarlyPoint::Earliest,
            "max-reward" => EarlyPoint::MaxReward,
            other => {
                return Err(Error::invalid(format!(
                    "unknown early point '{other}' (earliest|max-reward)"
                )))
            }
        };
        if self.theta_grid < 2 {
            return Err(Error::invalid("--theta-grid needs at least 2 points"));
        }
        let p = MetricParams {
            theta: self.theta,
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            delta: self.delta,
            epsilon: self.epsilon,
            k: self.k,
            tapr_alpha: self.tapr_alpha,
            early_point,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub grid_n: usize,
    /// ptapr-f1[@θ], ptapr-auc, tapr-f1[@θ] or pointwise-f1.
    #[arg(long, default_value = "ptapr-f1@theta")]
    pub metric: String,
    /// Choose the threshold on these scores instead of the test scores.
    #[arg(long, requires = "tune_labels")]
    pub tune_scores: Option<PathBuf>,
    #[arg(long, requires = "tune_scores")]
    pub tune_labels: Option<PathBuf>,
    #[command(flatten)]
    pub metrics: MetricArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Detection file, or a directory of per-entity detection files.
    #[arg(long)]
    pub detection: PathBuf,
    /// Label file, or a directory of per-entity label files.
    #[arg(long)]
    pub labels: PathBuf,
    /// Comma-separated metric families: ptapr, tapr, pak.
    #[arg(long, default_value = "ptapr,tapr,pak")]
    pub metrics: String,
    #[command(flatten)]
    pub params: MetricArgs,
    /// Report file (or directory in per-entity mode).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_parser = ["k", "epsilon"])]
    pub param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long)]
    pub detection: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[command(flatten)]
    pub params: MetricArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub run_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Directory with train.csv, test.csv and labels.csv.
    #[arg(long)]
    pub data: PathBuf,
    /// Pipeline configuration (JSON); defaults for missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub no_normalize: bool,
    /// Also write validation and test forecast files.
    #[arg(long)]
    pub keep_forecasts: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[E_VALIDATION]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {}", kind.code(), msg);
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}
