//! The `prognosis` command-line pipeline and scoring service.

pub mod commands;
pub mod config;
pub mod run;
pub mod service;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prognosis_core::cohort::CompletenessMode;

#[derive(Debug, Parser)]
#[command(name = "prognosis", version, about = "Interaction-term logistic regression for fatality prognosis")]
#[command(after_help = "Any subcommand also accepts --config FILE with `flag = value` lines; command-line flags win.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a cohort file, apply completeness rules and aggregate to one record per day.
    Ingest(IngestArgs),
    /// Generate a synthetic cohort from the published model.
    Synth(SynthArgs),
    /// Fit one penalized model.
    Fit(FitArgs),
    /// Repeated k-fold cross-validation with random hyperparameter search.
    Cv(CvArgs),
    /// Cross-validate each of the six nested feature sets.
    Table1(Table1Args),
    /// Forward stepwise selection of interaction terms.
    SelectFeatures(SelectArgs),
    /// Choose the decision threshold on scored datasets.
    TuneThreshold(TuneArgs),
    /// Classification metrics of a model on one cohort.
    Evaluate(EvaluateArgs),
    /// Multi-day-ahead forecast evaluation over daily records.
    Forecast(ForecastArgs),
    /// Score one biomarker triple.
    Score(ScoreArgs),
    /// Serve the scoring API (and optionally the UI) over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Completeness {
    PerPatient,
    PerRecord,
}

impl From<Completeness> for CompletenessMode {
    fn from(c: Completeness) -> Self {
        match c {
            Completeness::PerPatient => CompletenessMode::PerPatient,
            Completeness::PerRecord => CompletenessMode::PerRecord,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Cohort CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Cohort label used in reports.
    #[arg(long)]
    pub label: Option<String>,
    /// Header name override, e.g. `--column ldh=LDH_UL`. Repeatable.
    #[arg(long = "column", value_name = "FIELD=HEADER")]
    pub columns: Vec<String>,
    #[arg(long, value_enum, default_value = "per-patient")]
    pub completeness: Completeness,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 485)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.4)]
    pub death_rate: f64,
    #[arg(long, default_value_t = 1.9)]
    pub records_mean: f64,
    #[arg(long, default_value_t = 0.25)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.45)]
    pub spread: f64,
    /// Model probability at which the true risk is one half.
    #[arg(long, default_value_t = 0.5)]
    pub boundary: f64,
    /// Force every patient's final-record death probability.
    #[arg(long)]
    pub final_probability: Option<f64>,
    /// Generate from this model instead of the published one.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "synthetic")]
    pub label: String,
    #[arg(long, default_value = "S")]
    pub id_prefix: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    L1,
    L2,
    None,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "set5")]
    pub feature_set: String,
    #[arg(long, value_enum, default_value = "l2")]
    pub penalty: PenaltyArg,
    /// Inverse regularization strength.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = prognosis_core::glm::DEFAULT_MAX_ITERATIONS)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = prognosis_core::glm::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Also write Wald inference from an unpenalized refit.
    #[arg(long)]
    pub inference: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 100)]
    pub rounds: usize,
    /// Random-search draws per (round, fold) cell.
    #[arg(long, default_value_t = prognosis_core::selection::DEFAULT_DRAWS_PER_FOLD)]
    pub draws: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub no_stratify: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "set5")]
    pub feature_set: String,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct Table1Args {
    #[command(flatten)]
    pub data: DataArgs,
    /// Catalog rows to run, comma separated.
    #[arg(long, default_value = "1,2,3,4,5,6", value_delimiter = ',')]
    pub sets: Vec<usize>,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Cohort scored on each patient's final record. Repeatable.
    #[arg(long = "final")]
    pub final_data: Vec<PathBuf>,
    /// Cohort scored on every daily record. Repeatable.
    #[arg(long = "daily")]
    pub daily_data: Vec<PathBuf>,
    #[arg(long, default_value = "accuracy")]
    pub objective: String,
    /// Comma-separated thresholds; defaults to 0.05, 0.10, …, 0.95.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Override the model's threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Width in days of the lead-time histogram bins.
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub ldh: f64,
    #[arg(long)]
    pub lymphocyte_pct: f64,
    #[arg(long)]
    pub hs_crp: f64,
    /// Also write score.json and a manifest here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Directory of static UI files served at `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

/// Parse, merge the config file, dispatch, and map errors to exit codes.
pub fn main_with_args<I: IntoIterator<Item = OsString>>(argv: I) -> ExitCode {
    let (args, config) = match config::merge_config(argv.into_iter().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2));
        }
    };
    let echo: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::dispatch(cli.command, echo, config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
