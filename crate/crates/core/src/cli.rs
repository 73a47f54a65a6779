//! The `fxcast` command line: `ingest`, `train`, `evaluate`, `backtest` and
//! `report`, all working inside one output directory with a `manifest.json`
//! at its root.
//!
//! Exit codes: 0 success, 2 data errors, 3 training/evaluation errors,
//! 4 missing artifacts, 5 backtest errors, 64 usage errors.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arima::{self, ArimaParams};
use crate::backtest::{self, BacktestConfig, BacktestSummary};
use crate::dataio::{self, Orientation, RateSeries};
use crate::error::Error;
use crate::gboost::{self, EarlyStop, GbcConfig, GbcModel};
use crate::lstm::{self, CellActivation, LstmConfig, LstmModel};
use crate::plot::{self, Series};
use crate::preprocess::{self, ScalerParams, Split, WindowedDataset};
use crate::seed::derive_seed;
use crate::stats::{self, DmResult, HurstResult, MetricsReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_TRAIN: i32 = 3;
pub const EXIT_MISSING: i32 = 4;
pub const EXIT_BACKTEST: i32 = 5;
pub const EXIT_USAGE: i32 = 64;

pub const MANIFEST: &str = "manifest.json";
const LOCKFILE: &str = ".fxcast.lock";
const SERIES: &str = "series.csv";
const LSTM_MODEL: &str = "models/lstm.json";
const GBC_MODEL: &str = "models/gbc.json";
const ARIMA_MODEL: &str = "models/arima.json";
/// Contains wall-clock timings, so it is written but not tracked as a
/// reproducible artifact.
pub const LSTM_LOG: &str = "logs/lstm_train.csv";

const CONFIG_HELP: &str = "\
Configuration file (--config <file>): flat `key=value` lines, one per line,
where each key is the long name of a flag of the subcommand being run
(for example `lstm-epochs=20` or `models=lstm,arima`). `#` starts a comment.
`key=true` sets a boolean switch. Keys not accepted by the subcommand are
ignored, so one file can serve every command. Flags given on the command
line override the file.

Environment: FXCAST_CACHE_DIR sets the download cache used by
`ingest --url` (default `<out>/cache`).";

#[derive(Debug, Parser)]
#[command(name = "fxcast", version, about = "Daily FX rate forecasting and backtesting", after_long_help = CONFIG_HELP, args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, forward-fill and invert a daily OHLC CSV into series.csv.
    Ingest(IngestArgs),
    /// Train the selected models on the chronological training split.
    Train(TrainArgs),
    /// Score test-set forecasts; write metrics, Diebold-Mariano and Hurst results.
    Evaluate(OutArgs),
    /// Replay the classifier's test calls as trades; write the ledger and plots.
    Backtest(BacktestArgs),
    /// Collate everything into report.md.
    Report(OutArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory holding every artifact.
    #[arg(long)]
    pub out: PathBuf,
    /// key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RawOrientation {
    /// Taka per dollar (about 83 to 110).
    UsdBdt,
    /// Dollars per taka (about 0.009 to 0.012).
    BdtUsd,
}

impl From<RawOrientation> for Orientation {
    fn from(r: RawOrientation) -> Self {
        match r {
            RawOrientation::UsdBdt => Orientation::UsdBdt,
            RawOrientation::BdtUsd => Orientation::BdtUsd,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: OutArgs,
    /// Local CSV file.
    #[arg(long, conflicts_with = "url", required_unless_present = "url")]
    pub input: Option<PathBuf>,
    /// Remote CSV, cached under FXCAST_CACHE_DIR.
    #[arg(long)]
    pub url: Option<String>,
    /// Orientation of the raw quotes.
    #[arg(long, value_enum, default_value = "usd-bdt")]
    pub raw_orientation: RawOrientation,
    /// Keep the raw orientation instead of inverting.
    #[arg(long)]
    pub no_invert: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    Gbc,
    Arima,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Gbc => "gbc",
            ModelKind::Arima => "arima",
        }
    }
}

/// What the LSTM sees in each window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LstmInput {
    Rates,
    Returns,
}

/// What the classifier sees in each window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GbcFeatures {
    Returns,
    Rates,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: OutArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "lstm,gbc,arima")]
    pub models: Vec<ModelKind>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub window_len: usize,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Fit the scaler on the whole series (leaks test information).
    #[arg(long)]
    pub unsafe_fit_all: bool,
    /// Write the windowed datasets under features/.
    #[arg(long)]
    pub dump_features: bool,

    #[arg(long, value_enum, default_value = "rates")]
    pub lstm_input: LstmInput,
    #[arg(long, default_value_t = 50)]
    pub lstm_hidden: usize,
    #[arg(long, default_value_t = 50)]
    pub lstm_epochs: usize,
    /// Zero selects full-batch training.
    #[arg(long, default_value_t = 32)]
    pub lstm_batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lstm_lr: f64,
    #[arg(long, value_enum, default_value = "relu")]
    pub lstm_activation: ActivationArg,
    /// Global gradient-norm clip; 0 disables clipping.
    #[arg(long, default_value_t = 5.0)]
    pub lstm_clip: f64,

    #[arg(long, value_enum, default_value = "returns")]
    pub gbc_features: GbcFeatures,
    #[arg(long, default_value_t = 10_000)]
    pub gbc_estimators: usize,
    #[arg(long, default_value_t = 0.01)]
    pub gbc_lr: f64,
    #[arg(long, default_value_t = 3)]
    pub gbc_depth: usize,
    #[arg(long, default_value_t = 5)]
    pub gbc_min_leaf: usize,
    #[arg(long, default_value_t = 0.1)]
    pub gbc_val_fraction: f64,
    #[arg(long, default_value_t = 50)]
    pub gbc_patience: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub gbc_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub common: OutArgs,
    #[arg(long, default_value_t = 10_000.0)]
    pub initial_capital: f64,
    #[arg(long, default_value_t = 10_000.0)]
    pub stake_base: f64,
    /// Histogram bins; defaults to ceil(sqrt(n)).
    #[arg(long)]
    pub bins: Option<usize>,
}

/// Settings that shape training and evaluation, snapshotted into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub models: Vec<ModelKind>,
    pub seed: u64,
    pub window_len: usize,
    pub train_fraction: f64,
    pub unsafe_fit_all: bool,
    pub lstm_input: LstmInput,
    pub lstm: LstmConfig,
    pub gbc_features: GbcFeatures,
    pub gbc: GbcConfig,
}

impl RunConfig {
    fn from_args(a: &TrainArgs) -> Self {
        let mut models = a.models.clone();
        models.sort();
        models.dedup();
        Self {
            models,
            seed: a.seed,
            window_len: a.window_len,
            train_fraction: a.train_fraction,
            unsafe_fit_all: a.unsafe_fit_all,
            lstm_input: a.lstm_input,
            lstm: LstmConfig {
                hidden_units: a.lstm_hidden,
                window_len: a.window_len,
                epochs: a.lstm_epochs,
                batch_size: a.lstm_batch,
                learning_rate: a.lstm_lr,
                cell_activation: match a.lstm_activation {
                    ActivationArg::Relu => CellActivation::Relu,
                    ActivationArg::Tanh => CellActivation::Tanh,
                },
                grad_clip_norm: (a.lstm_clip > 0.0).then_some(a.lstm_clip),
                seed: derive_seed(a.seed, "lstm"),
                ..LstmConfig::default()
            },
            gbc_features: a.gbc_features,
            gbc: GbcConfig {
                n_estimators: a.gbc_estimators,
                learning_rate: a.gbc_lr,
                max_depth: a.gbc_depth,
                min_samples_leaf: a.gbc_min_leaf,
                early_stop: EarlyStop {
                    validation_fraction: a.gbc_val_fraction,
                    patience: a.gbc_patience,
                    tol: a.gbc_tol,
                },
                seed: derive_seed(a.seed, "gbc"),
            },
        }
    }
}

/// Provenance and results, rewritten by every command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub source: Option<String>,
    pub input_sha256: Option<String>,
    pub orientation: Option<Orientation>,
    pub config: Option<RunConfig>,
    pub metrics: BTreeMap<String, MetricsReport>,
    pub backtest: Option<BacktestSummary>,
    pub artifacts: BTreeSet<String>,
}

/// An error together with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: Error,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for CliError {}

trait ExitCode<T> {
    fn code(self, code: i32) -> Result<T, CliError>;
}

impl<T> ExitCode<T> for crate::Result<T> {
    fn code(self, code: i32) -> Result<T, CliError> {
        self.map_err(|error| CliError { code, error })
    }
}

type CliResult<T> = Result<T, CliError>;

fn missing(path: PathBuf) -> CliError {
    CliError {
        code: EXIT_MISSING,
        error: Error::MissingArtifact(path),
    }
}

/// Parses arguments (after merging any `--config` file) and runs the
/// command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match merge_config_file(args) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("fxcast: {msg}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("fxcast: {e}");
            e.code
        }
    }
}

/// Runs a parsed command.
pub fn execute(command: &Command) -> CliResult<()> {
    let out = match command {
        Command::Ingest(a) => &a.common.out,
        Command::Train(a) => &a.common.out,
        Command::Evaluate(a) | Command::Report(a) => &a.out,
        Command::Backtest(a) => &a.common.out,
    };
    fs::create_dir_all(out)
        .map_err(|e| Error::io(format!("creating {}", out.display()), e))
        .code(EXIT_USAGE)?;
    let _lock = Lock::acquire(out)?;
    match command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(&a.out),
        Command::Backtest(a) => cmd_backtest(a),
        Command::Report(a) => cmd_report(&a.out),
    }
}

/// Splices `key=value` lines from `--config <file>` in front of the
/// command-line flags of the selected subcommand.
fn merge_config_file(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut config_path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            config_path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        }
    }
    let Some(path) = config_path else {
        return Ok(args);
    };
    let Some(sub_pos) = strs.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return Ok(args);
    };
    let cmd = Cli::command();
    let Some(sub) = cmd.find_subcommand(&strs[sub_pos]) else {
        return Ok(args);
    };
    let known: BTreeMap<String, bool> = sub
        .get_arguments()
        .filter_map(|a| {
            let takes_value = a.get_action().takes_values();
            a.get_long().map(|l| (l.to_string(), takes_value))
        })
        .collect();
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let mut injected = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{path}:{}: expected key=value", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        if key == "config" {
            continue;
        }
        match known.get(key) {
            Some(true) => {
                injected.push(OsString::from(format!("--{key}")));
                injected.push(OsString::from(value));
            }
            Some(false) => match value {
                "true" => injected.push(OsString::from(format!("--{key}"))),
                "false" => {}
                other => return Err(format!("{path}:{}: {key} expects true or false, got {other}", lineno + 1)),
            },
            None => log::debug!("config key {key} not used by {}", strs[sub_pos]),
        }
    }
    let mut merged = args[..=sub_pos].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(&args[sub_pos + 1..]);
    Ok(merged)
}

struct Lock {
    path: PathBuf,
}

impl Lock {
    fn acquire(out: &Path) -> CliResult<Self> {
        let path = out.join(LOCKFILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) => Err(CliError {
                code: EXIT_USAGE,
                error: Error::io(
                    format!(
                        "{} is locked by another fxcast run (remove {} if stale)",
                        out.display(),
                        path.display()
                    ),
                    e,
                ),
            }),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn load_manifest(out: &Path) -> RunManifest {
    fs::read_to_string(out.join(MANIFEST))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default()
}

fn save_manifest(out: &Path, manifest: &mut RunManifest) -> crate::Result<()> {
    manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    dataio::write_atomic(&out.join(MANIFEST), text.as_bytes())
}

/// Tracks files written by one command so a failure can remove them.
struct Writer<'a> {
    out: &'a Path,
    written: Vec<String>,
}

impl<'a> Writer<'a> {
    fn new(out: &'a Path) -> Self {
        Self {
            out,
            written: Vec::new(),
        }
    }

    fn write(&mut self, rel: &str, contents: &str) -> crate::Result<()> {
        dataio::write_atomic(&self.out.join(rel), contents.as_bytes())?;
        self.written.push(rel.to_string());
        Ok(())
    }

    fn rollback(&self) {
        for rel in &self.written {
            let _ = fs::remove_file(self.out.join(rel));
        }
    }
}

fn read_required(out: &Path, rel: &str) -> CliResult<String> {
    let path = out.join(rel);
    fs::read_to_string(&path).map_err(|_| missing(path))
}

fn load_series(out: &Path, manifest: &RunManifest) -> CliResult<RateSeries> {
    let text = read_required(out, SERIES)?;
    let orientation = manifest.orientation.unwrap_or(Orientation::BdtUsd);
    RateSeries::from_csv(&text, orientation).code(EXIT_DATA)
}

pub fn cmd_ingest(a: &IngestArgs) -> CliResult<()> {
    let out = &a.common.out;
    let (text, source, mut warnings) = match (&a.input, &a.url) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::io(format!("reading {}", path.display()), e))
                .code(EXIT_DATA)?;
            (text, path.display().to_string(), Vec::new())
        }
        (None, Some(url)) => {
            let cache = std::env::var_os("FXCAST_CACHE_DIR")
                .map(PathBuf::from)
                .unwrap_or_else(|| out.join("cache"));
            let fetched = dataio::fetch_remote(url, &cache).code(EXIT_DATA)?;
            (fetched.body, url.clone(), fetched.warnings)
        }
        (None, None) => unreachable!("clap requires --input or --url"),
    };
    let bars = dataio::parse_ohlc_csv(&text).code(EXIT_DATA)?;
    let violations = dataio::ohlc_violations(&bars);
    let filled = dataio::forward_fill(&bars).code(EXIT_DATA)?;
    let raw = RateSeries::from_bars(&filled.bars, a.raw_orientation.into()).code(EXIT_DATA)?;
    let series = if a.no_invert {
        raw
    } else {
        dataio::invert_rates(&raw).code(EXIT_DATA)?
    };
    if !filled.report.duplicate_dates.is_empty() {
        warnings.push(format!(
            "{} duplicate dates resolved by keeping the last row",
            filled.report.duplicate_dates.len()
        ));
    }

    #[derive(Serialize)]
    struct Validation<'a> {
        rows_parsed: usize,
        rows_kept: usize,
        dropped_rows: &'a [chrono::NaiveDate],
        duplicate_dates: &'a [chrono::NaiveDate],
        filled_cells: usize,
        ohlc_violations: &'a [chrono::NaiveDate],
        orientation: Orientation,
        warnings: &'a [String],
    }
    let validation = Validation {
        rows_parsed: bars.len(),
        rows_kept: series.len(),
        dropped_rows: &filled.report.dropped_leading,
        duplicate_dates: &filled.report.duplicate_dates,
        filled_cells: filled.report.filled_cells,
        ohlc_violations: &violations,
        orientation: series.orientation(),
        warnings: &warnings,
    };
    let mut w = Writer::new(out);
    let result = (|| -> crate::Result<()> {
        w.write(SERIES, &series.to_csv())?;
        w.write("validation.json", &(serde_json::to_string_pretty(&validation)? + "\n"))?;
        let mut manifest = RunManifest {
            source: Some(source),
            input_sha256: Some(hex::encode(Sha256::digest(text.as_bytes()))),
            orientation: Some(series.orientation()),
            ..RunManifest::default()
        };
        manifest.artifacts.extend(w.written.iter().cloned());
        save_manifest(out, &mut manifest)
    })();
    if result.is_err() {
        w.rollback();
    }
    result.code(EXIT_DATA)
}

/// Everything derived from the series and run configuration that both
/// training and evaluation need.
struct Prepared {
    levels: Vec<f64>,
    returns: Vec<f64>,
    /// LSTM view: windows over the (scaled) input series.
    lstm_windows: WindowedDataset,
    lstm_split: Split,
    scaler: ScalerParams,
    /// Classifier view.
    gbc: preprocess::LabeledDataset,
    gbc_split: Split,
    /// Level index of the first LSTM test target; ARIMA trains on levels before it.
    first_test_level: usize,
}

fn prepare(series: &RateSeries, cfg: &RunConfig) -> crate::Result<Prepared> {
    let levels = series.values().to_vec();
    let returns = preprocess::daily_returns(&levels)?;
    let w = cfg.window_len;

    let (lstm_source, level_offset) = match cfg.lstm_input {
        LstmInput::Rates => (&levels, 0),
        LstmInput::Returns => (&returns, 1),
    };
    let n_lstm = lstm_source.len().checked_sub(w).filter(|&n| n > 0).ok_or(Error::InsufficientData {
        needed: w + 1 + level_offset,
        got: levels.len(),
    })?;
    let lstm_split = preprocess::chrono_split(n_lstm, cfg.train_fraction)?;
    let fit_values = if cfg.unsafe_fit_all {
        &lstm_source[..]
    } else {
        &lstm_source[..lstm_split.train.end + w]
    };
    let scaler = preprocess::minmax_fit(fit_values)?;
    let scaled = preprocess::minmax_transform(&scaler, lstm_source);
    let lstm_windows = preprocess::sliding_windows(&scaled, w)?;

    let gbc = match cfg.gbc_features {
        GbcFeatures::Returns => preprocess::labeled_windows(&returns, w)?,
        GbcFeatures::Rates => {
            // Levels up to and including the one the label's return starts from.
            let scaled_levels = preprocess::minmax_transform(&preprocess::minmax_fit(&levels[..])?, &levels);
            let base = preprocess::labeled_windows(&returns, w)?;
            preprocess::LabeledDataset {
                features: base
                    .origin_indices
                    .iter()
                    .map(|&j| scaled_levels[j + 1 - w..=j].to_vec())
                    .collect(),
                ..base
            }
        }
    };
    let gbc_split = preprocess::chrono_split(gbc.len(), cfg.train_fraction)?;
    let first_test_level = lstm_windows.origin_indices[lstm_split.test.start] + level_offset;
    Ok(Prepared {
        levels,
        returns,
        lstm_windows,
        lstm_split,
        scaler,
        gbc,
        gbc_split,
        first_test_level,
    })
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let out = &a.common.out;
    let mut manifest = load_manifest(out);
    let series = load_series(out, &manifest)?;
    let cfg = RunConfig::from_args(a);
    if cfg.models.is_empty() {
        return Err(CliError {
            code: EXIT_USAGE,
            error: Error::Config("no models selected".into()),
        });
    }
    let mut w = Writer::new(out);
    let result = train_models(&series, &cfg, a.dump_features, &mut w);
    match result {
        Ok(()) => {
            manifest.config = Some(cfg);
            // Results from an earlier configuration no longer apply.
            manifest.metrics.clear();
            manifest.backtest = None;
            manifest.artifacts.retain(|p| p == SERIES || p == "validation.json");
            manifest.artifacts.extend(w.written.iter().filter(|p| *p != LSTM_LOG).cloned());
            save_manifest(out, &mut manifest).code(EXIT_TRAIN)
        }
        Err(e) => {
            w.rollback();
            Err(e)
        }
    }
}

fn train_models(series: &RateSeries, cfg: &RunConfig, dump: bool, w: &mut Writer<'_>) -> CliResult<()> {
    let prep = prepare(series, cfg).code(EXIT_TRAIN)?;
    if dump {
        w.write("features/lstm_windows.csv", &prep.lstm_windows.to_csv()).code(EXIT_TRAIN)?;
        let gbc_dump = WindowedDataset {
            inputs: prep.gbc.features.clone(),
            targets: prep.gbc.labels.iter().map(|&l| f64::from(l)).collect(),
            window_len: cfg.window_len,
            origin_indices: prep.gbc.origin_indices.clone(),
        };
        w.write("features/gbc_windows.csv", &gbc_dump.to_csv()).code(EXIT_TRAIN)?;
    }
    for model in &cfg.models {
        match model {
            ModelKind::Lstm => {
                let train = prep.lstm_windows.slice(prep.lstm_split.train.clone());
                let mut lstm_cfg = cfg.lstm.clone();
                if lstm_cfg.batch_size == 0 {
                    lstm_cfg.batch_size = train.len();
                }
                let (params, history) = lstm::train(&train, &lstm_cfg).code(EXIT_TRAIN)?;
                let saved = LstmModel::new(lstm_cfg, Some(prep.scaler), &params);
                w.write(LSTM_MODEL, &(saved.to_json().code(EXIT_TRAIN)? + "\n")).code(EXIT_TRAIN)?;
                w.write(LSTM_LOG, &history.to_csv()).code(EXIT_TRAIN)?;
            }
            ModelKind::Gbc => {
                let train = prep.gbc.slice(prep.gbc_split.train.clone());
                let model = gboost::train(&train.features, &train.labels, &cfg.gbc).code(EXIT_TRAIN)?;
                w.write(GBC_MODEL, &(model.to_json().code(EXIT_TRAIN)? + "\n")).code(EXIT_TRAIN)?;
            }
            ModelKind::Arima => {
                let fit = arima::fit_css(&prep.levels[..prep.first_test_level]).code(EXIT_TRAIN)?;
                w.write(ARIMA_MODEL, &(fit.params.to_json().code(EXIT_TRAIN)? + "\n")).code(EXIT_TRAIN)?;
            }
        }
    }
    Ok(())
}

fn run_config(manifest: &RunManifest, out: &Path) -> CliResult<RunConfig> {
    manifest.config.clone().ok_or_else(|| missing(out.join(MANIFEST)))
}

/// Level forecasts aligned to level indices.
struct LevelForecast {
    indices: Vec<usize>,
    actual: Vec<f64>,
    forecast: Vec<f64>,
}

fn lstm_forecast(out: &Path, prep: &Prepared, cfg: &RunConfig) -> CliResult<LevelForecast> {
    let model = LstmModel::from_json(&read_required(out, LSTM_MODEL)?).code(EXIT_MISSING)?;
    let params = model.to_params().code(EXIT_MISSING)?;
    let scaler = model.scaler.unwrap_or(prep.scaler);
    let test = prep.lstm_windows.slice(prep.lstm_split.test.clone());
    let preds = lstm::predict_series(&params, &scaler, &test, &model.config).code(EXIT_TRAIN)?;
    let (indices, forecast) = match cfg.lstm_input {
        LstmInput::Rates => (test.origin_indices.clone(), preds),
        LstmInput::Returns => {
            // Return j links level j to level j + 1.
            let idx: Vec<usize> = test.origin_indices.iter().map(|&j| j + 1).collect();
            let f = idx
                .iter()
                .zip(&preds)
                .map(|(&t, r)| prep.levels[t - 1] * (1.0 + r))
                .collect();
            (idx, f)
        }
    };
    let actual = indices.iter().map(|&t| prep.levels[t]).collect();
    Ok(LevelForecast {
        indices,
        actual,
        forecast,
    })
}

fn arima_forecast(out: &Path, prep: &Prepared) -> CliResult<LevelForecast> {
    let params = ArimaParams::from_json(&read_required(out, ARIMA_MODEL)?).code(EXIT_MISSING)?;
    let start = prep.first_test_level;
    let forecast = arima::rolling_forecasts(&params, &prep.levels, start).code(EXIT_TRAIN)?;
    let indices: Vec<usize> = (start..prep.levels.len()).collect();
    Ok(LevelForecast {
        actual: prep.levels[start..].to_vec(),
        indices,
        forecast,
    })
}

struct GbcTest {
    model: GbcModel,
    margins: Vec<f64>,
    labels: Vec<u8>,
    preds: Vec<u8>,
    returns: Vec<f64>,
    indices: Vec<usize>,
}

fn gbc_test(out: &Path, prep: &Prepared, cfg: &RunConfig) -> CliResult<GbcTest> {
    let model = GbcModel::from_json(&read_required(out, GBC_MODEL)?).code(EXIT_MISSING)?;
    let test = prep.gbc.slice(prep.gbc_split.test.clone());
    let margins = gboost::predict_margin(&model, &test.features, Some(cfg.window_len)).code(EXIT_TRAIN)?;
    let preds = margins.iter().map(|&m| gboost::label_from_margin(m)).collect();
    Ok(GbcTest {
        returns: test.origin_indices.iter().map(|&j| prep.returns[j]).collect(),
        indices: test.origin_indices,
        labels: test.labels,
        model,
        margins,
        preds,
    })
}

/// Pseudo-accuracy `100·(1 - RMSE/mean|target|)`; a non-authoritative
/// reading of an accuracy figure for a regressor.
pub fn pseudo_accuracy(rmse: f64, targets: &[f64]) -> f64 {
    let mean_abs = targets.iter().map(|t| t.abs()).sum::<f64>() / targets.len() as f64;
    100.0 * (1.0 - rmse / mean_abs)
}

pub fn cmd_evaluate(out: &Path) -> CliResult<()> {
    let mut manifest = load_manifest(out);
    let cfg = run_config(&manifest, out)?;
    let series = load_series(out, &manifest)?;
    let prep = prepare(&series, &cfg).code(EXIT_TRAIN)?;
    let mut w = Writer::new(out);
    let mut metrics = BTreeMap::new();
    let mut csv_rows = vec![stats::METRICS_CSV_HEADER.to_string()];
    let mut extra = BTreeMap::new();

    let lstm = if cfg.models.contains(&ModelKind::Lstm) {
        Some(lstm_forecast(out, &prep, &cfg)?)
    } else {
        None
    };
    let arima = if cfg.models.contains(&ModelKind::Arima) {
        Some(arima_forecast(out, &prep)?)
    } else {
        None
    };
    let gbc = if cfg.models.contains(&ModelKind::Gbc) {
        Some(gbc_test(out, &prep, &cfg)?)
    } else {
        None
    };

    let result = (|| -> crate::Result<()> {
        for (name, fc) in [("lstm", &lstm), ("arima", &arima)] {
            let Some(fc) = fc else { continue };
            let report = MetricsReport::for_forecast(&fc.forecast, &fc.actual)?;
            csv_rows.push(report.csv_row(name));
            extra.insert(
                format!("{name}_pseudo_accuracy_pct_non_authoritative"),
                pseudo_accuracy(report.rmse, &fc.actual),
            );
            w.write(
                &format!("predictions/{name}.csv"),
                &arima::forecast_csv(&fc.indices, &fc.actual, &fc.forecast),
            )?;
            metrics.insert(name.to_string(), report);
        }
        if let Some(g) = &gbc {
            // Diagnostic only: a classifier scored as a regressor on its margins
            // against ±1 labels; direction accuracy is the hit rate of its calls.
            let signed: Vec<f64> = g.labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
            let report = MetricsReport {
                rmse: stats::rmse(&g.margins, &signed)?,
                mae: stats::mae(&g.margins, &signed)?,
                directional_accuracy: stats::label_accuracy(&g.preds, &g.labels)?,
                n: g.labels.len(),
            };
            csv_rows.push(report.csv_row("gbc_diagnostic"));
            extra.insert("gbc_n_stages_used".to_string(), g.model.n_stages_used as f64);
            w.write("predictions/gbc.csv", &gboost::predictions_csv(&g.indices, &g.margins))?;
            metrics.insert("gbc_diagnostic".to_string(), report);
        }
        w.write("metrics.csv", &(csv_rows.join("\n") + "\n"))?;

        #[derive(Serialize)]
        struct MetricsJson<'a> {
            models: &'a BTreeMap<String, MetricsReport>,
            notes: &'a BTreeMap<String, f64>,
        }
        w.write(
            "metrics.json",
            &(serde_json::to_string_pretty(&MetricsJson {
                models: &metrics,
                notes: &extra,
            })? + "\n"),
        )?;

        if let (Some(l), Some(ar)) = (&lstm, &arima) {
            let dm = dm_lstm_vs_arima(l, ar)?;
            w.write("dm.json", &(serde_json::to_string_pretty(&dm)? + "\n"))?;
        }
        let hurst = stats::hurst_exponent(&prep.levels)?;
        w.write("hurst.json", &(serde_json::to_string_pretty(&hurst)? + "\n"))?;
        Ok(())
    })();
    if let Err(e) = result {
        w.rollback();
        return Err(CliError {
            code: EXIT_TRAIN,
            error: e,
        });
    }
    manifest.metrics = metrics;
    manifest.artifacts.extend(w.written.iter().cloned());
    save_manifest(out, &mut manifest).code(EXIT_TRAIN)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DmReport {
    pub model_a: String,
    pub model_b: String,
    pub loss: String,
    #[serde(flatten)]
    pub result: DmResult,
}

fn dm_lstm_vs_arima(lstm: &LevelForecast, arima: &LevelForecast) -> crate::Result<DmReport> {
    let arima_at: BTreeMap<usize, (f64, f64)> = arima
        .indices
        .iter()
        .zip(arima.forecast.iter().zip(&arima.actual))
        .map(|(&i, (&f, &a))| (i, (f, a)))
        .collect();
    let mut la = Vec::new();
    let mut lb = Vec::new();
    for ((i, f), a) in lstm.indices.iter().zip(&lstm.forecast).zip(&lstm.actual) {
        if let Some((fa, _)) = arima_at.get(i) {
            la.push((f - a) * (f - a));
            lb.push((fa - a) * (fa - a));
        }
    }
    Ok(DmReport {
        model_a: "lstm".into(),
        model_b: "arima".into(),
        loss: "squared_error".into(),
        result: stats::diebold_mariano(&la, &lb, 1)?,
    })
}

pub fn cmd_backtest(a: &BacktestArgs) -> CliResult<()> {
    let out = &a.common.out;
    let mut manifest = load_manifest(out);
    let cfg = run_config(&manifest, out)?;
    if !cfg.models.contains(&ModelKind::Gbc) {
        return Err(missing(out.join(GBC_MODEL)));
    }
    let series = load_series(out, &manifest)?;
    let prep = prepare(&series, &cfg).code(EXIT_BACKTEST)?;
    let g = gbc_test(out, &prep, &cfg)?;
    let bt_cfg = BacktestConfig {
        initial_capital: a.initial_capital,
        stake_base: a.stake_base,
    };
    let ledger = backtest::run_backtest(&g.returns, &g.labels, &g.preds, &bt_cfg).code(EXIT_BACKTEST)?;
    let summary = backtest::summarize(&ledger, &bt_cfg).code(EXIT_BACKTEST)?;

    let mut w = Writer::new(out);
    let result = (|| -> crate::Result<()> {
        w.write("backtest/ledger.csv", &backtest::ledger_csv(&ledger))?;
        w.write("backtest/summary.json", &(serde_json::to_string_pretty(&summary)? + "\n"))?;
        let curve = backtest::equity_curve(&ledger);
        w.write(
            "plots/equity.svg",
            &plot::line_chart("Equity curve", &[Series { name: "equity", values: &curve }]),
        )?;
        w.write(
            "plots/returns_hist.svg",
            &plot::histogram("Test-period daily returns", &g.returns, a.bins),
        )?;
        let overlay = forecast_overlay(out, &prep, &cfg)?;
        w.write("plots/forecast_overlay.svg", &overlay)?;
        Ok(())
    })();
    if let Err(e) = result {
        w.rollback();
        return Err(CliError {
            code: EXIT_BACKTEST,
            error: e,
        });
    }
    manifest.backtest = Some(summary);
    manifest.artifacts.extend(w.written.iter().cloned());
    save_manifest(out, &mut manifest).code(EXIT_BACKTEST)
}

/// Actual test-period levels with whichever level forecasts exist.
fn forecast_overlay(out: &Path, prep: &Prepared, cfg: &RunConfig) -> crate::Result<String> {
    let read = |name: &str| -> Option<Vec<f64>> {
        let text = fs::read_to_string(out.join(format!("predictions/{name}.csv"))).ok()?;
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        reader
            .records()
            .map(|r| r.ok()?.get(2)?.parse::<f64>().ok())
            .collect()
    };
    let actual = &prep.levels[prep.first_test_level..];
    let mut series = vec![Series {
        name: "actual",
        values: actual,
    }];
    let lstm = cfg.models.contains(&ModelKind::Lstm).then(|| read("lstm")).flatten();
    let arima = cfg.models.contains(&ModelKind::Arima).then(|| read("arima")).flatten();
    if let Some(v) = &lstm {
        series.push(Series { name: "lstm", values: v });
    }
    if let Some(v) = &arima {
        series.push(Series { name: "arima", values: v });
    }
    Ok(plot::line_chart("Test period: actual vs forecast", &series))
}

pub fn cmd_report(out: &Path) -> CliResult<()> {
    let mut manifest = load_manifest(out);
    let cfg = run_config(&manifest, out)?;
    let manifest_bytes = read_required(out, MANIFEST)?;
    let manifest_hash = hex::encode(Sha256::digest(manifest_bytes.as_bytes()));
    let hurst: HurstResult = serde_json::from_str(&read_required(out, "hurst.json")?).map_err(Error::from).code(EXIT_MISSING)?;
    let dm: Option<DmReport> = match fs::read_to_string(out.join("dm.json")) {
        Ok(t) => Some(serde_json::from_str(&t).map_err(Error::from).code(EXIT_MISSING)?),
        Err(_) => None,
    };
    if manifest.metrics.is_empty() {
        return Err(missing(out.join("metrics.json")));
    }
    let needs_backtest = cfg.models.contains(&ModelKind::Gbc);
    if needs_backtest && manifest.backtest.is_none() {
        return Err(missing(out.join("backtest/summary.json")));
    }

    let mut md = String::new();
    md.push_str("# fxcast run report\n\n");
    md.push_str(&format!("Manifest SHA-256: `{manifest_hash}`\n\n"));
    if let Some(src) = &manifest.source {
        md.push_str(&format!("Source: `{src}`\n\n"));
    }
    if let Some(h) = &manifest.input_sha256 {
        md.push_str(&format!("Input SHA-256: `{h}`\n\n"));
    }
    md.push_str(&format!(
        "Models: {}\n\nSeed {}, window {}, train fraction {}\n\n",
        cfg.models.iter().map(|m| m.name()).collect::<Vec<_>>().join(", "),
        cfg.seed,
        cfg.window_len,
        cfg.train_fraction
    ));
    md.push_str("## Test-set metrics\n\n| model | RMSE | MAE | directional accuracy | n |\n|---|---|---|---|---|\n");
    for (name, m) in &manifest.metrics {
        md.push_str(&format!(
            "| {name} | {:.6e} | {:.6e} | {:.2}% | {} |\n",
            m.rmse,
            m.mae,
            m.directional_accuracy * 100.0,
            m.n
        ));
    }
    md.push_str("\nThe `gbc_diagnostic` row scores classifier margins against ±1 labels; its directional accuracy is the hit rate of its up/down calls.\n\n");
    if let Some(dm) = &dm {
        md.push_str(&format!(
            "## Diebold-Mariano ({} vs {}, {})\n\nstatistic {:.4}, p-value {:.4}, n {}\n\n",
            dm.model_a, dm.model_b, dm.loss, dm.result.statistic, dm.result.p_value, dm.result.n
        ));
    }
    md.push_str(&format!(
        "## Hurst exponent\n\nH = {:.4} (R² {:.4}, uncorrected R/S slope {:.4}) over {} window sizes\n\n",
        hurst.h,
        hurst.r_squared,
        hurst.h_classical,
        hurst.log_sizes.len()
    ));
    if let Some(b) = &manifest.backtest {
        md.push_str(&format!(
            "## Backtest\n\n{} trades, {} wins ({}), net PnL {:.2}, final equity {:.2}, max drawdown {:.2}\n\n",
            b.n_trades,
            b.n_wins,
            b.win_rate_display(),
            b.net_pnl,
            b.final_equity,
            b.max_drawdown
        ));
        md.push_str("- [Equity curve](plots/equity.svg)\n- [Return histogram](plots/returns_hist.svg)\n- [Actual vs forecast](plots/forecast_overlay.svg)\n- [Trade ledger](backtest/ledger.csv)\n");
    }
    dataio::write_atomic(&out.join("report.md"), md.as_bytes()).code(EXIT_MISSING)?;
    manifest.artifacts.insert("report.md".into());
    save_manifest(out, &mut manifest).code(EXIT_MISSING)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn config_file_is_spliced_before_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.conf");
        fs::write(&cfg, "# comment\nlstm-epochs=3\nunsafe-fit-all=true\nbins=4\nmodels=arima\n").unwrap();
        let args: Vec<OsString> = ["fxcast", "train", "--out", "x", "--config", cfg.to_str().unwrap(), "--lstm-epochs", "7"]
            .iter()
            .map(OsString::from)
            .collect();
        let merged = merge_config_file(args).unwrap();
        let cli = Cli::try_parse_from(merged).unwrap();
        let Command::Train(t) = cli.command else {
            panic!("expected train")
        };
        assert_eq!(t.lstm_epochs, 7);
        assert!(t.unsafe_fit_all);
        assert_eq!(t.models, vec![ModelKind::Arima]);
    }

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(run(["fxcast", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["fxcast", "train"]), EXIT_USAGE);
    }

    #[test]
    fn pseudo_accuracy_reading() {
        assert!((pseudo_accuracy(0.5, &[10.0, -10.0]) - 95.0).abs() < 1e-12);
    }
}
