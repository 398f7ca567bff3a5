//! Command-line front end.
//!
//! Every model flag can also be set in a TOML config file (`--config`), using
//! the flag name with `_` or `-` as the key. Flags win over the file. Errors
//! are printed to stderr as a JSON object and mapped to exit codes 2
//! (configuration), 3 (numerical) and 4 (input/output).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use crate::baselines::seasonal_naive_intervals;
use crate::calibrate::{ConformitySet, QuantileEstimator};
use crate::data::{load_generic_csv, load_m4_corpus, sample_corpus, write_m4, CorpusEntry};
use crate::error::{Error, Result};
use crate::metrics::{msis, CorpusReport, EvalInput, SeriesReport, SCHEMA_VERSION};
use crate::pipeline::{forecast, learned_transform, CalibrationStatus, Forecast, IntervalMethod};
use crate::synthetic::{yearly_like_corpus, Ar1Seasonal};
use crate::transform::TransformKind;
use crate::types::{Frequency, PredictionIntervals, TimeSeries};

/// Interval method selectable on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Model(IntervalMethod),
    Naive,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Model(m) => m.as_str(),
            Rule::Naive => "naive",
        }
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("naive") {
            return Ok(Rule::Naive);
        }
        s.parse().map(Rule::Model)
    }
}

#[derive(Debug, Parser)]
#[command(name = "intervalcast", version, about = "Interval forecasts from convolutional low-rank completion")]
pub struct Cli {
    /// TOML file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for corpus commands.
    #[arg(long, global = true, env = "INTERVALCAST_JOBS")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forecast one series stored as a single-column CSV.
    Forecast(ForecastArgs),
    /// Evaluate a method on an M4-format train/test corpus.
    Evaluate(EvaluateArgs),
    /// Evaluate a list of quantile weights on a corpus.
    SweepLambda(SweepArgs),
    /// Tidy (t, role, value) dump of a forecast for plotting.
    Plotdata(PlotArgs),
    /// Write a synthetic corpus in M4 format.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// mqr, qr, cp or naive.
    #[arg(long)]
    pub rule: Option<Rule>,
    #[arg(long)]
    pub model_size: Option<usize>,
    #[arg(long)]
    pub lambda_q: Option<f64>,
    #[arg(long)]
    pub lambda_point: Option<f64>,
    #[arg(long)]
    pub no_calibrate: bool,
    /// point_only or all_bounds.
    #[arg(long)]
    pub conformity_set: Option<ConformitySet>,
    /// conformal or empirical.
    #[arg(long)]
    pub quantile_estimator: Option<QuantileEstimator>,
    /// spectral, identity (zero-padded) or periodic.
    #[arg(long)]
    pub transform: Option<TransformKind>,
    #[arg(long)]
    pub energy_threshold: Option<f64>,
    #[arg(long)]
    pub ramp_width: Option<f64>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub mu0: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub mu_max: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Phase {
    Estimation,
    Calibrated,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct SeriesArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub frequency: Option<Frequency>,
    #[arg(long)]
    pub seasonal_period: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Also write the learned transform matrix as CSV.
    #[arg(long)]
    pub dump_transform: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub frequency: Option<Frequency>,
    #[arg(long)]
    pub sample_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Per-series CSV report; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated quantile weights.
    #[arg(long)]
    pub lambdas: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum)]
    pub phase: Option<Phase>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Sinusoidal season plus AR(1) noise, period 4, horizon 6.
    Ar1,
    /// Trending series with stochastic growth, horizon 6.
    Yearly,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: Option<SynthKind>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
}

/// Values read from `--config`.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    table: toml::Table,
}

const CONFIG_KEYS: &[&str] = &[
    "horizon", "alpha", "rule", "model_size", "lambda_q", "lambda_point", "calibrate",
    "no_calibrate", "conformity_set", "quantile_estimator", "transform", "energy_threshold",
    "ramp_width", "stride", "mu0", "rho", "mu_max", "tol", "max_iter", "input", "frequency",
    "seasonal_period", "out", "format", "dump_transform", "train", "test", "sample_fraction",
    "seed", "json", "lambdas", "phase", "kind", "count", "jobs",
];

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))?;
        let mut table = toml::Table::new();
        for (key, value) in raw {
            let norm = key.replace('-', "_");
            if !CONFIG_KEYS.contains(&norm.as_str()) {
                return Err(Error::Config(format!("unknown config key '{key}'")));
            }
            table.insert(norm, value);
        }
        Ok(Self { table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn text(&self, key: &str) -> Option<String> {
        self.table.get(key).map(|v| match v {
            toml::Value::String(s) => s.clone(),
            toml::Value::Array(items) => items
                .iter()
                .map(|i| match i {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            other => other.to_string(),
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.text(key) {
            None => Ok(None),
            Some(t) => t
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("config key '{key}': {e}"))),
        }
    }
}

fn pick<T: FromStr>(flag: Option<T>, file: &ConfigFile, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.get(key),
    }
}

fn pick_value_enum<T: ValueEnum>(flag: Option<T>, file: &ConfigFile, key: &str) -> Result<Option<T>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match file.text(key) {
        None => Ok(None),
        Some(t) => T::from_str(&t, true)
            .map(Some)
            .map_err(|e| Error::Config(format!("config key '{key}': {e}"))),
    }
}

fn pick_path(flag: &Option<PathBuf>, file: &ConfigFile, key: &str) -> Option<PathBuf> {
    flag.clone().or_else(|| file.text(key).map(PathBuf::from))
}

fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("--{name} is required")))
}

/// Resolved model settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub rule: Rule,
    pub config: crate::types::ForecastConfig,
}

impl Settings {
    /// Merges flags over the config file. `horizon` falls back to
    /// `default_horizon` when neither sets it.
    pub fn resolve(args: &ModelArgs, file: &ConfigFile, default_horizon: Option<usize>) -> Result<Self> {
        let horizon = pick(args.horizon, file, "horizon")?.or(default_horizon);
        let horizon = required(horizon, "horizon")?;
        let alpha = pick(args.alpha, file, "alpha")?.unwrap_or(0.05);
        let mut cfg = crate::types::ForecastConfig::new(horizon, alpha);
        let rule = pick(args.rule, file, "rule")?.unwrap_or(Rule::Model(IntervalMethod::Mqr));
        cfg.model_size = pick(args.model_size, file, "model_size")?;
        cfg.lambda_quantile = pick(args.lambda_q, file, "lambda_q")?;
        if let Some(v) = pick(args.lambda_point, file, "lambda_point")? {
            cfg.lambda_point = v;
        }
        cfg.calibrate = if args.no_calibrate {
            false
        } else if let Some(no) = file.get::<bool>("no_calibrate")? {
            !no
        } else {
            file.get::<bool>("calibrate")?.unwrap_or(true)
        };
        if let Some(v) = pick(args.conformity_set, file, "conformity_set")? {
            cfg.conformity_set = v;
        }
        if let Some(v) = pick(args.quantile_estimator, file, "quantile_estimator")? {
            cfg.quantile_estimator = v;
        }
        if let Some(v) = pick(args.transform, file, "transform")? {
            cfg.transform = v;
        }
        if let Some(v) = pick(args.energy_threshold, file, "energy_threshold")? {
            cfg.spectral.energy_threshold = v;
        }
        if let Some(v) = pick(args.ramp_width, file, "ramp_width")? {
            cfg.spectral.ramp_width = v;
        }
        if let Some(v) = pick(args.stride, file, "stride")? {
            cfg.spectral.stride = v;
        }
        if let Some(v) = pick(args.mu0, file, "mu0")? {
            cfg.solver.mu0 = v;
        }
        if let Some(v) = pick(args.rho, file, "rho")? {
            cfg.solver.rho = v;
        }
        if let Some(v) = pick(args.mu_max, file, "mu_max")? {
            cfg.solver.mu_max = v;
        }
        if let Some(v) = pick(args.tol, file, "tol")? {
            cfg.solver.tol = v;
        }
        if let Some(v) = pick(args.max_iter, file, "max_iter")? {
            cfg.solver.max_iter = v;
        }
        cfg.validate()?;
        Ok(Self { rule, config: cfg })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_series(args: &SeriesArgs, file: &ConfigFile) -> Result<TimeSeries> {
    let input = required(pick_path(&args.input, file, "input"), "input")?;
    let frequency = pick(args.frequency, file, "frequency")?.unwrap_or(Frequency::Other);
    let period = pick(args.seasonal_period, file, "seasonal_period")?;
    load_generic_csv(&input, frequency, period)
}

/// Intervals for one series under `rule`, plus the pipeline record when the
/// rule uses the model.
pub fn run_rule(series: &TimeSeries, settings: &Settings) -> Result<(PredictionIntervals, Option<Forecast>)> {
    match settings.rule {
        Rule::Naive => Ok((
            seasonal_naive_intervals(series, settings.config.horizon, settings.config.alpha)?,
            None,
        )),
        Rule::Model(method) => {
            let f = forecast(series, &settings.config, method)?;
            Ok((f.intervals.clone(), Some(f)))
        }
    }
}

fn forecast_rows(series: &TimeSeries, pi: &PredictionIntervals) -> Vec<serde_json::Value> {
    (0..pi.horizon())
        .map(|j| {
            json!({
                "t": series.len() + j + 1,
                "lower": pi.lower()[j],
                "point": pi.point()[j],
                "upper": pi.upper()[j],
                "calibrated": pi.calibrated(),
                "delta": pi.delta(),
            })
        })
        .collect()
}

pub fn cmd_forecast(args: &ForecastArgs, file: &ConfigFile) -> Result<()> {
    let series = load_series(&args.series, file)?;
    let default_h = series.frequency().m4_horizon();
    let settings = Settings::resolve(&args.model, file, default_h)?;
    let format = pick_value_enum(args.format, file, "format")?.unwrap_or(Format::Csv);
    if let Some(path) = pick_path(&args.dump_transform, file, "dump_transform") {
        let t = learned_transform(&series, &settings.config)?;
        let mut w = create(&path)?;
        t.write_csv(&mut w)?;
        w.flush()?;
    }
    let (pi, record) = run_rule(&series, &settings)?;
    let mut out = output(pick_path(&args.out, file, "out").as_deref())?;
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["t", "lower", "point", "upper", "calibrated", "delta"])?;
            for j in 0..pi.horizon() {
                w.write_record([
                    (series.len() + j + 1).to_string(),
                    pi.lower()[j].to_string(),
                    pi.point()[j].to_string(),
                    pi.upper()[j].to_string(),
                    pi.calibrated().to_string(),
                    pi.delta().to_string(),
                ])?;
            }
            w.flush()?;
        }
        Format::Json => {
            let mut doc = json!({
                "schema_version": SCHEMA_VERSION,
                "id": series.id(),
                "rule": settings.rule.as_str(),
                "alpha": settings.config.alpha,
                "horizon": settings.config.horizon,
                "rows": forecast_rows(&series, &pi),
            });
            if let Some(f) = record {
                doc["model_size"] = json!(f.preliminary.model_size);
                doc["transform"] = json!(f.preliminary.transform);
                doc["calibration"] = json!(f.calibration);
                doc["diagnostics"] = json!({
                    "point": f.preliminary.point,
                    "upper": f.preliminary.upper,
                    "ordering_fixes": f.preliminary.ordering_fixes,
                });
            }
            serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| Error::Io(e.to_string()))?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Forecasts one corpus entry with its own test length as horizon and scores
/// it. Failures become error rows.
pub fn evaluate_entry(entry: &CorpusEntry, settings: &Settings) -> SeriesReport {
    let id = entry.series.id();
    let mut s = settings.clone();
    s.config.horizon = entry.future.len();
    let (pi, record) = match run_rule(&entry.series, &s) {
        Ok(r) => r,
        Err(e) => return SeriesReport::failed(id, &e),
    };
    let input = EvalInput {
        in_sample: entry.series.values(),
        future: &entry.future,
        lower: pi.lower(),
        upper: pi.upper(),
        alpha: s.config.alpha,
        seasonal_period: entry.series.seasonal_period(),
    };
    let (score, error) = match msis(&input) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let calibration = record.as_ref().map(|f| {
        match f.calibration.status {
            CalibrationStatus::Applied => "applied",
            CalibrationStatus::Skipped => "skipped",
            CalibrationStatus::Disabled => "disabled",
        }
        .to_string()
    });
    let upper_fit_rms = record
        .as_ref()
        .and_then(|f| f.preliminary.upper.as_ref())
        .map(|d| d.observed_fit_rms);
    SeriesReport {
        id: id.to_string(),
        msis: score,
        covered_points: input.covered_points(),
        points: input.horizon(),
        mean_width: Some(input.mean_width()),
        delta: Some(pi.delta()),
        calibration,
        upper_fit_rms,
        error,
    }
}

/// Scores every entry on a pool of `jobs` threads; rows keep corpus order.
pub fn evaluate_corpus(corpus: &[CorpusEntry], settings: &Settings, jobs: usize) -> Result<CorpusReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let rows: Vec<SeriesReport> =
        pool.install(|| corpus.par_iter().map(|e| evaluate_entry(e, settings)).collect());
    Ok(CorpusReport::from_rows(settings.rule.as_str(), settings.config.alpha, rows))
}

fn load_corpus(args: &CorpusArgs, file: &ConfigFile) -> Result<(Vec<CorpusEntry>, Frequency)> {
    let train = required(pick_path(&args.train, file, "train"), "train")?;
    let test = required(pick_path(&args.test, file, "test"), "test")?;
    let frequency = required(pick(args.frequency, file, "frequency")?, "frequency")?;
    let fraction = pick(args.sample_fraction, file, "sample_fraction")?.unwrap_or(1.0);
    let seed = pick(args.seed, file, "seed")?.unwrap_or(0);
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("sample fraction {fraction} outside (0, 1]")));
    }
    let corpus = load_m4_corpus(&train, &test, frequency)?;
    let corpus = if fraction < 1.0 {
        sample_corpus(&corpus, fraction, seed)?
    } else {
        corpus
    };
    Ok((corpus, frequency))
}

fn corpus_settings(model: &ModelArgs, file: &ConfigFile, corpus: &[CorpusEntry], frequency: Frequency) -> Result<Settings> {
    // the horizon is taken per series from the test file
    let h = frequency
        .m4_horizon()
        .or_else(|| corpus.first().map(|e| e.future.len()))
        .unwrap_or(1);
    Settings::resolve(model, file, Some(h))
}

pub fn cmd_evaluate(args: &EvaluateArgs, file: &ConfigFile, jobs: usize) -> Result<CorpusReport> {
    let (corpus, frequency) = load_corpus(&args.corpus, file)?;
    let settings = corpus_settings(&args.model, file, &corpus, frequency)?;
    let report = evaluate_corpus(&corpus, &settings, jobs)?;
    let mut out = output(pick_path(&args.out, file, "out").as_deref())?;
    report.write_csv(&mut out)?;
    out.flush()?;
    if let Some(path) = pick_path(&args.json, file, "json") {
        let mut w = create(&path)?;
        w.write_all(report.to_json()?.as_bytes())?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(report)
}

pub fn parse_lambdas(text: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0 && v.is_finite())
                .ok_or_else(|| Error::Config(format!("bad lambda '{s}'")))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::Config("--lambdas is empty".into()));
    }
    Ok(values)
}

pub fn cmd_sweep(args: &SweepArgs, file: &ConfigFile, jobs: usize) -> Result<()> {
    let lambdas = parse_lambdas(&required(pick(args.lambdas.clone(), file, "lambdas")?, "lambdas")?)?;
    let (corpus, frequency) = load_corpus(&args.corpus, file)?;
    let base = corpus_settings(&args.model, file, &corpus, frequency)?;
    if !matches!(base.rule, Rule::Model(IntervalMethod::Qr | IntervalMethod::Mqr)) {
        return Err(Error::Config("sweep-lambda needs --rule qr or mqr".into()));
    }
    let mut out = output(pick_path(&args.out, file, "out").as_deref())?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["lambda", "mean_msis", "coverage", "acd", "mean_width", "mean_upper_fit_rms", "failed"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for lambda in lambdas {
        let mut s = base.clone();
        s.config.lambda_quantile = Some(lambda);
        let r = evaluate_corpus(&corpus, &s, jobs)?;
        let fits: Vec<f64> = r.rows.iter().filter_map(|row| row.upper_fit_rms).collect();
        let mean_fit = (!fits.is_empty()).then(|| fits.iter().sum::<f64>() / fits.len() as f64);
        w.write_record([
            lambda.to_string(),
            opt(r.mean_msis),
            opt(r.coverage),
            opt(r.acd),
            opt(r.mean_width),
            opt(mean_fit),
            r.failed.to_string(),
        ])?;
    }
    w.flush()?;
    drop(w);
    out.flush()?;
    Ok(())
}

pub fn cmd_plotdata(args: &PlotArgs, file: &ConfigFile) -> Result<()> {
    let series = load_series(&args.series, file)?;
    let settings = Settings::resolve(&args.model, file, series.frequency().m4_horizon())?;
    let phase = pick_value_enum(args.phase, file, "phase")?.unwrap_or(Phase::Both);
    let (calibrated, record) = run_rule(&series, &settings)?;
    let estimated = record.map(|f| f.preliminary.intervals).unwrap_or_else(|| calibrated.clone());
    let l = series.len();
    let mut out = output(pick_path(&args.out, file, "out").as_deref())?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["t", "role", "value"])?;
    for (i, v) in series.values().iter().enumerate() {
        w.write_record([(i + 1).to_string(), "observed".into(), v.to_string()])?;
    }
    let mut block = |role: &str, values: &[f64]| -> Result<()> {
        for (j, v) in values.iter().enumerate() {
            w.write_record([(l + j + 1).to_string(), role.to_string(), v.to_string()])?;
        }
        Ok(())
    };
    block("point", estimated.point())?;
    if phase != Phase::Calibrated {
        block("lower_estimation", estimated.lower())?;
        block("upper_estimation", estimated.upper())?;
    }
    if phase != Phase::Estimation {
        block("lower_calibrated", calibrated.lower())?;
        block("upper_calibrated", calibrated.upper())?;
    }
    w.flush()?;
    drop(w);
    out.flush()?;
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs, file: &ConfigFile) -> Result<()> {
    let kind = pick_value_enum(args.kind, file, "kind")?.unwrap_or(SynthKind::Ar1);
    let count = pick(args.count, file, "count")?.unwrap_or(100);
    let seed = pick(args.seed, file, "seed")?.unwrap_or(0);
    let train = required(pick_path(&args.train, file, "train"), "train")?;
    let test = required(pick_path(&args.test, file, "test"), "test")?;
    let corpus = match kind {
        SynthKind::Ar1 => Ar1Seasonal::default().corpus(count, seed)?,
        SynthKind::Yearly => yearly_like_corpus(count, seed)?,
    };
    let mut tr = create(&train)?;
    let mut te = create(&test)?;
    write_m4(&corpus, &mut tr, &mut te)?;
    tr.flush()?;
    te.flush()?;
    Ok(())
}

fn jobs(cli: &Cli, file: &ConfigFile) -> Result<usize> {
    let n = match cli.jobs {
        Some(n) => n,
        None => file
            .get::<usize>("jobs")?
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
    };
    if n == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    Ok(n)
}

fn dispatch(cli: &Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match &cli.command {
        Command::Forecast(a) => cmd_forecast(a, &file),
        Command::Evaluate(a) => cmd_evaluate(a, &file, jobs(cli, &file)?).map(|_| ()),
        Command::SweepLambda(a) => cmd_sweep(a, &file, jobs(cli, &file)?),
        Command::Plotdata(a) => cmd_plotdata(a, &file),
        Command::Synth(a) => cmd_synth(a, &file),
    }
}

/// The error payload written to stderr.
pub fn error_json(e: &Error) -> serde_json::Value {
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "error": {
            "kind": e.kind(),
            "message": e.to_string(),
            "exit_code": e.exit_code(),
        }
    });
    if let Error::Parse { row, column, .. } = e {
        doc["error"]["row"] = json!(row);
        doc["error"]["column"] = json!(column);
    }
    doc
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = Error::Config(e.to_string().trim().to_string());
            eprintln!("{}", error_json(&err));
            return err.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            e.exit_code()
        }
    }
}
