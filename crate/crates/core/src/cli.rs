//! Command-line front end.
//!
//! Every subcommand accepts `--config PATH`, a JSON object whose keys are the
//! snake_case flag names; flags given on the command line take precedence.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{emit, format_float, load_csv, write_series_to, Dataset};
use crate::kernel::{KernelSpec, Sample};
use crate::moments::{estimate_h_moments, HMoments, NullMoments, DEFAULT_MOMENT_DRAWS};
use crate::offline::{
    bandwidth_seed, detect_offline_with_moments, moment_seed, resolve_kernel, BlockLayout, OfflineOptions,
};
use crate::online::{calibrate_online_with_moments, OnlineOptions, StoppingResult};
use crate::simulation::Experiment;
use crate::threshold::{solve_offline_threshold_with, NuConvention, Target, ThresholdSpec};

#[derive(Debug, Parser)]
#[command(name = "mstat", version, about = "Kernel M-statistics for change-point detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the detection threshold for a significance level or ARL.
    Threshold(ThresholdArgs),
    /// Scan a test block against reference data.
    DetectOffline(OfflineArgs),
    /// Monitor a stream with the online detector.
    DetectOnline(OnlineArgs),
    /// Run a Monte-Carlo experiment described by a JSON config.
    Simulate(SimulateArgs),
    /// Estimate null moments on reference data.
    Moments(MomentsArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Offline,
    Online,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Sampled,
    Contiguous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    Standard,
    Doubled,
}

impl From<Convention> for NuConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Standard => NuConvention::Standard,
            Convention::Doubled => NuConvention::Doubled,
        }
    }
}

impl From<Layout> for BlockLayout {
    fn from(l: Layout) -> Self {
        match l {
            Layout::Sampled => BlockLayout::Sampled,
            Layout::Contiguous => BlockLayout::Contiguous,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct Common {
    /// JSON file supplying defaults for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// Kernel and moment-estimation flags.
#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelArgs {
    /// Bandwidth, or "median" for the median heuristic on the reference data.
    #[arg(long)]
    pub bandwidth: Option<String>,
    #[arg(long)]
    pub moment_draws: Option<usize>,
    /// Directory for cached moment estimates.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub arl: Option<f64>,
    #[arg(long)]
    pub b_max: Option<usize>,
    #[arg(long)]
    pub b0: Option<usize>,
    #[arg(short = 'N', long)]
    pub n_blocks: Option<usize>,
    #[arg(long)]
    pub corrected: bool,
    /// Null moments JSON (from the `moments` subcommand) for the correction.
    #[arg(long)]
    pub moments: Option<PathBuf>,
    /// Reference data to estimate moments from when `--moments` is absent.
    #[arg(long = "ref")]
    #[serde(rename = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub nu_convention: Option<Convention>,
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct OfflineArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Reference data CSV.
    #[arg(long = "ref")]
    #[serde(rename = "ref")]
    pub reference: Option<PathBuf>,
    /// Test block CSV; its length is `B_max`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(short = 'N', long)]
    pub n_blocks: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub corrected: bool,
    #[arg(long, value_enum)]
    pub layout: Option<Layout>,
    #[arg(long, value_enum)]
    pub nu_convention: Option<Convention>,
    /// Also write the standardized series as `B,z_prime` CSV.
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct OnlineArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Reference pool CSV.
    #[arg(long = "ref")]
    #[serde(rename = "ref")]
    pub reference: Option<PathBuf>,
    /// Stream CSV; omit with `--jsonl` to read samples from stdin.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Read one JSON sample per stdin line and write one JSON step per line.
    #[arg(long)]
    pub jsonl: bool,
    #[arg(long)]
    pub b0: Option<usize>,
    #[arg(short = 'N', long)]
    pub n_blocks: Option<usize>,
    #[arg(long)]
    pub arl: Option<f64>,
    #[arg(long)]
    pub corrected: bool,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Also write the statistic series as `t,M` CSV.
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct MomentsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long = "ref")]
    #[serde(rename = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(short = 'N', long)]
    pub n_blocks: Option<usize>,
    /// Tabulate block sizes `2..=B_max`.
    #[arg(long)]
    pub b_max: Option<usize>,
    /// Tabulate the single window size `B0`.
    #[arg(long)]
    pub b0: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
}

/// Overlays explicit flags on the `--config` file. Absent options and unset
/// switches fall through to the file.
fn merge<T: Serialize + DeserializeOwned>(args: &T, config: Option<&Path>) -> Result<T> {
    let Some(path) = config else {
        return Ok(serde_json::from_value(serde_json::to_value(args)?)?);
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut base: Value = serde_json::from_str(&text)?;
    let Value::Object(base_map) = &mut base else {
        return Err(Error::invalid(format!("{}: config must be a JSON object", path.display())));
    };
    if let Value::Object(flags) = serde_json::to_value(args)? {
        for (k, v) in flags {
            if !matches!(v, Value::Null | Value::Bool(false)) {
                base_map.insert(k, v);
            }
        }
    }
    Ok(serde_json::from_value(base)?)
}

fn require<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::invalid(format!("missing required setting `{name}`")))
}

fn parse_bandwidth(s: Option<&str>) -> Result<Option<f64>> {
    match s {
        None | Some("median") => Ok(None),
        Some(v) => match v.parse::<f64>() {
            Ok(bw) if bw > 0.0 && bw.is_finite() => Ok(Some(bw)),
            _ => Err(Error::invalid(format!("bandwidth must be \"median\" or a positive number, got {v:?}"))),
        },
    }
}

fn load(path: Option<&PathBuf>, name: &str) -> Result<Dataset> {
    load_csv(require(path, name)?)
}

/// Cache key for h-moment estimates: the pool contents, bandwidth, draw count and seed.
pub fn moments_cache_key(pool: &[Sample], spec: &KernelSpec, n_draws: usize, seed: u64) -> String {
    let mut hasher = Sha256::new();
    for s in pool {
        hasher.update((s.dim() as u64).to_le_bytes());
        for v in s.iter() {
            hasher.update(v.to_le_bytes());
        }
    }
    hasher.update(spec.bandwidth().to_le_bytes());
    hasher.update((n_draws as u64).to_le_bytes());
    hasher.update(seed.to_le_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// h-moments on `pool`, read from or stored to `cache_dir` when given.
pub fn cached_h_moments(
    pool: &[Sample],
    spec: &KernelSpec,
    n_draws: usize,
    seed: u64,
    cache_dir: Option<&Path>,
) -> Result<HMoments> {
    let Some(dir) = cache_dir else {
        return estimate_h_moments(pool, spec, n_draws, seed);
    };
    let path = dir.join(format!("{}.json", moments_cache_key(pool, spec, n_draws, seed)));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(h) = serde_json::from_str::<HMoments>(&text) {
            return Ok(h);
        }
    }
    let h = estimate_h_moments(pool, spec, n_draws, seed)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    std::fs::write(&path, serde_json::to_string(&h)?).map_err(|e| Error::io(&path, e))?;
    Ok(h)
}

/// Kernel and h-moments for a reference pool, seeded like the library detectors.
fn fit_reference(pool: &[Sample], kernel: &KernelArgs, seed: u64) -> Result<(KernelSpec, HMoments)> {
    let spec = resolve_kernel(pool, parse_bandwidth(kernel.bandwidth.as_deref())?, bandwidth_seed(seed))?;
    let draws = kernel.moment_draws.unwrap_or(DEFAULT_MOMENT_DRAWS);
    let h = cached_h_moments(pool, &spec, draws, moment_seed(seed), kernel.cache_dir.as_deref())?;
    Ok((spec, h))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn series_csv(columns: [&str; 2], series: &[(usize, f64)]) -> String {
    let mut buf = Vec::new();
    write_series_to(&mut buf, columns, series).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

fn threshold(args: &ThresholdArgs) -> Result<Option<bool>> {
    let a = merge(args, args.common.config.as_deref())?;
    let mode = require(a.mode, "mode")?;
    let n_blocks = a.n_blocks.unwrap_or(10);
    let (target, blocks) = match mode {
        Mode::Offline => (Target::Significance(require(a.alpha, "alpha")?), require(a.b_max, "b_max")?),
        Mode::Online => (Target::Arl(require(a.arl, "arl")?), require(a.b0, "b0")?),
    };
    let spec = if a.corrected {
        let moments = match (&a.moments, &a.reference) {
            (Some(p), _) => NullMoments::from_json(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            (None, Some(_)) => {
                let pool = load(a.reference.as_ref(), "ref")?.rows;
                let seed = require(a.common.seed, "seed")?;
                let (_, h) = fit_reference(&pool, &a.kernel, seed)?;
                match mode {
                    Mode::Offline => NullMoments::for_offline(h, n_blocks, blocks)?,
                    Mode::Online => NullMoments::new(h, n_blocks, [blocks])?,
                }
            }
            (None, None) => return Err(Error::invalid("the corrected threshold needs --moments or --ref")),
        };
        ThresholdSpec::calibrate_corrected(target, blocks, &moments.skew_by_block)?
    } else if let (Target::Significance(alpha), Some(c)) = (target, a.nu_convention) {
        ThresholdSpec {
            b: solve_offline_threshold_with(alpha, blocks, c.into())?,
            target,
            blocks,
            corrected: false,
            theta_by_block: None,
            fallbacks: Vec::new(),
        }
    } else {
        ThresholdSpec::calibrate(target, blocks)?
    };
    let text = match a.common.format.unwrap_or_default() {
        Format::Json => to_json(&spec)?,
        Format::Csv => format!("b\n{}\n", format_float(spec.b)),
    };
    emit(a.common.out.as_deref(), &text)?;
    Ok(None)
}

fn detect_offline(args: &OfflineArgs) -> Result<Option<bool>> {
    let a = merge(args, args.common.config.as_deref())?;
    let seed = require(a.common.seed, "seed")?;
    let reference = load(a.reference.as_ref(), "ref")?.rows;
    let test = load(a.data.as_ref(), "data")?.rows;
    let options = OfflineOptions {
        bandwidth: parse_bandwidth(a.kernel.bandwidth.as_deref())?,
        moment_draws: a.kernel.moment_draws.unwrap_or(DEFAULT_MOMENT_DRAWS),
        corrected: a.corrected,
        layout: a.layout.map(Into::into).unwrap_or_default(),
        nu_convention: a.nu_convention.map(Into::into).unwrap_or_default(),
        seed,
    };
    let (spec, h) = fit_reference(&reference, &a.kernel, seed)?;
    let report = detect_offline_with_moments(
        &reference,
        &test,
        a.n_blocks.unwrap_or(10),
        a.alpha.unwrap_or(0.05),
        &options,
        spec,
        h,
    )?;
    let series: Vec<(usize, f64)> = report.scan.series().collect();
    if let Some(p) = &a.series {
        crate::io::write_series(p, ["B", "z_prime"], &series)?;
    }
    let text = match a.common.format.unwrap_or_default() {
        Format::Json => to_json(&report)?,
        Format::Csv => series_csv(["B", "z_prime"], &series),
    };
    emit(a.common.out.as_deref(), &text)?;
    Ok(Some(report.alarm))
}

#[derive(Serialize)]
struct OnlineReport {
    alarm: bool,
    threshold: ThresholdSpec,
    bandwidth: f64,
    #[serde(rename = "B0")]
    b0: usize,
    #[serde(rename = "N")]
    n_blocks: usize,
    result: StoppingResult,
}

fn parse_jsonl_sample(line: &str, number: usize) -> Result<Sample> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        path: "<stdin>".into(),
        line: number,
        message: e.to_string(),
    })?;
    let values: Vec<f64> = match value {
        Value::Number(n) => vec![n.as_f64().unwrap_or(f64::NAN)],
        other => serde_json::from_value(other).map_err(|e| Error::Parse {
            path: "<stdin>".into(),
            line: number,
            message: e.to_string(),
        })?,
    };
    Sample::new(values)
}

fn detect_online(args: &OnlineArgs) -> Result<Option<bool>> {
    let a = merge(args, args.common.config.as_deref())?;
    let seed = require(a.common.seed, "seed")?;
    let pool = load(a.reference.as_ref(), "ref")?.rows;
    let b0 = a.b0.unwrap_or(50);
    let n_blocks = a.n_blocks.unwrap_or(10);
    let options = OnlineOptions {
        bandwidth: parse_bandwidth(a.kernel.bandwidth.as_deref())?,
        moment_draws: a.kernel.moment_draws.unwrap_or(DEFAULT_MOMENT_DRAWS),
        corrected: a.corrected,
        seed,
    };
    let (spec, h) = fit_reference(&pool, &a.kernel, seed)?;
    let arl = a.arl.unwrap_or(5000.0);
    let (mut detector, threshold) = calibrate_online_with_moments(&pool, b0, n_blocks, arl, &options, spec, h)?;

    if a.jsonl {
        let stdin = std::io::stdin().lock();
        let mut out = std::io::stdout().lock();
        let limit = a.max_steps.unwrap_or(usize::MAX);
        for (i, line) in stdin.lines().enumerate().take(limit) {
            let line = line.map_err(|e| Error::io("<stdin>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let step = detector.step(parse_jsonl_sample(&line, i + 1)?)?;
            writeln!(out, "{}", serde_json::to_string(&step)?)
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("<stdout>", e))?;
            if step.alarm {
                return Ok(Some(true));
            }
        }
        return Ok(Some(false));
    }

    let stream = load(a.data.as_ref(), "data")?.rows;
    let max_steps = a.max_steps.unwrap_or(stream.len());
    let result = detector.run_until_stop(stream, max_steps)?;
    if let Some(p) = &a.series {
        crate::io::write_series(p, ["t", "M"], &result.series)?;
    }
    let alarm = result.stopped;
    let text = match a.common.format.unwrap_or_default() {
        Format::Json => to_json(&OnlineReport {
            alarm,
            bandwidth: spec.bandwidth(),
            threshold,
            b0,
            n_blocks,
            result,
        })?,
        Format::Csv => series_csv(["t", "M"], &result.series),
    };
    emit(a.common.out.as_deref(), &text)?;
    Ok(Some(alarm))
}

fn simulate(args: &SimulateArgs) -> Result<Option<bool>> {
    let path = require(args.common.config.as_ref(), "config")?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut value: Value = serde_json::from_str(&text)?;
    if let (Some(seed), Value::Object(map)) = (args.common.seed, &mut value) {
        map.insert("seed".into(), seed.into());
    }
    if value.get("seed").is_none() {
        return Err(Error::invalid("missing required setting `seed`"));
    }
    let experiment: Experiment = serde_json::from_value(value)?;
    let report = experiment.run()?;
    let text = match args.common.format.unwrap_or_default() {
        Format::Json => to_json(&report)?,
        Format::Csv => report.to_csv()?,
    };
    emit(args.common.out.as_deref(), &text)?;
    Ok(None)
}

fn moments(args: &MomentsArgs) -> Result<Option<bool>> {
    let a = merge(args, args.common.config.as_deref())?;
    let seed = require(a.common.seed, "seed")?;
    let pool = load(a.reference.as_ref(), "ref")?.rows;
    let n_blocks = a.n_blocks.unwrap_or(10);
    let (_, h) = fit_reference(&pool, &a.kernel, seed)?;
    let moments = match (a.b_max, a.b0) {
        (Some(b_max), _) => NullMoments::for_offline(h, n_blocks, b_max)?,
        (None, Some(b0)) => NullMoments::new(h, n_blocks, [b0])?,
        (None, None) => return Err(Error::invalid("give --b-max or --b0")),
    };
    let text = match a.common.format.unwrap_or_default() {
        Format::Json => moments.to_json()?,
        Format::Csv => {
            let mut s = String::from("B,var,skew\n");
            for (b, v) in &moments.var_by_block {
                s.push_str(&format!("{b},{},{}\n", format_float(*v), format_float(moments.skewness(*b)?)));
            }
            s
        }
    };
    emit(a.common.out.as_deref(), &text)?;
    Ok(None)
}

/// Runs a parsed command. `Some(alarm)` for detection commands.
pub fn run(cli: &Cli) -> Result<Option<bool>> {
    match &cli.command {
        Command::Threshold(a) => threshold(a),
        Command::DetectOffline(a) => detect_offline(a),
        Command::DetectOnline(a) => detect_online(a),
        Command::Simulate(a) => simulate(a),
        Command::Moments(a) => moments(a),
    }
}

/// Exit status: 0 no alarm, 2 alarm, 1 error.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Some(true)) => ExitCode::from(2),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
