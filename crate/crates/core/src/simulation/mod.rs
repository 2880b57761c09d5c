//! Monte-Carlo experiments: significance level, average run length, power,
//! detection delay and the block-size sweep.
//!
//! Every experiment derives one seed per trial from the master seed and
//! runs trials in parallel; results are collected in trial order, so output
//! does not depend on the thread count.

pub mod generators;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use generators::{generate, gaussian_shift, Component, Generator, GeneratorSpec, Param};

use crate::baselines::{calibrate_arl, calibrate_quantile, glr_scan, hotelling_scan, HotellingOnline, RunRecord};
use crate::error::{Error, Result};
use crate::kernel::{median_bandwidth, KernelSpec, Sample, DEFAULT_MEDIAN_CAP};
use crate::moments::{estimate_h_moments, var_zb, skewness_zb, HMoments, NullMoments, DEFAULT_MOMENT_DRAWS};
use crate::numeric::quantile;
use crate::offline::z_series;
use crate::online::OnlineDetector;
use crate::rng::{derive_seed, stream_rng, Rng};
use crate::threshold::{
    solve_offline_threshold, solve_offline_threshold_corrected, solve_online_threshold,
    solve_online_threshold_corrected,
};

const MODEL_STREAM: u64 = 0;
const TRIAL_STREAM: u64 = 1;
const CALIBRATION_STREAM: u64 = 2;

/// Kernel and null-moment settings shared by every experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    /// Fixed bandwidth; the median heuristic on the moment pool when absent.
    pub bandwidth: Option<f64>,
    pub moment_draws: usize,
    /// Null samples used for the bandwidth and the h-moments.
    pub moment_pool: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            bandwidth: None,
            moment_draws: DEFAULT_MOMENT_DRAWS,
            moment_pool: 5000,
        }
    }
}

/// Kernel and h-moments fitted to one null distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct NullModel {
    pub spec: KernelSpec,
    pub h: HMoments,
}

impl NullModel {
    pub fn fit(null: &GeneratorSpec, settings: &ModelSettings, seed: u64) -> Result<Self> {
        let pool = generate(null, settings.moment_pool, derive_seed(seed, 0))?;
        let spec = match settings.bandwidth {
            Some(bw) => KernelSpec::gaussian(bw)?,
            None => KernelSpec::gaussian(median_bandwidth(&pool, DEFAULT_MEDIAN_CAP, derive_seed(seed, 1))?)?,
        };
        let h = estimate_h_moments(&pool, &spec, settings.moment_draws, derive_seed(seed, 2))?;
        Ok(NullModel { spec, h })
    }
}

fn trial_seed(seed: u64, stream: u64, i: usize) -> u64 {
    derive_seed(derive_seed(seed, stream), i as u64)
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        Err(Error::invalid("trials must be at least 1"))
    } else {
        Ok(())
    }
}

/// Wilson score interval for a binomial proportion at 95% confidence.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    const Z: f64 = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + Z * Z / n;
    let centre = (p + Z * Z / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + Z * Z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn default_n_blocks() -> usize {
    10
}

fn default_alphas() -> Vec<f64> {
    vec![0.10, 0.05, 0.01]
}

fn thousand() -> usize {
    1000
}

fn two_hundred() -> usize {
    200
}

fn hundred() -> usize {
    100
}

fn five_hundred() -> usize {
    500
}

fn default_pool() -> usize {
    2000
}

fn arl_1000() -> f64 {
    1000.0
}

fn arl_5000() -> f64 {
    5000.0
}

// ---------------------------------------------------------------------------
// Significance level

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlConfig {
    pub null: GeneratorSpec,
    #[serde(rename = "B_max")]
    pub b_max: usize,
    #[serde(rename = "N", default = "default_n_blocks")]
    pub n_blocks: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "thousand")]
    pub trials: usize,
    #[serde(default)]
    pub corrected: bool,
    /// Extra thresholds at which to report the empirical exceedance rate.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(flatten)]
    pub model: ModelSettings,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlRow {
    pub alpha: f64,
    pub b_theory: f64,
    pub b_corrected: Option<f64>,
    /// Empirical `(1 - alpha)` quantile of the null maximum.
    pub b_sim: f64,
    /// Empirical exceedance rate at `b_theory`, with its Wilson interval.
    pub sl_at_theory: f64,
    pub sl_interval: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub b: f64,
    pub rate: f64,
    pub interval: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlReport {
    pub rows: Vec<SlRow>,
    pub exceedance: Vec<Exceedance>,
    pub trials: usize,
    pub bandwidth: f64,
    /// Null maxima of the standardized scan, in trial order.
    #[serde(skip)]
    pub maxima: Vec<f64>,
}

impl SlReport {
    pub fn to_csv(&self) -> Result<String> {
        csv_string(
            &["alpha", "b_theory", "b_corrected", "b_sim", "sl_at_theory", "sl_lo", "sl_hi"],
            self.rows.iter().map(|r| {
                vec![
                    num(r.alpha),
                    num(r.b_theory),
                    opt(r.b_corrected),
                    num(r.b_sim),
                    num(r.sl_at_theory),
                    num(r.sl_interval.0),
                    num(r.sl_interval.1),
                ]
            }),
        )
    }
}

fn exceedance(maxima: &[f64], b: f64) -> Exceedance {
    let hits = maxima.iter().filter(|&&m| m > b).count();
    Exceedance {
        b,
        rate: hits as f64 / maxima.len() as f64,
        interval: wilson_interval(hits, maxima.len()),
    }
}

/// Maximum of the standardized offline scan on one null draw.
fn null_scan_max(null: &GeneratorSpec, model: &NullModel, sd: &[f64], n: usize, b_max: usize, seed: u64) -> Result<f64> {
    let data = generate(null, (n + 1) * b_max, seed)?;
    let (reference, test) = data.split_at(n * b_max);
    let blocks: Vec<Vec<Sample>> = reference.chunks(b_max).map(<[Sample]>::to_vec).collect();
    let z = z_series(&blocks, test, &model.spec)?;
    Ok(z.iter().zip(sd).map(|(z, s)| z / s).fold(f64::NEG_INFINITY, f64::max))
}

/// Empirical vs analytic offline thresholds under the null.
pub fn run_sl_experiment(config: &SlConfig) -> Result<SlReport> {
    check_trials(config.trials)?;
    let model = NullModel::fit(&config.null, &config.model, derive_seed(config.seed, MODEL_STREAM))?;
    let moments = NullMoments::for_offline(model.h.clone(), config.n_blocks, config.b_max)?;
    let sd: Vec<f64> = (2..=config.b_max).map(|b| moments.variance(b).map(f64::sqrt)).collect::<Result<_>>()?;
    let maxima = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            null_scan_max(
                &config.null,
                &model,
                &sd,
                config.n_blocks,
                config.b_max,
                trial_seed(config.seed, TRIAL_STREAM, i),
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut rows = Vec::new();
    for &alpha in &config.alphas {
        let b_theory = solve_offline_threshold(alpha, config.b_max)?;
        let b_corrected = if config.corrected {
            Some(solve_offline_threshold_corrected(alpha, config.b_max, &moments.skew_by_block)?.b)
        } else {
            None
        };
        let at = exceedance(&maxima, b_theory);
        rows.push(SlRow {
            alpha,
            b_theory,
            b_corrected,
            b_sim: quantile(&maxima, 1.0 - alpha),
            sl_at_theory: at.rate,
            sl_interval: at.interval,
        });
    }
    Ok(SlReport {
        rows,
        exceedance: config.thresholds.iter().map(|&b| exceedance(&maxima, b)).collect(),
        trials: config.trials,
        bandwidth: model.spec.bandwidth(),
        maxima,
    })
}

// ---------------------------------------------------------------------------
// Online runs

/// Everything needed to run the online detector on one trial.
struct OnlineSetup<'a> {
    null: &'a GeneratorSpec,
    stream: &'a GeneratorSpec,
    spec: KernelSpec,
    moments: NullMoments,
    b0: usize,
    n_blocks: usize,
    pool_size: usize,
}

impl OnlineSetup<'_> {
    /// Runs until the statistic exceeds `b` or `horizon` samples are consumed
    /// and returns the running-maximum record.
    fn run(&self, b: f64, horizon: usize, seed: u64) -> Result<RunRecord> {
        let pool = generate(self.null, self.pool_size, derive_seed(seed, 0))?;
        let mut det = OnlineDetector::new(&pool, self.b0, self.n_blocks, self.spec, &self.moments, b, derive_seed(seed, 1))?;
        let mut rng: Rng = stream_rng(derive_seed(seed, 2), 0);
        let mut g = self.stream.instantiate(&mut rng)?;
        let stream = std::iter::from_fn(move || Some(g.sample(&mut rng)));
        let result = det.run_until_stop(stream, horizon)?;
        Ok(RunRecord::from_stream(result.series, horizon))
    }
}

fn check_online(b0: usize, n_blocks: usize, pool_size: usize) -> Result<()> {
    if pool_size + 1 < n_blocks * (b0 + 1) {
        return Err(Error::invalid(format!(
            "pool of {pool_size} samples cannot sustain N = {n_blocks} windows of size {b0}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Average run length

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArlConfig {
    /// One row per null distribution.
    pub nulls: Vec<GeneratorSpec>,
    #[serde(rename = "B0")]
    pub b0: usize,
    #[serde(rename = "N", default = "default_n_blocks")]
    pub n_blocks: usize,
    #[serde(default = "arl_1000")]
    pub arl_target: f64,
    #[serde(default = "two_hundred")]
    pub trials: usize,
    /// Censoring horizon; ten times the target when absent.
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub corrected: bool,
    /// Also calibrate a threshold from the runs (requires full-horizon runs).
    #[serde(default)]
    pub calibrate: bool,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    #[serde(flatten)]
    pub model: ModelSettings,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArlRow {
    pub null: String,
    pub b_theory: f64,
    pub mean_run_length: f64,
    pub censored: usize,
    pub kappa: f64,
    pub b_corrected: Option<f64>,
    pub mean_run_length_corrected: Option<f64>,
    pub b_sim: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArlReport {
    pub arl_target: f64,
    #[serde(rename = "B0")]
    pub b0: usize,
    pub trials: usize,
    pub horizon: usize,
    pub rows: Vec<ArlRow>,
}

impl ArlReport {
    pub fn to_csv(&self) -> Result<String> {
        csv_string(
            &["null", "b_theory", "mean_run_length", "censored", "kappa", "b_corrected", "mean_run_length_corrected", "b_sim"],
            self.rows.iter().map(|r| {
                vec![
                    r.null.clone(),
                    num(r.b_theory),
                    num(r.mean_run_length),
                    r.censored.to_string(),
                    num(r.kappa),
                    opt(r.b_corrected),
                    opt(r.mean_run_length_corrected),
                    opt(r.b_sim),
                ]
            }),
        )
    }
}

fn generator_name(g: &GeneratorSpec) -> String {
    serde_json::to_value(g)
        .ok()
        .and_then(|v| v.get("name").and_then(|n| n.as_str()).map(str::to_owned))
        .unwrap_or_default()
}

/// Mean run length of the online detector under each null at the analytic threshold.
pub fn run_arl_experiment(config: &ArlConfig) -> Result<ArlReport> {
    check_trials(config.trials)?;
    check_online(config.b0, config.n_blocks, config.pool_size)?;
    let horizon = config.horizon.unwrap_or((10.0 * config.arl_target).ceil() as usize);
    let b_theory = solve_online_threshold(config.arl_target, config.b0)?;
    let mut rows = Vec::new();
    for (k, null) in config.nulls.iter().enumerate() {
        let seed = derive_seed(config.seed, 100 + k as u64);
        let model = NullModel::fit(null, &config.model, derive_seed(seed, MODEL_STREAM))?;
        let moments = NullMoments::new(model.h.clone(), config.n_blocks, [config.b0])?;
        let kappa = moments.skewness(config.b0)?;
        let b_corrected = if config.corrected {
            Some(solve_online_threshold_corrected(config.arl_target, config.b0, kappa)?.b)
        } else {
            None
        };
        let stop_at = if config.calibrate {
            f64::INFINITY
        } else {
            b_corrected.map_or(b_theory, |c| c.max(b_theory))
        };
        let setup = OnlineSetup {
            null,
            stream: null,
            spec: model.spec,
            moments,
            b0: config.b0,
            n_blocks: config.n_blocks,
            pool_size: config.pool_size,
        };
        let runs = (0..config.trials)
            .into_par_iter()
            .map(|i| setup.run(stop_at, horizon, trial_seed(seed, TRIAL_STREAM, i)))
            .collect::<Result<Vec<_>>>()?;
        let lengths: Vec<usize> = runs.iter().map(|r| r.run_length(b_theory)).collect();
        rows.push(ArlRow {
            null: generator_name(null),
            b_theory,
            mean_run_length: lengths.iter().sum::<usize>() as f64 / lengths.len() as f64,
            censored: lengths.iter().filter(|&&l| l >= horizon).count(),
            kappa,
            b_corrected,
            mean_run_length_corrected: b_corrected.map(|b| crate::baselines::mean_run_length(&runs, b)),
            b_sim: if config.calibrate {
                Some(calibrate_arl(&runs, config.arl_target)?)
            } else {
                None
            },
        });
    }
    Ok(ArlReport {
        arl_target: config.arl_target,
        b0: config.b0,
        trials: config.trials,
        horizon,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Offline power

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub null: GeneratorSpec,
    pub alt: GeneratorSpec,
    #[serde(rename = "B_max", default = "two_hundred")]
    pub b_max: usize,
    /// Number of pre-change points at the start of the test block.
    #[serde(default = "hundred")]
    pub change: usize,
    #[serde(rename = "N", default = "default_n_blocks")]
    pub n_blocks: usize,
    #[serde(default = "alpha_05")]
    pub alpha: f64,
    #[serde(default = "hundred")]
    pub trials: usize,
    #[serde(default = "yes")]
    pub baselines: bool,
    #[serde(default = "five_hundred")]
    pub calibration_trials: usize,
    #[serde(default)]
    pub corrected: bool,
    #[serde(flatten)]
    pub model: ModelSettings,
    pub seed: u64,
}

fn alpha_05() -> f64 {
    0.05
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub trials: usize,
    pub m_power: f64,
    pub m_threshold: f64,
    /// Mean `B_max - argmax_B` over detected trials.
    pub m_mean_location: Option<f64>,
    pub hotelling_power: Option<f64>,
    pub hotelling_threshold: Option<f64>,
    pub glr_power: Option<f64>,
    pub glr_threshold: Option<f64>,
}

impl PowerReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut rows = vec![vec!["M".into(), num(self.m_power), num(self.m_threshold)]];
        if let (Some(p), Some(b)) = (self.hotelling_power, self.hotelling_threshold) {
            rows.push(vec!["hotelling".into(), num(p), num(b)]);
        }
        if let (Some(p), Some(b)) = (self.glr_power, self.glr_threshold) {
            rows.push(vec!["glr".into(), num(p), num(b)]);
        }
        csv_string(&["method", "power", "threshold"], rows)
    }
}

struct PowerTrial {
    m_alarm: bool,
    location: usize,
    hotelling: Option<bool>,
    glr: Option<bool>,
}

fn test_block(config: &PowerConfig, rng: &mut Rng) -> Result<Vec<Sample>> {
    let mut null = config.null.instantiate(rng)?;
    let mut alt = config.alt.instantiate(rng)?;
    let mut block = null.draw(rng, config.change);
    block.extend(alt.draw(rng, config.b_max - config.change));
    Ok(block)
}

/// Offline detection power of the M-statistic and, optionally, the
/// simulation-calibrated Hotelling and GLR scans.
pub fn run_power_experiment(config: &PowerConfig) -> Result<PowerReport> {
    check_trials(config.trials)?;
    if config.change >= config.b_max {
        return Err(Error::invalid("change must lie inside the test block"));
    }
    if config.null.dim() != config.alt.dim() {
        return Err(Error::DimensionMismatch {
            expected: config.null.dim(),
            found: config.alt.dim(),
        });
    }
    let model = NullModel::fit(&config.null, &config.model, derive_seed(config.seed, MODEL_STREAM))?;
    let moments = NullMoments::for_offline(model.h.clone(), config.n_blocks, config.b_max)?;
    let sd: Vec<f64> = (2..=config.b_max).map(|b| moments.variance(b).map(f64::sqrt)).collect::<Result<_>>()?;
    let m_threshold = if config.corrected {
        solve_offline_threshold_corrected(config.alpha, config.b_max, &moments.skew_by_block)?.b
    } else {
        solve_offline_threshold(config.alpha, config.b_max)?
    };

    let (hot_b, glr_b) = if config.baselines {
        let cal_seed = derive_seed(config.seed, CALIBRATION_STREAM);
        let null_block = |s: u64| generate(&config.null, config.b_max, s);
        let hot = calibrate_quantile(
            |s| Ok(hotelling_scan(&null_block(s)?, f64::INFINITY)?.max),
            config.alpha,
            config.calibration_trials,
            cal_seed,
        )?;
        let glr = calibrate_quantile(
            |s| Ok(glr_scan(&null_block(s)?, f64::INFINITY)?.max),
            config.alpha,
            config.calibration_trials,
            derive_seed(cal_seed, 1),
        )?;
        (Some(hot), Some(glr))
    } else {
        (None, None)
    };

    let outcomes = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(config.seed, TRIAL_STREAM, i);
            let reference = generate(&config.null, config.n_blocks * config.b_max, derive_seed(seed, 0))?;
            let blocks: Vec<Vec<Sample>> = reference.chunks(config.b_max).map(<[Sample]>::to_vec).collect();
            let mut rng = stream_rng(derive_seed(seed, 1), 0);
            let test = test_block(config, &mut rng)?;
            let z = z_series(&blocks, &test, &model.spec)?;
            let (mut best, mut argmax) = (f64::NEG_INFINITY, 2);
            for (j, (zb, s)) in z.iter().zip(&sd).enumerate() {
                if zb / s > best {
                    best = zb / s;
                    argmax = j + 2;
                }
            }
            Ok(PowerTrial {
                m_alarm: best > m_threshold,
                location: config.b_max - argmax,
                hotelling: hot_b.map(|b| hotelling_scan(&test, b).map(|s| s.alarm)).transpose()?,
                glr: glr_b.map(|b| glr_scan(&test, b).map(|s| s.alarm)).transpose()?,
            })
        })
        .collect::<Result<Vec<PowerTrial>>>()?;

    let n = outcomes.len() as f64;
    let rate = |f: &dyn Fn(&PowerTrial) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / n;
    let detected: Vec<f64> = outcomes.iter().filter(|o| o.m_alarm).map(|o| o.location as f64).collect();
    Ok(PowerReport {
        trials: config.trials,
        m_power: rate(&|o| o.m_alarm),
        m_threshold,
        m_mean_location: (!detected.is_empty()).then(|| detected.iter().sum::<f64>() / detected.len() as f64),
        hotelling_power: hot_b.map(|_| rate(&|o| o.hotelling == Some(true))),
        hotelling_threshold: hot_b,
        glr_power: glr_b.map(|_| rate(&|o| o.glr == Some(true))),
        glr_threshold: glr_b,
    })
}

// ---------------------------------------------------------------------------
// Detection delay

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EddConfig {
    pub null: GeneratorSpec,
    pub alt: GeneratorSpec,
    #[serde(rename = "B0", default = "twenty")]
    pub b0: usize,
    #[serde(rename = "N", default = "default_n_blocks")]
    pub n_blocks: usize,
    #[serde(default = "arl_5000")]
    pub arl_target: f64,
    #[serde(default = "hundred")]
    pub trials: usize,
    #[serde(default = "ten_thousand")]
    pub horizon: usize,
    #[serde(default)]
    pub corrected: bool,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    /// Also run the windowed Hotelling chart with a simulated threshold.
    #[serde(default)]
    pub hotelling: bool,
    #[serde(default = "two_hundred")]
    pub calibration_trials: usize,
    #[serde(flatten)]
    pub model: ModelSettings,
    pub seed: u64,
}

fn twenty() -> usize {
    20
}

fn ten_thousand() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EddReport {
    pub trials: usize,
    pub b: f64,
    /// Mean stopping time with the change at the first monitored sample,
    /// undetected trials counted at the horizon.
    pub edd: f64,
    pub detected: usize,
    pub hotelling_threshold: Option<f64>,
    pub hotelling_edd: Option<f64>,
    pub hotelling_detected: Option<usize>,
    #[serde(skip)]
    pub delays: Vec<usize>,
}

impl EddReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut rows = vec![vec!["M".into(), num(self.b), num(self.edd), self.detected.to_string()]];
        if let (Some(b), Some(e), Some(d)) = (self.hotelling_threshold, self.hotelling_edd, self.hotelling_detected) {
            rows.push(vec!["hotelling".into(), num(b), num(e), d.to_string()]);
        }
        csv_string(&["method", "threshold", "edd", "detected"], rows)
    }
}

fn online_threshold(arl: f64, b0: usize, corrected: bool, h: &HMoments, n_blocks: usize) -> Result<f64> {
    if corrected {
        Ok(solve_online_threshold_corrected(arl, b0, skewness_zb(h, b0, n_blocks)?)?.b)
    } else {
        solve_online_threshold(arl, b0)
    }
}

fn edd_with_model(config: &EddConfig, model: &NullModel) -> Result<EddReport> {
    check_trials(config.trials)?;
    check_online(config.b0, config.n_blocks, config.pool_size)?;
    if config.null.dim() != config.alt.dim() {
        return Err(Error::DimensionMismatch {
            expected: config.null.dim(),
            found: config.alt.dim(),
        });
    }
    let moments = NullMoments::new(model.h.clone(), config.n_blocks, [config.b0])?;
    let b = online_threshold(config.arl_target, config.b0, config.corrected, &model.h, config.n_blocks)?;
    let setup = OnlineSetup {
        null: &config.null,
        stream: &config.alt,
        spec: model.spec,
        moments,
        b0: config.b0,
        n_blocks: config.n_blocks,
        pool_size: config.pool_size,
    };
    let delays = (0..config.trials)
        .into_par_iter()
        .map(|i| Ok(setup.run(b, config.horizon, trial_seed(config.seed, TRIAL_STREAM, i))?.run_length(b)))
        .collect::<Result<Vec<usize>>>()?;
    let detected = delays.iter().filter(|&&d| d < config.horizon).count();

    let (hot_b, hot_edd, hot_detected) = if config.hotelling {
        let (b, e, d) = hotelling_edd(config)?;
        (Some(b), Some(e), Some(d))
    } else {
        (None, None, None)
    };
    Ok(EddReport {
        trials: config.trials,
        b,
        edd: delays.iter().sum::<usize>() as f64 / delays.len() as f64,
        detected,
        hotelling_threshold: hot_b,
        hotelling_edd: hot_edd,
        hotelling_detected: hot_detected,
        delays,
    })
}

fn hotelling_run(config: &EddConfig, stream: &GeneratorSpec, b: f64, horizon: usize, seed: u64) -> Result<RunRecord> {
    let pool = generate(&config.null, config.pool_size, derive_seed(seed, 0))?;
    let mut chart = HotellingOnline::from_reference(&pool, config.b0)?;
    let mut rng = stream_rng(derive_seed(seed, 2), 0);
    let mut g = stream.instantiate(&mut rng)?;
    let mut series = Vec::new();
    for _ in 0..horizon {
        if let Some(v) = chart.step(&g.sample(&mut rng))? {
            series.push((chart.time(), v));
            if v > b {
                break;
            }
        }
    }
    Ok(RunRecord::from_stream(series, horizon))
}

fn hotelling_edd(config: &EddConfig) -> Result<(f64, f64, usize)> {
    let cal_seed = derive_seed(config.seed, CALIBRATION_STREAM);
    let cal_horizon = (10.0 * config.arl_target).ceil() as usize;
    let runs = (0..config.calibration_trials)
        .into_par_iter()
        .map(|i| hotelling_run(config, &config.null, f64::INFINITY, cal_horizon, trial_seed(cal_seed, 0, i)))
        .collect::<Result<Vec<_>>>()?;
    let b = calibrate_arl(&runs, config.arl_target)?;
    let delays = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(config.seed, TRIAL_STREAM, i);
            Ok(hotelling_run(config, &config.alt, b, config.horizon, seed)?.run_length(b))
        })
        .collect::<Result<Vec<usize>>>()?;
    let detected = delays.iter().filter(|&&d| d < config.horizon).count();
    Ok((b, delays.iter().sum::<usize>() as f64 / delays.len() as f64, detected))
}

/// Expected detection delay with the change at the first monitored sample.
pub fn run_edd_experiment(config: &EddConfig) -> Result<EddReport> {
    let model = NullModel::fit(&config.null, &config.model, derive_seed(config.seed, MODEL_STREAM))?;
    edd_with_model(config, &model)
}

// ---------------------------------------------------------------------------
// Block-size sweep

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "twenty")]
    pub dim: usize,
    pub shifts: Vec<f64>,
    #[serde(rename = "B0_grid")]
    pub b0_grid: Vec<usize>,
    #[serde(rename = "N", default = "default_n_blocks")]
    pub n_blocks: usize,
    #[serde(default = "arl_5000")]
    pub arl_target: f64,
    #[serde(default = "hundred")]
    pub trials: usize,
    #[serde(default = "ten_thousand")]
    pub horizon: usize,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    #[serde(flatten)]
    pub model: ModelSettings,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// `shift -> [(B0, EDD)]`, keyed by the shift's decimal representation.
    pub edd: BTreeMap<String, Vec<(usize, f64)>>,
    /// `shift -> EDD-minimizing B0`.
    pub optimal: BTreeMap<String, usize>,
}

impl SweepReport {
    pub fn to_csv(&self) -> Result<String> {
        csv_string(
            &["shift", "B0", "edd"],
            self.edd
                .iter()
                .flat_map(|(s, rows)| rows.iter().map(move |(b0, e)| vec![s.clone(), b0.to_string(), num(*e)])),
        )
    }
}

/// EDD over a grid of window sizes for Gaussian mean shifts.
pub fn optimal_block_sweep(config: &SweepConfig) -> Result<SweepReport> {
    if config.b0_grid.is_empty() || config.shifts.is_empty() {
        return Err(Error::invalid("shift list and B0 grid must be non-empty"));
    }
    let null = gaussian_shift(config.dim, 0.0);
    let model = NullModel::fit(&null, &config.model, derive_seed(config.seed, MODEL_STREAM))?;
    for &b0 in &config.b0_grid {
        var_zb(&model.h, b0, config.n_blocks)?;
    }
    let mut edd = BTreeMap::new();
    let mut optimal = BTreeMap::new();
    for (k, &shift) in config.shifts.iter().enumerate() {
        let mut row = Vec::with_capacity(config.b0_grid.len());
        for &b0 in &config.b0_grid {
            let cfg = EddConfig {
                null: null.clone(),
                alt: gaussian_shift(config.dim, shift),
                b0,
                n_blocks: config.n_blocks,
                arl_target: config.arl_target,
                trials: config.trials,
                horizon: config.horizon,
                corrected: false,
                pool_size: config.pool_size,
                hotelling: false,
                calibration_trials: 0,
                model: config.model.clone(),
                seed: derive_seed(config.seed, 1000 + k as u64),
            };
            row.push((b0, edd_with_model(&cfg, &model)?.edd));
        }
        let best = row
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|&(b0, _)| b0)
            .expect("non-empty grid");
        let key = format!("{shift}");
        optimal.insert(key.clone(), best);
        edd.insert(key, row);
    }
    Ok(SweepReport { edd, optimal })
}

// ---------------------------------------------------------------------------
// Config dispatch

/// Any experiment, selected by the `experiment` field of a JSON config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Experiment {
    Sl(SlConfig),
    Arl(ArlConfig),
    Power(PowerConfig),
    Edd(EddConfig),
    Sweep(SweepConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentReport {
    Sl(SlReport),
    Arl(ArlReport),
    Power(PowerReport),
    Edd(EddReport),
    Sweep(SweepReport),
}

impl Experiment {
    pub fn seed(&self) -> u64 {
        match self {
            Experiment::Sl(c) => c.seed,
            Experiment::Arl(c) => c.seed,
            Experiment::Power(c) => c.seed,
            Experiment::Edd(c) => c.seed,
            Experiment::Sweep(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Experiment::Sl(c) => c.seed = seed,
            Experiment::Arl(c) => c.seed = seed,
            Experiment::Power(c) => c.seed = seed,
            Experiment::Edd(c) => c.seed = seed,
            Experiment::Sweep(c) => c.seed = seed,
        }
    }

    pub fn run(&self) -> Result<ExperimentReport> {
        Ok(match self {
            Experiment::Sl(c) => ExperimentReport::Sl(run_sl_experiment(c)?),
            Experiment::Arl(c) => ExperimentReport::Arl(run_arl_experiment(c)?),
            Experiment::Power(c) => ExperimentReport::Power(run_power_experiment(c)?),
            Experiment::Edd(c) => ExperimentReport::Edd(run_edd_experiment(c)?),
            Experiment::Sweep(c) => ExperimentReport::Sweep(optimal_block_sweep(c)?),
        })
    }
}

impl ExperimentReport {
    pub fn to_csv(&self) -> Result<String> {
        match self {
            ExperimentReport::Sl(r) => r.to_csv(),
            ExperimentReport::Arl(r) => r.to_csv(),
            ExperimentReport::Power(r) => r.to_csv(),
            ExperimentReport::Edd(r) => r.to_csv(),
            ExperimentReport::Sweep(r) => r.to_csv(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model() -> ModelSettings {
        ModelSettings {
            bandwidth: None,
            moment_draws: 2000,
            moment_pool: 500,
        }
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let (lo, hi) = wilson_interval(50, 1000);
        assert!(lo < 0.05 && hi > 0.05);
        assert!((lo - 0.0381).abs() < 1e-3 && (hi - 0.0655).abs() < 1e-3);
        assert_eq!(wilson_interval(0, 10).0, 0.0);
    }

    #[test]
    fn sl_experiment_is_reproducible() {
        let config = SlConfig {
            null: gaussian_shift(3, 0.0),
            b_max: 8,
            n_blocks: 3,
            alphas: vec![0.1],
            trials: 40,
            corrected: true,
            thresholds: vec![2.0],
            model: small_model(),
            seed: 4,
        };
        let a = run_sl_experiment(&config).unwrap();
        let b = run_sl_experiment(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.maxima, b.maxima);
        assert_eq!(a.rows.len(), 1);
        assert!(a.rows[0].b_corrected.is_some());
        assert!(a.to_csv().unwrap().starts_with("alpha,b_theory"));
    }

    #[test]
    fn edd_at_least_window() {
        let config = EddConfig {
            null: gaussian_shift(2, 0.0),
            alt: gaussian_shift(2, 3.0),
            b0: 10,
            n_blocks: 3,
            arl_target: 500.0,
            trials: 8,
            horizon: 500,
            corrected: false,
            pool_size: 300,
            hotelling: true,
            calibration_trials: 100,
            model: small_model(),
            seed: 1,
        };
        let r = run_edd_experiment(&config).unwrap();
        assert!(r.delays.iter().all(|&d| d >= 10));
        assert_eq!(r.detected, 8);
        assert!(r.hotelling_edd.unwrap() >= 10.0);
    }

    #[test]
    fn experiment_config_parses() {
        let text = r#"{
            "experiment": "power",
            "null": {"name": "gaussian", "dim": 20},
            "alt": {"name": "gaussian", "dim": 20, "mean": 0.2},
            "seed": 3,
            "moment_draws": 5000
        }"#;
        let e: Experiment = serde_json::from_str(text).unwrap();
        let Experiment::Power(p) = &e else { panic!("wrong variant") };
        assert_eq!(p.b_max, 200);
        assert_eq!(p.change, 100);
        assert_eq!(p.n_blocks, 10);
        assert_eq!(p.model.moment_draws, 5000);
        assert_eq!(e.seed(), 3);
    }

    #[test]
    fn pool_too_small_for_online() {
        assert!(check_online(20, 10, 100).is_err());
        assert!(check_online(20, 10, 209).is_ok());
    }
}
