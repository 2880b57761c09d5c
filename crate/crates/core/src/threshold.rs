//! Analytic threshold calibration.
//!
//! Tail approximations for the maximum of the standardized block statistics:
//! the significance level of the offline scan and the average run length of
//! the online stopping rule, their skewness-corrected variants, and
//! bisection solvers mapping a target level to a threshold `b`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// Default search interval for the threshold solvers.
pub const BRACKET: (f64, f64) = (0.5, 10.0);
const MAX_ITER: usize = 200;
const SCAN_POINTS: usize = 400;
/// Absolute tolerance on the significance level.
pub const SL_TOLERANCE: f64 = 1e-6;
/// Relative tolerance on the average run length.
pub const ARL_TOLERANCE: f64 = 1e-6;

/// `Φ(z) - 1/2`, accurate near zero.
fn half_centered_cdf(z: f64) -> f64 {
    0.5 * erf(z / SQRT_2)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 + half_centered_cdf(z)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Special function `ν(u) ≈ (2/u)(Φ(u/2) - 1/2) / ((u/2)Φ(u/2) + φ(u/2))`.
pub fn nu(u: f64) -> Result<f64> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::invalid(format!("nu requires a finite u > 0, got {u}")));
    }
    let z = u / 2.0;
    let cdf = normal_cdf(z);
    Ok((2.0 / u) * half_centered_cdf(z) / (z * cdf + normal_pdf(z)))
}

fn nu_unchecked(u: f64) -> f64 {
    let z = u / 2.0;
    (2.0 / u) * half_centered_cdf(z) / (z * normal_cdf(z) + normal_pdf(z))
}

/// Scaling of the `ν` argument in the offline approximation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuConvention {
    /// `ν(b √((2B-1)/(B(B-1))))`.
    #[default]
    Standard,
    /// `ν(b √(2(2B-1)/(B(B-1))))`.
    Doubled,
}

impl NuConvention {
    fn factor(self) -> f64 {
        match self {
            NuConvention::Standard => 1.0,
            NuConvention::Doubled => 2.0,
        }
    }
}

fn offline_term(b: f64, block: usize, convention: NuConvention) -> f64 {
    let bf = block as f64;
    let rate = (2.0 * bf - 1.0) / (bf * (bf - 1.0));
    b * b * rate / (2.0 * (2.0 * PI).sqrt()) * nu_unchecked(b * (convention.factor() * rate).sqrt())
}

fn check_b(b: f64) -> Result<()> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("threshold must be finite and positive, got {b}")))
    }
}

fn check_blocks(blocks: usize, what: &str) -> Result<()> {
    if blocks >= 2 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be at least 2, got {blocks}")))
    }
}

/// Approximate significance level `P(max_B Z_B' > b)` of the offline scan.
pub fn offline_sl(b: f64, b_max: usize) -> Result<f64> {
    offline_sl_with(b, b_max, NuConvention::Standard)
}

/// [`offline_sl`] with an explicit `ν` argument convention.
pub fn offline_sl_with(b: f64, b_max: usize, convention: NuConvention) -> Result<f64> {
    check_b(b)?;
    check_blocks(b_max, "B_max")?;
    let tail = (-0.5 * b * b).exp();
    Ok(tail * (2..=b_max).map(|bl| offline_term(b, bl, convention)).sum::<f64>())
}

fn online_rate(b: f64, b0: usize) -> f64 {
    let bf = b0 as f64;
    let rate = (2.0 * bf - 1.0) / (bf * (bf - 1.0));
    rate / (2.0 * PI).sqrt() * nu_unchecked(b * (2.0 * rate).sqrt())
}

/// Approximate average run length of the online stopping rule.
pub fn online_arl(b: f64, b0: usize) -> Result<f64> {
    check_b(b)?;
    check_blocks(b0, "B0")?;
    Ok((0.5 * b * b).exp() / (b * b) / online_rate(b, b0))
}

/// Root of `θ + κθ²/2 = b`, continuous in `κ` at zero.
pub fn solve_theta(b: f64, kappa: f64) -> Result<f64> {
    if kappa == 0.0 {
        return Ok(b);
    }
    let discriminant = 1.0 + 2.0 * kappa * b;
    if discriminant < 0.0 {
        return Err(Error::NegativeDiscriminant { discriminant });
    }
    // (√(1+2κb) - 1)/κ rewritten to avoid cancellation for small κ
    Ok(2.0 * b / (discriminant.sqrt() + 1.0))
}

/// Cubic cumulant approximation `ψ(θ) = θ²/2 + κθ³/6`.
fn psi(theta: f64, kappa: f64) -> f64 {
    theta * theta / 2.0 + kappa * theta.powi(3) / 6.0
}

/// Log of the tail factor replacing `e^{-b²/2}`. Falls back to `-b²/2`
/// when the tilt equation has no real root.
fn corrected_log_tail(b: f64, kappa: f64) -> (f64, Option<f64>) {
    match solve_theta(b, kappa) {
        Ok(theta) => (psi(theta, kappa) - theta * b, Some(theta)),
        Err(_) => (-0.5 * b * b, None),
    }
}

/// Result of a skewness-corrected evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Corrected {
    pub value: f64,
    pub theta_by_block: BTreeMap<usize, f64>,
    /// Block sizes for which the uncorrected term was used.
    pub fallbacks: Vec<usize>,
}

/// Skewness-corrected significance level of the offline scan.
pub fn offline_sl_corrected(
    b: f64,
    b_max: usize,
    kappa_by_block: &BTreeMap<usize, f64>,
) -> Result<Corrected> {
    offline_sl_corrected_with(b, b_max, kappa_by_block, NuConvention::Standard)
}

pub fn offline_sl_corrected_with(
    b: f64,
    b_max: usize,
    kappa_by_block: &BTreeMap<usize, f64>,
    convention: NuConvention,
) -> Result<Corrected> {
    check_b(b)?;
    check_blocks(b_max, "B_max")?;
    let mut value = 0.0;
    let mut theta_by_block = BTreeMap::new();
    let mut fallbacks = Vec::new();
    for bl in 2..=b_max {
        let kappa = *kappa_by_block.get(&bl).ok_or(Error::MissingBlockSize(bl))?;
        let (log_tail, theta) = corrected_log_tail(b, kappa);
        match theta {
            Some(t) => {
                theta_by_block.insert(bl, t);
            }
            None => fallbacks.push(bl),
        }
        value += log_tail.exp() * offline_term(b, bl, convention);
    }
    Ok(Corrected {
        value,
        theta_by_block,
        fallbacks,
    })
}

/// Skewness-corrected average run length for window `b0` with skewness `kappa`.
pub fn online_arl_corrected(b: f64, b0: usize, kappa: f64) -> Result<Corrected> {
    check_b(b)?;
    check_blocks(b0, "B0")?;
    let (log_tail, theta) = corrected_log_tail(b, kappa);
    let value = (-log_tail).exp() / (b * b) / online_rate(b, b0);
    let mut theta_by_block = BTreeMap::new();
    let mut fallbacks = Vec::new();
    match theta {
        Some(t) => {
            theta_by_block.insert(b0, t);
        }
        None => fallbacks.push(b0),
    }
    Ok(Corrected {
        value,
        theta_by_block,
        fallbacks,
    })
}

/// Bisection for the largest root of `f` on `[lo, hi]`.
///
/// `f` is positive below the root and negative above it in the tail. Near
/// the lower end of the bracket the approximations are not monotone, so
/// the bracket is first narrowed by scanning down from `hi` to the last
/// grid point where `f` is still positive.
fn bisect_tail(
    mut f: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    done: impl Fn(f64) -> bool,
) -> Result<f64> {
    let f_hi = f(hi)?;
    if f_hi > 0.0 {
        return Err(Error::NoBracket { lo, hi });
    }
    if done(f_hi) {
        return Ok(hi);
    }
    let step = (hi - lo) / SCAN_POINTS as f64;
    let mut a = None;
    let mut upper = hi;
    for i in 1..=SCAN_POINTS {
        let x = hi - step * i as f64;
        let fx = f(x)?;
        if done(fx) {
            return Ok(x);
        }
        if fx > 0.0 {
            a = Some(x);
            break;
        }
        upper = x;
    }
    let (mut a, mut c) = (a.ok_or(Error::NoBracket { lo, hi })?, upper);
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (a + c);
        let fm = f(mid)?;
        if done(fm) {
            return Ok(mid);
        }
        if fm > 0.0 {
            a = mid;
        } else {
            c = mid;
        }
    }
    Ok(0.5 * (a + c))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.001 && alpha < 0.5 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha must lie in (0.001, 0.5), got {alpha}")))
    }
}

fn check_arl(arl: f64) -> Result<()> {
    if (100.0..=1e8).contains(&arl) {
        Ok(())
    } else {
        Err(Error::invalid(format!("ARL target must lie in [100, 1e8], got {arl}")))
    }
}

/// Threshold `b` at which the offline significance level equals `alpha`.
pub fn solve_offline_threshold(alpha: f64, b_max: usize) -> Result<f64> {
    solve_offline_threshold_with(alpha, b_max, NuConvention::Standard)
}

pub fn solve_offline_threshold_with(
    alpha: f64,
    b_max: usize,
    convention: NuConvention,
) -> Result<f64> {
    check_alpha(alpha)?;
    check_blocks(b_max, "B_max")?;
    bisect_tail(
        |b| Ok(offline_sl_with(b, b_max, convention)? - alpha),
        BRACKET.0,
        BRACKET.1,
        |r| r.abs() <= SL_TOLERANCE,
    )
}

/// Threshold `b` at which the online ARL equals `arl_target`.
pub fn solve_online_threshold(arl_target: f64, b0: usize) -> Result<f64> {
    check_arl(arl_target)?;
    check_blocks(b0, "B0")?;
    let log_target = arl_target.ln();
    bisect_tail(
        |b| Ok(log_target - online_arl(b, b0)?.ln()),
        BRACKET.0,
        BRACKET.1,
        |r| r.abs() <= ARL_TOLERANCE,
    )
}

/// Solved threshold with the tilt parameters used at the solution.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectedThreshold {
    pub b: f64,
    pub theta_by_block: BTreeMap<usize, f64>,
    pub fallbacks: Vec<usize>,
}

/// Skewness-corrected offline threshold.
pub fn solve_offline_threshold_corrected(
    alpha: f64,
    b_max: usize,
    kappa_by_block: &BTreeMap<usize, f64>,
) -> Result<CorrectedThreshold> {
    check_alpha(alpha)?;
    check_blocks(b_max, "B_max")?;
    let b = bisect_tail(
        |b| Ok(offline_sl_corrected(b, b_max, kappa_by_block)?.value - alpha),
        BRACKET.0,
        BRACKET.1,
        |r| r.abs() <= SL_TOLERANCE,
    )?;
    let at = offline_sl_corrected(b, b_max, kappa_by_block)?;
    Ok(CorrectedThreshold {
        b,
        theta_by_block: at.theta_by_block,
        fallbacks: at.fallbacks,
    })
}

/// Skewness-corrected online threshold.
pub fn solve_online_threshold_corrected(
    arl_target: f64,
    b0: usize,
    kappa: f64,
) -> Result<CorrectedThreshold> {
    check_arl(arl_target)?;
    check_blocks(b0, "B0")?;
    let log_target = arl_target.ln();
    let b = bisect_tail(
        |b| Ok(log_target - online_arl_corrected(b, b0, kappa)?.value.ln()),
        BRACKET.0,
        BRACKET.1,
        |r| r.abs() <= ARL_TOLERANCE,
    )?;
    let at = online_arl_corrected(b, b0, kappa)?;
    Ok(CorrectedThreshold {
        b,
        theta_by_block: at.theta_by_block,
        fallbacks: at.fallbacks,
    })
}

/// Calibration target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Significance(f64),
    Arl(f64),
}

/// A calibrated threshold, as written by the `threshold` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawThresholdSpec")]
pub struct ThresholdSpec {
    pub b: f64,
    pub target: Target,
    /// `B_max` for a significance target, `B0` for an ARL target.
    pub blocks: usize,
    pub corrected: bool,
    #[serde(rename = "theta_by_B", default, skip_serializing_if = "Option::is_none")]
    pub theta_by_block: Option<BTreeMap<usize, f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fallbacks: Vec<usize>,
}

#[derive(Deserialize)]
struct RawThresholdSpec {
    b: f64,
    target: Target,
    blocks: usize,
    corrected: bool,
    #[serde(rename = "theta_by_B", default)]
    theta_by_block: Option<BTreeMap<usize, f64>>,
    #[serde(default)]
    fallbacks: Vec<usize>,
}

impl TryFrom<RawThresholdSpec> for ThresholdSpec {
    type Error = Error;

    fn try_from(raw: RawThresholdSpec) -> Result<Self> {
        check_b(raw.b)?;
        check_blocks(raw.blocks, "block count")?;
        match raw.target {
            Target::Significance(a) if !(a > 0.0 && a < 1.0) => {
                return Err(Error::invalid(format!("alpha must lie in (0, 1), got {a}")))
            }
            Target::Arl(l) if !(l > 1.0) => {
                return Err(Error::invalid(format!("ARL must exceed 1, got {l}")))
            }
            _ => {}
        }
        if let Some(theta) = &raw.theta_by_block {
            if theta.values().any(|t| !(*t > 0.0)) {
                return Err(Error::invalid("theta values must be positive"));
            }
        }
        Ok(ThresholdSpec {
            b: raw.b,
            target: raw.target,
            blocks: raw.blocks,
            corrected: raw.corrected,
            theta_by_block: raw.theta_by_block,
            fallbacks: raw.fallbacks,
        })
    }
}

impl ThresholdSpec {
    /// Uncorrected calibration.
    pub fn calibrate(target: Target, blocks: usize) -> Result<Self> {
        let b = match target {
            Target::Significance(alpha) => solve_offline_threshold(alpha, blocks)?,
            Target::Arl(arl) => solve_online_threshold(arl, blocks)?,
        };
        Ok(ThresholdSpec {
            b,
            target,
            blocks,
            corrected: false,
            theta_by_block: None,
            fallbacks: Vec::new(),
        })
    }

    /// Skewness-corrected calibration. `kappa_by_block` must cover
    /// `2..=blocks` for a significance target and `blocks` for an ARL target.
    pub fn calibrate_corrected(
        target: Target,
        blocks: usize,
        kappa_by_block: &BTreeMap<usize, f64>,
    ) -> Result<Self> {
        let solved = match target {
            Target::Significance(alpha) => {
                solve_offline_threshold_corrected(alpha, blocks, kappa_by_block)?
            }
            Target::Arl(arl) => {
                let kappa = *kappa_by_block
                    .get(&blocks)
                    .ok_or(Error::MissingBlockSize(blocks))?;
                solve_online_threshold_corrected(arl, blocks, kappa)?
            }
        };
        Ok(ThresholdSpec {
            b: solved.b,
            target,
            blocks,
            corrected: true,
            theta_by_block: Some(solved.theta_by_block),
            fallbacks: solved.fallbacks,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Φ(z) - 1/2 by its Maclaurin series, exact to double precision for |z| ≤ 3.
    fn series_centered_cdf(z: f64) -> f64 {
        let mut term = z;
        let mut sum = z;
        let mut k = 0.0;
        while term.abs() > 1e-20 * sum.abs() {
            k += 1.0;
            term *= -z * z / (2.0 * k);
            sum += term / (2.0 * k + 1.0);
        }
        sum / (2.0 * PI).sqrt()
    }

    fn series_nu(u: f64) -> f64 {
        let z = u / 2.0;
        let c = series_centered_cdf(z);
        (2.0 / u) * c / (z * (0.5 + c) + normal_pdf(z))
    }

    #[test]
    fn nu_limit_at_zero() {
        assert!((nu(1e-9).unwrap() - 1.0).abs() < 1e-8);
        assert!((nu(1e-4).unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn nu_at_one_matches_series() {
        let v = nu(1.0).unwrap();
        assert!((v - series_nu(1.0)).abs() < 1e-10);
        assert!((v - 0.548_762_986_126_061_2).abs() < 1e-10);
    }

    #[test]
    fn nu_matches_series_on_grid() {
        for i in 1..=200 {
            let u = i as f64 * 0.01;
            assert!((nu(u).unwrap() - series_nu(u)).abs() < 1e-10, "u = {u}");
        }
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn nu_high_precision_values() {
        let reference = [
            (0.01, 0.993_755_969_397_780_27),
            (0.5, 0.736_140_963_151_850_53),
            (1.42, 0.432_480_498_227_584_36),
            (2.0, 0.315_092_653_373_968_08),
            (3.7, 0.135_773_459_556_276_42),
            (6.0, 0.055_398_509_958_794_846),
            (12.0, 0.013_888_888_861_121_739),
        ];
        for (u, expected) in reference {
            assert!((nu(u).unwrap() - expected).abs() < 1e-10, "u = {u}");
        }
    }

    #[test]
    fn nu_decreasing() {
        let mut prev = 1.0;
        for i in 1..=6000 {
            let v = nu(i as f64 * 0.001).unwrap();
            assert!(v < prev && v > 0.0);
            prev = v;
        }
    }

    #[test]
    fn nu_rejects_non_positive() {
        assert!(nu(0.0).is_err());
        assert!(nu(-1.0).is_err());
        assert!(nu(f64::NAN).is_err());
    }

    #[test]
    fn offline_sl_reference_levels() {
        assert!((offline_sl(2.72, 10).unwrap() - 0.05).abs() < 0.002);
        assert!((offline_sl(2.90, 20).unwrap() - 0.05).abs() < 0.002);
        assert!((offline_sl(3.62, 50).unwrap() - 0.01).abs() < 0.0005);
    }

    #[test]
    fn offline_thresholds() {
        let cases = [
            (0.10, 10, 2.40),
            (0.05, 10, 2.72),
            (0.01, 10, 3.31),
            (0.10, 20, 2.61),
            (0.05, 20, 2.90),
            (0.01, 20, 3.46),
            (0.10, 50, 2.80),
            (0.05, 50, 3.08),
            (0.01, 50, 3.62),
        ];
        for (alpha, b_max, expected) in cases {
            let b = solve_offline_threshold(alpha, b_max).unwrap();
            assert!((b - expected).abs() <= 0.01, "alpha {alpha} B_max {b_max}: {b}");
            assert!((offline_sl(b, b_max).unwrap() - alpha).abs() <= SL_TOLERANCE);
        }
    }

    #[test]
    fn doubled_convention_differs() {
        let a = offline_sl_with(3.0, 20, NuConvention::Standard).unwrap();
        let b = offline_sl_with(3.0, 20, NuConvention::Doubled).unwrap();
        assert!(b < a);
    }

    #[test]
    fn online_round_trip() {
        let b = solve_online_threshold(5000.0, 20).unwrap();
        assert!((online_arl(b, 20).unwrap() - 5000.0).abs() <= 1.0);
        assert!((b - 3.733).abs() < 0.005);
    }

    #[test]
    fn online_threshold_growth() {
        let mut prev_b = 0.0;
        let mut prev_ratio = 0.0;
        for k in 3..=8 {
            let arl = 10f64.powi(k);
            let b = solve_online_threshold(arl, 50).unwrap();
            let ratio = b / (2.0 * arl.ln()).sqrt();
            assert!(b > prev_b && ratio > prev_ratio && ratio < 1.0);
            prev_b = b;
            prev_ratio = ratio;
        }
    }

    #[test]
    fn unreachable_arl_target_is_reported() {
        // the approximation bottoms out just above 100 for B0 = 50
        assert!(matches!(
            solve_online_threshold(100.0, 50),
            Err(Error::NoBracket { .. })
        ));
    }

    #[test]
    fn online_arl_increasing_in_tail() {
        let mut prev = 0.0;
        for i in 0..=900 {
            let b = 1.5 + i as f64 * 0.005;
            let v = online_arl(b, 20).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn theta_closed_form() {
        assert_eq!(solve_theta(3.0, 0.0).unwrap(), 3.0);
        let t = solve_theta(3.0, 0.2).unwrap();
        assert!((t - (2.2f64.sqrt() - 1.0) / 0.2).abs() < 1e-12);
        assert!((t - 2.41620).abs() < 1e-5);
        assert!((t + 0.1 * t * t - 3.0).abs() < 1e-10);
        assert!((solve_theta(3.0, 1e-12).unwrap() - 3.0).abs() < 1e-10);
        assert!(matches!(
            solve_theta(3.0, -0.5),
            Err(Error::NegativeDiscriminant { .. })
        ));
    }

    #[test]
    fn zero_skew_correction_is_exact() {
        let kappa: BTreeMap<usize, f64> = (2..=20).map(|b| (b, 0.0)).collect();
        let c = offline_sl_corrected(3.1, 20, &kappa).unwrap();
        assert!((c.value - offline_sl(3.1, 20).unwrap()).abs() < 1e-12);
        assert!(c.fallbacks.is_empty());
        let o = online_arl_corrected(3.1, 20, 0.0).unwrap();
        assert_eq!(o.value, online_arl(3.1, 20).unwrap());
    }

    #[test]
    fn negative_discriminant_falls_back() {
        let mut kappa: BTreeMap<usize, f64> = (2..=5).map(|b| (b, 0.0)).collect();
        kappa.insert(3, -10.0);
        let c = offline_sl_corrected(3.0, 5, &kappa).unwrap();
        assert_eq!(c.fallbacks, vec![3]);
        assert!((c.value - offline_sl(3.0, 5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn positive_skew_raises_thresholds() {
        let kappa: BTreeMap<usize, f64> = (2..=10).map(|b| (b, 0.3)).collect();
        let plain = solve_offline_threshold(0.05, 10).unwrap();
        let corrected = solve_offline_threshold_corrected(0.05, 10, &kappa).unwrap();
        assert!(corrected.b > plain);
        let plain = solve_online_threshold(5000.0, 10).unwrap();
        let corrected = solve_online_threshold_corrected(5000.0, 10, 0.3).unwrap();
        assert!(corrected.b > plain);
    }

    #[test]
    fn missing_kappa_is_an_error() {
        let kappa: BTreeMap<usize, f64> = (2..=5).map(|b| (b, 0.0)).collect();
        assert!(matches!(
            offline_sl_corrected(3.0, 6, &kappa),
            Err(Error::MissingBlockSize(6))
        ));
    }

    #[test]
    fn solver_range_checks() {
        assert!(solve_offline_threshold(0.6, 10).is_err());
        assert!(solve_offline_threshold(0.0005, 10).is_err());
        assert!(solve_online_threshold(50.0, 10).is_err());
        assert!(solve_online_threshold(1e9, 10).is_err());
    }

    #[test]
    fn threshold_spec_json() {
        let spec = ThresholdSpec::calibrate(Target::Arl(5000.0), 20).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let back: ThresholdSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
        let bad = text.replace(&format!("{}", spec.b), "-1.0");
        assert!(serde_json::from_str::<ThresholdSpec>(&bad).is_err());
    }
}
