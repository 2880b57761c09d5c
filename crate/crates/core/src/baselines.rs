//! Parametric comparison statistics: offline Hotelling T² and GLR scans, the
//! one-dimensional Shewhart chart, and a sliding-window online T².

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{common_dim, Sample};
use crate::numeric::quantile;
use crate::rng::derive_seed;

/// Largest accepted condition-number estimate for a covariance matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Statistic series over candidate change points (offline) or time (online).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineScan {
    pub series: Vec<(usize, f64)>,
    pub max: f64,
    pub argmax: usize,
    pub b: f64,
    pub alarm: bool,
    /// Candidates skipped because a covariance estimate was degenerate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<usize>,
}

impl BaselineScan {
    fn from_series(series: Vec<(usize, f64)>, b: f64, skipped: Vec<usize>) -> Result<Self> {
        let (argmax, max) = series
            .iter()
            .copied()
            .fold(None, |best: Option<(usize, f64)>, (k, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((k, v)),
            })
            .ok_or_else(|| Error::DegenerateData("no admissible candidate".into()))?;
        Ok(BaselineScan {
            series,
            max,
            argmax,
            b,
            alarm: max > b,
            skipped,
        })
    }
}

/// Cholesky factor with a conditioning check based on the factor diagonal.
fn guarded_cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(m).ok_or(Error::SingularCovariance {
        condition: f64::INFINITY,
    })?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let condition = (hi / lo).powi(2);
    if !(lo > 0.0) || !(condition <= MAX_CONDITION) {
        return Err(Error::SingularCovariance { condition });
    }
    Ok(chol)
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Data as centred column vectors with prefix sums of values and outer products.
struct Prefix {
    n: usize,
    d: usize,
    sums: Vec<DVector<f64>>,
    outer: Vec<DMatrix<f64>>,
}

impl Prefix {
    fn new(data: &[Sample], with_outer: bool) -> Result<Self> {
        let d = common_dim(data)?.ok_or_else(|| Error::invalid("empty data"))?;
        let n = data.len();
        let mut mean = DVector::zeros(d);
        for s in data {
            mean += DVector::from_column_slice(s);
        }
        mean /= n as f64;
        let mut sums = vec![DVector::zeros(d)];
        let mut outer = vec![DMatrix::zeros(d, d)];
        for s in data {
            let x = DVector::from_column_slice(s) - &mean;
            if with_outer {
                let next = outer.last().unwrap() + &x * x.transpose();
                outer.push(next);
            }
            let next = sums.last().unwrap() + x;
            sums.push(next);
        }
        if !with_outer {
            let total = data.iter().fold(DMatrix::zeros(d, d), |acc, s| {
                let x = DVector::from_column_slice(s) - &mean;
                acc + &x * x.transpose()
            });
            outer = vec![total];
        }
        Ok(Prefix { n, d, sums, outer })
    }

    /// Scatter about the segment mean of points `lo..hi`.
    fn scatter(&self, lo: usize, hi: usize) -> DMatrix<f64> {
        let m = (hi - lo) as f64;
        let s = &self.sums[hi] - &self.sums[lo];
        &self.outer[hi] - &self.outer[lo] - (&s * s.transpose()) / m
    }
}

fn check_split(n: usize, k: usize) -> Result<()> {
    if k >= 1 && k < n {
        Ok(())
    } else {
        Err(Error::invalid(format!("split k must lie in [1, {}], got {k}", n.saturating_sub(1))))
    }
}

fn hotelling_at(p: &Prefix, k: usize, total_outer: &DMatrix<f64>) -> Result<f64> {
    let n = p.n as f64;
    let kf = k as f64;
    let left = &p.sums[k];
    let right = &p.sums[p.n] - left;
    let pooled = (total_outer - (left * left.transpose()) / kf - (&right * right.transpose()) / (n - kf))
        / (n - 2.0);
    let chol = guarded_cholesky(pooled)?;
    let delta = left / kf - &right / (n - kf);
    let solved = chol.solve(&delta);
    Ok(kf * (n - kf) / n * delta.dot(&solved))
}

fn check_hotelling(n: usize, d: usize) -> Result<()> {
    if n < d + 3 {
        return Err(Error::InsufficientData {
            needed: d + 3,
            available: n,
        });
    }
    Ok(())
}

/// Two-sample Hotelling statistic for a split after the first `k` points,
/// using the pooled within-segment covariance.
pub fn hotelling_offline(data: &[Sample], k: usize) -> Result<f64> {
    let p = Prefix::new(data, false)?;
    check_hotelling(p.n, p.d)?;
    check_split(p.n, k)?;
    hotelling_at(&p, k, &p.outer[0])
}

/// Maximizes the Hotelling statistic over every split `k = 1..n-1`.
pub fn hotelling_scan(data: &[Sample], b: f64) -> Result<BaselineScan> {
    let p = Prefix::new(data, false)?;
    check_hotelling(p.n, p.d)?;
    let total = p.outer[0].clone();
    let series = (1..p.n)
        .map(|k| Ok((k, hotelling_at(&p, k, &total)?)))
        .collect::<Result<Vec<_>>>()?;
    BaselineScan::from_series(series, b, Vec::new())
}

/// Shewhart chart for scalar data: the one-dimensional Hotelling scan.
pub fn shewhart_scan(data: &[Sample], b: f64) -> Result<BaselineScan> {
    if let Some(d) = common_dim(data)? {
        if d != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: d });
        }
    }
    hotelling_scan(data, b)
}

fn glr_at(p: &Prefix, k: usize, log_det_all: f64) -> Result<f64> {
    let n = p.n as f64;
    let kf = k as f64;
    let left = guarded_cholesky(p.scatter(0, k) / kf)?;
    let right = guarded_cholesky(p.scatter(k, p.n) / (n - kf))?;
    Ok(n * log_det_all - kf * log_det(&left) - (n - kf) * log_det(&right))
}

/// Gaussian GLR statistic for a split after the first `k` points.
pub fn glr_offline(data: &[Sample], k: usize) -> Result<f64> {
    let p = Prefix::new(data, true)?;
    check_split(p.n, k)?;
    let all = guarded_cholesky(p.scatter(0, p.n) / p.n as f64)?;
    glr_at(&p, k, log_det(&all))
}

/// Maximizes the GLR statistic over `k` in `[d+2, n-d-2]`. Candidates with a
/// degenerate segment covariance are skipped and listed in the result.
pub fn glr_scan(data: &[Sample], b: f64) -> Result<BaselineScan> {
    let p = Prefix::new(data, true)?;
    let (lo, hi) = (p.d + 2, p.n.saturating_sub(p.d + 2));
    if lo > hi {
        return Err(Error::InsufficientData {
            needed: 2 * (p.d + 2),
            available: p.n,
        });
    }
    let all = log_det(&guarded_cholesky(p.scatter(0, p.n) / p.n as f64)?);
    let mut series = Vec::with_capacity(hi - lo + 1);
    let mut skipped = Vec::new();
    for k in lo..=hi {
        match glr_at(&p, k, all) {
            Ok(v) => series.push((k, v)),
            Err(Error::SingularCovariance { .. }) => skipped.push(k),
            Err(e) => return Err(e),
        }
    }
    BaselineScan::from_series(series, b, skipped)
}

/// Sliding-window Hotelling chart `B0 (x̄_t - μ̂)ᵀ Σ̂⁻¹ (x̄_t - μ̂)` with `μ̂`
/// and `Σ̂` estimated from reference data.
#[derive(Clone, Debug)]
pub struct HotellingOnline {
    b0: usize,
    mu: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    window: Vec<DVector<f64>>,
    sum: DVector<f64>,
    t: usize,
}

impl HotellingOnline {
    /// Estimates the mean and unbiased covariance from `reference`.
    pub fn from_reference(reference: &[Sample], b0: usize) -> Result<Self> {
        let d = common_dim(reference)?.ok_or_else(|| Error::invalid("empty reference data"))?;
        if reference.len() < d + 2 {
            return Err(Error::InsufficientData {
                needed: d + 2,
                available: reference.len(),
            });
        }
        let n = reference.len() as f64;
        let mut mu = DVector::zeros(d);
        for s in reference {
            mu += DVector::from_column_slice(s);
        }
        mu /= n;
        let mut cov = DMatrix::zeros(d, d);
        for s in reference {
            let x = DVector::from_column_slice(s) - &mu;
            cov += &x * x.transpose();
        }
        cov /= n - 1.0;
        Self::new(mu, cov, b0)
    }

    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, b0: usize) -> Result<Self> {
        if b0 == 0 {
            return Err(Error::invalid("window size must be positive"));
        }
        if sigma.nrows() != mu.len() || sigma.ncols() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                found: sigma.nrows(),
            });
        }
        let d = mu.len();
        Ok(HotellingOnline {
            b0,
            chol: guarded_cholesky(sigma)?,
            mu,
            window: Vec::with_capacity(b0),
            sum: DVector::zeros(d),
            t: 0,
        })
    }

    pub fn time(&self) -> usize {
        self.t
    }

    /// Consumes one sample; returns the statistic once `B0` samples are in.
    pub fn step(&mut self, sample: &Sample) -> Result<Option<f64>> {
        if sample.dim() != self.mu.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mu.len(),
                found: sample.dim(),
            });
        }
        let x = DVector::from_column_slice(sample) - &self.mu;
        let slot = self.t % self.b0;
        if self.window.len() < self.b0 {
            self.sum += &x;
            self.window.push(x);
        } else {
            self.sum -= &self.window[slot];
            self.sum += &x;
            self.window[slot] = x;
            if slot == 0 {
                self.sum = self.window.iter().fold(DVector::zeros(self.mu.len()), |a, v| a + v);
            }
        }
        self.t += 1;
        if self.window.len() < self.b0 {
            return Ok(None);
        }
        let mean = &self.sum / self.b0 as f64;
        Ok(Some(self.b0 as f64 * mean.dot(&self.chol.solve(&mean))))
    }

    /// First time the statistic exceeds `b`, within `max_steps` samples.
    pub fn run_until_stop(
        &mut self,
        stream: impl IntoIterator<Item = Sample>,
        max_steps: usize,
        b: f64,
    ) -> Result<Option<usize>> {
        for s in stream.into_iter().take(max_steps) {
            if let Some(v) = self.step(&s)? {
                if v > b {
                    return Ok(Some(self.t));
                }
            }
        }
        Ok(None)
    }
}

/// Empirical `(1 - alpha)` quantile of the null maximum over `trials`
/// independent runs of `null_max(seed)`.
pub fn calibrate_quantile<F>(null_max: F, alpha: f64, trials: usize, seed: u64) -> Result<f64>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    if trials < 100 {
        return Err(Error::invalid(format!("at least 100 trials are required, got {trials}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let maxima = (0..trials)
        .into_par_iter()
        .map(|i| null_max(derive_seed(seed, i as u64)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(quantile(&maxima, 1.0 - alpha))
}

/// Running-maximum record of one null run: the times and values at which
/// the statistic set a new maximum, enough to recover the run length for
/// any threshold.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    pub records: Vec<(usize, f64)>,
    pub horizon: usize,
}

impl RunRecord {
    /// Collects records from a statistic stream of at most `horizon` steps.
    pub fn from_stream(stream: impl IntoIterator<Item = (usize, f64)>, horizon: usize) -> Self {
        let mut records: Vec<(usize, f64)> = Vec::new();
        for (t, v) in stream {
            if t > horizon {
                break;
            }
            if records.last().is_none_or(|&(_, m)| v > m) {
                records.push((t, v));
            }
        }
        RunRecord { records, horizon }
    }

    /// Run length at threshold `b`, censored at the horizon.
    pub fn run_length(&self, b: f64) -> usize {
        self.records
            .iter()
            .find(|&&(_, v)| v > b)
            .map_or(self.horizon, |&(t, _)| t)
    }
}

/// Mean censored run length at threshold `b`.
pub fn mean_run_length(runs: &[RunRecord], b: f64) -> f64 {
    runs.iter().map(|r| r.run_length(b) as f64).sum::<f64>() / runs.len() as f64
}

/// Smallest record value `b` whose mean run length reaches `arl_target`.
pub fn calibrate_arl(runs: &[RunRecord], arl_target: f64) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::invalid("no null runs"));
    }
    let mut candidates: Vec<f64> = runs.iter().flat_map(|r| r.records.iter().map(|&(_, v)| v)).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let (mut lo, mut hi) = (0usize, candidates.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if mean_run_length(runs, candidates[mid]) >= arl_target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates
        .get(lo)
        .copied()
        .ok_or(Error::NoBracket {
            lo: candidates.first().copied().unwrap_or(f64::NAN),
            hi: candidates.last().copied().unwrap_or(f64::NAN),
        })
}

/// Runs `null_run(seed)` for `trials` derived seeds and calibrates the
/// threshold whose mean run length matches `arl_target`.
pub fn calibrate_online_threshold<F>(
    null_run: F,
    arl_target: f64,
    trials: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(u64) -> Result<RunRecord> + Sync,
{
    if trials < 100 {
        return Err(Error::invalid(format!("at least 100 trials are required, got {trials}")));
    }
    let runs = (0..trials)
        .into_par_iter()
        .map(|i| null_run(derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    calibrate_arl(&runs, arl_target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, d: usize, seed: u64) -> Vec<Sample> {
        let mut rng = stream_rng(seed, 3);
        (0..n)
            .map(|_| Sample::new((0..d).map(|_| rng.sample(StandardNormal)).collect()).unwrap())
            .collect()
    }

    fn affine(data: &[Sample], a: &DMatrix<f64>, shift: &DVector<f64>) -> Vec<Sample> {
        data.iter()
            .map(|s| {
                let y = a * DVector::from_column_slice(s) + shift;
                Sample::new(y.iter().copied().collect()).unwrap()
            })
            .collect()
    }

    /// Direct two-sample T² with explicit segment covariances.
    fn naive_hotelling(data: &[Sample], k: usize) -> f64 {
        let d = data[0].dim();
        let mean = |s: &[Sample]| {
            s.iter().fold(DVector::zeros(d), |a, x| a + DVector::from_column_slice(x)) / s.len() as f64
        };
        let (l, r) = data.split_at(k);
        let (ml, mr) = (mean(l), mean(r));
        let mut w = DMatrix::zeros(d, d);
        for x in l {
            let c = DVector::from_column_slice(x) - &ml;
            w += &c * c.transpose();
        }
        for x in r {
            let c = DVector::from_column_slice(x) - &mr;
            w += &c * c.transpose();
        }
        let n = data.len() as f64;
        let sigma = w / (n - 2.0);
        let delta = ml - mr;
        let kf = k as f64;
        kf * (n - kf) / n * delta.dot(&(sigma.try_inverse().unwrap() * &delta))
    }

    #[test]
    fn hotelling_matches_direct_formula() {
        let data = gaussian(40, 3, 1);
        for k in [1, 5, 20, 39] {
            let fast = hotelling_offline(&data, k).unwrap();
            let slow = naive_hotelling(&data, k);
            assert!((fast - slow).abs() <= 1e-9 * slow.max(1.0), "k = {k}");
        }
    }

    #[test]
    fn equal_halves_give_zero() {
        let mut data = gaussian(10, 2, 2);
        let copy = data.clone();
        data.extend(copy);
        assert!(hotelling_offline(&data, 10).unwrap().abs() < 1e-12);
    }

    #[test]
    fn scalar_case_is_squared_t_statistic() {
        let data = gaussian(30, 1, 3);
        let k = 12;
        let (l, r) = data.split_at(k);
        let m = |s: &[Sample]| s.iter().map(|x| x[0]).sum::<f64>() / s.len() as f64;
        let (ml, mr) = (m(l), m(r));
        let ss: f64 = l.iter().map(|x| (x[0] - ml).powi(2)).sum::<f64>()
            + r.iter().map(|x| (x[0] - mr).powi(2)).sum::<f64>();
        let sp2 = ss / 28.0;
        let t = (ml - mr) / (sp2 * (1.0 / 12.0 + 1.0 / 18.0)).sqrt();
        assert!((hotelling_offline(&data, k).unwrap() - t * t).abs() < 1e-10);
        let scan = shewhart_scan(&data, 100.0).unwrap();
        assert_eq!(scan.series.len(), 29);
        assert!(shewhart_scan(&gaussian(30, 2, 3), 1.0).is_err());
    }

    #[test]
    fn hotelling_affine_invariance() {
        let data = gaussian(50, 3, 4);
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.1, 0.0, 1.5, 0.4, 0.7, -0.2, 0.9]);
        let shift = DVector::from_column_slice(&[1.0, -3.0, 0.5]);
        let moved = affine(&data, &a, &shift);
        for k in [3, 17, 30] {
            let x = hotelling_offline(&data, k).unwrap();
            let y = hotelling_offline(&moved, k).unwrap();
            assert!((x - y).abs() <= 1e-8 * x.abs().max(1e-12));
        }
    }

    #[test]
    fn glr_linear_invariance() {
        let data = gaussian(60, 3, 5);
        let a = DMatrix::from_row_slice(3, 3, &[1.2, 0.2, 0.0, -0.3, 0.8, 0.1, 0.0, 0.5, 2.0]);
        let shift = DVector::from_column_slice(&[0.0, 2.0, -1.0]);
        let moved = affine(&data, &a, &shift);
        for k in [5, 30, 55] {
            let x = glr_offline(&data, k).unwrap();
            let y = glr_offline(&moved, k).unwrap();
            assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0));
        }
    }

    #[test]
    fn glr_scan_range() {
        let data = gaussian(40, 4, 6);
        let scan = glr_scan(&data, 1e9).unwrap();
        assert_eq!(scan.series.first().unwrap().0, 6);
        assert_eq!(scan.series.last().unwrap().0, 34);
        assert!(scan.series.iter().all(|(_, v)| v.is_finite()));
        assert!(!scan.alarm);
    }

    #[test]
    fn glr_skips_degenerate_segments() {
        let mut data = gaussian(40, 2, 7);
        for s in data.iter_mut().take(12) {
            *s = Sample::new(vec![1.0, 1.0]).unwrap();
        }
        let scan = glr_scan(&data, 1e9).unwrap();
        assert!(scan.skipped.contains(&4));
        assert!(scan.series.iter().all(|&(k, _)| k > 12));
    }

    #[test]
    fn singular_covariance_is_an_error() {
        let data: Vec<Sample> = (0..20).map(|i| Sample::new(vec![i as f64, 2.0 * i as f64]).unwrap()).collect();
        assert!(matches!(
            hotelling_offline(&data, 10),
            Err(Error::SingularCovariance { .. })
        ));
    }

    #[test]
    fn online_hotelling_zero_at_mean() {
        let reference = gaussian(200, 3, 8);
        let mut chart = HotellingOnline::from_reference(&reference, 5).unwrap();
        let mu: Vec<f64> = chart.mu.iter().copied().collect();
        for i in 0..20 {
            let v = chart.step(&Sample::new(mu.clone()).unwrap()).unwrap();
            assert_eq!(v.is_some(), i >= 4);
            if let Some(v) = v {
                assert!(v.abs() < 1e-20);
            }
        }
    }

    #[test]
    fn online_hotelling_window_matches_direct() {
        let reference = gaussian(300, 2, 9);
        let mut chart = HotellingOnline::from_reference(&reference, 7).unwrap();
        let stream = gaussian(50, 2, 10);
        for (t, s) in stream.iter().enumerate() {
            if let Some(v) = chart.step(s).unwrap() {
                let window = &stream[t + 1 - 7..=t];
                let mut mean = DVector::zeros(2);
                for x in window {
                    mean += DVector::from_column_slice(x);
                }
                let diff = mean / 7.0 - &chart.mu;
                let direct = 7.0 * diff.dot(&chart.chol.solve(&diff));
                assert!((v - direct).abs() <= 1e-10 * direct.max(1e-12));
            }
        }
    }

    #[test]
    fn quantile_calibration_median() {
        let b = calibrate_quantile(|s| Ok((s % 1000) as f64), 0.5, 101, 1).unwrap();
        let mut values: Vec<f64> = (0..101).map(|i| (derive_seed(1, i) % 1000) as f64).collect();
        values.sort_by(f64::total_cmp);
        assert_eq!(b, values[50]);
        assert!(calibrate_quantile(|_| Ok(0.0), 0.05, 50, 1).is_err());
    }

    #[test]
    fn run_records() {
        let r = RunRecord::from_stream(vec![(1, 0.5), (2, 0.3), (3, 1.5), (4, 1.0), (5, 2.5)], 10);
        assert_eq!(r.records, vec![(1, 0.5), (3, 1.5), (5, 2.5)]);
        assert_eq!(r.run_length(0.4), 1);
        assert_eq!(r.run_length(1.0), 3);
        assert_eq!(r.run_length(2.0), 5);
        assert_eq!(r.run_length(3.0), 10);
        let runs = vec![r.clone(), r];
        assert_eq!(calibrate_arl(&runs, 3.0).unwrap(), 0.5);
        assert_eq!(calibrate_arl(&runs, 5.0).unwrap(), 1.5);
        assert_eq!(calibrate_arl(&runs, 6.0).unwrap(), 2.5);
        assert!(calibrate_arl(&runs, 11.0).is_err());
    }
}
