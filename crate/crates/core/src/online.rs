//! Online M-statistic as a stopping rule.
//!
//! A sliding test window of the `B0` most recent samples is compared with
//! `N` reference windows of the same size. When the test window shifts,
//! every reference window drops its oldest point and takes one fresh draw
//! from the reference reservoir, and retired points go back into the
//! reservoir. All windows share one ring layout, so a shift overwrites the
//! same slot everywhere and only that row and column of each cached Gram
//! matrix is recomputed.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{common_dim, KernelSpec, Sample};
use crate::moments::{estimate_h_moments, HMoments, NullMoments, DEFAULT_MOMENT_DRAWS};
use crate::numeric::CompensatedSum;
use crate::offline::{bandwidth_seed, moment_seed, resolve_kernel};
use crate::rng::{stream_rng, Rng};
use crate::threshold::{Target, ThresholdSpec};

/// Cached kernel values for one reference window.
#[derive(Clone, Debug)]
struct WindowCache {
    samples: Vec<Sample>,
    /// `k(x_a, x_b)`, symmetric, row-major.
    xx: Vec<f64>,
    /// `k(x_a, y_b)`, row-major.
    xy: Vec<f64>,
    /// `Σ_{a≠b} h(a, b)` over the current slot contents.
    sum: CompensatedSum,
}

/// Output of one detector step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    pub t: usize,
    /// Standardized statistic `M_t`, absent until the test window is full.
    #[serde(rename = "M")]
    pub statistic: Option<f64>,
    pub alarm: bool,
}

/// Outcome of monitoring a stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingResult {
    pub stopped: bool,
    /// First `t` with `M_t > b`.
    #[serde(rename = "T")]
    pub stopping_time: Option<usize>,
    /// `(t, M_t)` for every emitted statistic.
    #[serde(rename = "M_series")]
    pub series: Vec<(usize, f64)>,
    pub b: f64,
}

/// Streaming kernel change-point detector.
#[derive(Clone, Debug)]
pub struct OnlineDetector {
    b0: usize,
    spec: KernelSpec,
    sd: f64,
    b: f64,
    dim: usize,
    t: usize,
    test: Vec<Sample>,
    yy: Vec<f64>,
    windows: Vec<WindowCache>,
    reservoir: Vec<Sample>,
    rng: Rng,
    kernel_evals: u64,
    last_step_evals: u64,
    since_resync: usize,
}

impl OnlineDetector {
    /// Fills `n_blocks` reference windows of size `b0` by drawing without
    /// replacement from `pool`; the rest of the pool becomes the reservoir.
    pub fn new(
        pool: &[Sample],
        b0: usize,
        n_blocks: usize,
        spec: KernelSpec,
        moments: &NullMoments,
        b: f64,
        seed: u64,
    ) -> Result<Self> {
        if b0 < 2 || n_blocks == 0 {
            return Err(Error::invalid(format!(
                "need B0 >= 2 and N >= 1, got B0 = {b0}, N = {n_blocks}"
            )));
        }
        if !(b > 0.0) {
            return Err(Error::invalid(format!("threshold must be positive, got {b}")));
        }
        let needed = b0 * n_blocks;
        if pool.len() < needed {
            return Err(Error::InsufficientData {
                needed,
                available: pool.len(),
            });
        }
        let dim = common_dim(pool)?.unwrap_or(0);
        let sd = moments.variance(b0)?.sqrt();
        let mut rng = stream_rng(seed, 0);
        let picked = index::sample(&mut rng, pool.len(), needed).into_vec();
        let mut taken = vec![false; pool.len()];
        for &i in &picked {
            taken[i] = true;
        }
        let windows = picked
            .chunks(b0)
            .map(|c| WindowCache {
                samples: c.iter().map(|&i| pool[i].clone()).collect(),
                xx: vec![0.0; b0 * b0],
                xy: vec![0.0; b0 * b0],
                sum: CompensatedSum::new(),
            })
            .collect();
        let reservoir = pool
            .iter()
            .zip(&taken)
            .filter(|(_, &t)| !t)
            .map(|(s, _)| s.clone())
            .collect();
        Ok(OnlineDetector {
            b0,
            spec,
            sd,
            b,
            dim,
            t: 0,
            test: Vec::with_capacity(b0),
            yy: vec![0.0; b0 * b0],
            windows,
            reservoir,
            rng,
            kernel_evals: 0,
            last_step_evals: 0,
            since_resync: 0,
        })
    }

    pub fn window_size(&self) -> usize {
        self.b0
    }

    pub fn n_blocks(&self) -> usize {
        self.windows.len()
    }

    pub fn threshold(&self) -> f64 {
        self.b
    }

    /// Samples consumed so far.
    pub fn time(&self) -> usize {
        self.t
    }

    /// Standard deviation used to standardize `Z_{B0,t}`.
    pub fn null_sd(&self) -> f64 {
        self.sd
    }

    pub fn reservoir_len(&self) -> usize {
        self.reservoir.len()
    }

    /// Total kernel evaluations since construction.
    pub fn kernel_evals(&self) -> u64 {
        self.kernel_evals
    }

    /// Kernel evaluations spent by the most recent step.
    pub fn last_step_kernel_evals(&self) -> u64 {
        self.last_step_evals
    }

    /// Consumes one sample. Emits `M_t` once `B0` samples have been seen.
    pub fn step(&mut self, sample: Sample) -> Result<StepOutput> {
        if sample.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: sample.dim(),
            });
        }
        self.last_step_evals = 0;
        if self.test.len() < self.b0 {
            self.test.push(sample);
            self.t += 1;
            if self.test.len() == self.b0 {
                self.rebuild();
            }
        } else {
            self.shift(sample)?;
            self.t += 1;
        }
        self.kernel_evals += self.last_step_evals;
        let statistic = (self.test.len() == self.b0).then(|| self.statistic());
        Ok(StepOutput {
            t: self.t,
            statistic,
            alarm: statistic.is_some_and(|m| m > self.b),
        })
    }

    /// Feeds samples until the first alarm or until `max_steps` samples
    /// have been consumed.
    pub fn run_until_stop(
        &mut self,
        stream: impl IntoIterator<Item = Sample>,
        max_steps: usize,
    ) -> Result<StoppingResult> {
        let mut series = Vec::new();
        for sample in stream.into_iter().take(max_steps) {
            let out = self.step(sample)?;
            if let Some(m) = out.statistic {
                series.push((out.t, m));
            }
            if out.alarm {
                return Ok(StoppingResult {
                    stopped: true,
                    stopping_time: Some(out.t),
                    series,
                    b: self.b,
                });
            }
        }
        Ok(StoppingResult {
            stopped: false,
            stopping_time: None,
            series,
            b: self.b,
        })
    }

    /// Current reference windows and test window, oldest sample first.
    pub fn current_windows(&self) -> (Vec<Vec<Sample>>, Vec<Sample>) {
        let order: Vec<usize> = if self.test.len() < self.b0 {
            (0..self.b0).collect()
        } else {
            let oldest = self.t % self.b0;
            (0..self.b0).map(|k| (oldest + k) % self.b0).collect()
        };
        let refs = self
            .windows
            .iter()
            .map(|w| order.iter().map(|&k| w.samples[k].clone()).collect())
            .collect();
        let test = order
            .iter()
            .filter(|&&k| k < self.test.len())
            .map(|&k| self.test[k].clone())
            .collect();
        (refs, test)
    }

    /// Largest absolute gap between a cached kernel value or window sum and
    /// its fresh recomputation. Zero before the test window is full.
    pub fn max_cache_deviation(&self) -> f64 {
        if self.test.len() < self.b0 {
            return 0.0;
        }
        let n = self.b0;
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for c in 0..n {
                if a != c {
                    let fresh = self.spec.eval(&self.test[a], &self.test[c]);
                    worst = worst.max((self.yy[a * n + c] - fresh).abs());
                }
            }
        }
        for w in &self.windows {
            for a in 0..n {
                for c in 0..n {
                    let fresh = self.spec.eval(&w.samples[a], &self.test[c]);
                    worst = worst.max((w.xy[a * n + c] - fresh).abs());
                    if a != c {
                        let fresh = self.spec.eval(&w.samples[a], &w.samples[c]);
                        worst = worst.max((w.xx[a * n + c] - fresh).abs());
                    }
                }
            }
            worst = worst.max((w.sum.value() - self.window_sum(w)).abs());
        }
        worst
    }

    fn statistic(&self) -> f64 {
        let n = self.b0 as f64;
        let total: CompensatedSum = self.windows.iter().map(|w| w.sum.value()).collect();
        total.value() / (self.windows.len() as f64 * n * (n - 1.0)) / self.sd
    }

    #[inline]
    fn h_cached(&self, w: &WindowCache, a: usize, c: usize) -> f64 {
        let n = self.b0;
        (w.xx[a * n + c] + self.yy[a * n + c]) - (w.xy[a * n + c] + w.xy[c * n + a])
    }

    fn window_sum(&self, w: &WindowCache) -> f64 {
        let n = self.b0;
        let mut s = CompensatedSum::new();
        for a in 0..n {
            for c in a + 1..n {
                s.add(2.0 * self.h_cached(w, a, c));
            }
        }
        s.value()
    }

    fn row_sum(&self, w: &WindowCache, o: usize) -> f64 {
        let mut s = CompensatedSum::new();
        for c in (0..self.b0).filter(|&c| c != o) {
            s.add(self.h_cached(w, o, c));
        }
        s.value()
    }

    /// Builds every cache from scratch.
    fn rebuild(&mut self) {
        let n = self.b0;
        let spec = self.spec;
        let mut evals = 0u64;
        for a in 0..n {
            for c in a + 1..n {
                let v = spec.eval(&self.test[a], &self.test[c]);
                self.yy[a * n + c] = v;
                self.yy[c * n + a] = v;
                evals += 1;
            }
        }
        for w in &mut self.windows {
            for a in 0..n {
                for c in 0..n {
                    w.xy[a * n + c] = spec.eval(&w.samples[a], &self.test[c]);
                    evals += 1;
                    if c > a {
                        let v = spec.eval(&w.samples[a], &w.samples[c]);
                        w.xx[a * n + c] = v;
                        w.xx[c * n + a] = v;
                        evals += 1;
                    }
                }
            }
        }
        self.resync();
        self.last_step_evals += evals;
    }

    fn resync(&mut self) {
        let sums: Vec<f64> = self.windows.iter().map(|w| self.window_sum(w)).collect();
        for (w, s) in self.windows.iter_mut().zip(sums) {
            w.sum = CompensatedSum::new();
            w.sum.add(s);
        }
        self.since_resync = 0;
    }

    fn shift(&mut self, sample: Sample) -> Result<()> {
        let n = self.b0;
        let o = self.t % n;
        let k = self.windows.len();

        let retired_test = std::mem::replace(&mut self.test[o], sample);
        self.reservoir.push(retired_test);
        if self.reservoir.len() < k {
            return Err(Error::ReservoirExhausted {
                needed: k,
                available: self.reservoir.len(),
            });
        }
        let mut picks = index::sample(&mut self.rng, self.reservoir.len(), k).into_vec();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(picks[i]));
        let mut fresh: Vec<Option<Sample>> = vec![None; k];
        for i in order {
            fresh[i] = Some(self.reservoir.swap_remove(picks[i]));
        }
        picks.clear();

        let old_rows: Vec<f64> = self.windows.iter().map(|w| self.row_sum(w, o)).collect();

        let spec = self.spec;
        let mut evals = 0u64;
        let y_new = self.test[o].clone();
        for c in (0..n).filter(|&c| c != o) {
            let v = spec.eval(&y_new, &self.test[c]);
            self.yy[o * n + c] = v;
            self.yy[c * n + o] = v;
            evals += 1;
        }
        for (w, x_new) in self.windows.iter_mut().zip(fresh) {
            let x_new = x_new.expect("every window receives a draw");
            let retired = std::mem::replace(&mut w.samples[o], x_new);
            self.reservoir.push(retired);
            let x = &w.samples;
            for c in 0..n {
                if c != o {
                    let v = spec.eval(&x[o], &x[c]);
                    w.xx[o * n + c] = v;
                    w.xx[c * n + o] = v;
                    w.xy[c * n + o] = spec.eval(&x[c], &self.test[o]);
                    evals += 2;
                }
                w.xy[o * n + c] = spec.eval(&x[o], &self.test[c]);
                evals += 1;
            }
        }
        for (i, old) in old_rows.into_iter().enumerate() {
            let new = self.row_sum(&self.windows[i], o);
            let w = &mut self.windows[i];
            w.sum.add(2.0 * new);
            w.sum.sub(2.0 * old);
        }
        self.last_step_evals += evals;

        self.since_resync += 1;
        if self.since_resync >= n {
            self.resync();
        }
        Ok(())
    }
}

/// Settings for [`calibrate_online`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnlineOptions {
    pub bandwidth: Option<f64>,
    pub moment_draws: usize,
    pub corrected: bool,
    pub seed: u64,
}

impl Default for OnlineOptions {
    fn default() -> Self {
        OnlineOptions {
            bandwidth: None,
            moment_draws: DEFAULT_MOMENT_DRAWS,
            corrected: false,
            seed: 0,
        }
    }
}

/// Estimates null moments on `pool`, solves the threshold for `arl_target`,
/// and builds a detector.
pub fn calibrate_online(
    pool: &[Sample],
    b0: usize,
    n_blocks: usize,
    arl_target: f64,
    options: &OnlineOptions,
) -> Result<(OnlineDetector, ThresholdSpec)> {
    let spec = resolve_kernel(pool, options.bandwidth, bandwidth_seed(options.seed))?;
    let h = estimate_h_moments(pool, &spec, options.moment_draws, moment_seed(options.seed))?;
    calibrate_online_with_moments(pool, b0, n_blocks, arl_target, options, spec, h)
}

/// [`calibrate_online`] with the kernel and h-moments supplied by the caller.
pub fn calibrate_online_with_moments(
    pool: &[Sample],
    b0: usize,
    n_blocks: usize,
    arl_target: f64,
    options: &OnlineOptions,
    spec: KernelSpec,
    h: HMoments,
) -> Result<(OnlineDetector, ThresholdSpec)> {
    let seed = options.seed;
    let moments = NullMoments::new(h, n_blocks, [b0])?;
    let threshold = if options.corrected {
        ThresholdSpec::calibrate_corrected(Target::Arl(arl_target), b0, &moments.skew_by_block)?
    } else {
        ThresholdSpec::calibrate(Target::Arl(arl_target), b0)?
    };
    let detector = OnlineDetector::new(pool, b0, n_blocks, spec, &moments, threshold.b, seed)?;
    Ok((detector, threshold))
}
