//! Offline M-statistic.
//!
//! The test block and `N` reference blocks of size `B_max` are compared on
//! their right-most `B` points for every `B = 2..=B_max`. Growing `B` by one
//! only adds the pairs involving the new front point, so the whole series
//! costs `O(N B_max^2)` kernel evaluations.

use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{common_dim, median_bandwidth, KernelSpec, Sample, DEFAULT_MEDIAN_CAP};
use crate::moments::{estimate_h_moments, HMoments, NullMoments, DEFAULT_MOMENT_DRAWS};
use crate::numeric::CompensatedSum;
use crate::rng::{derive_seed, stream_rng};
use crate::threshold::{NuConvention, Target, ThresholdSpec};

/// How reference blocks are cut from the reference data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockLayout {
    /// `N * B_max` points drawn without replacement, in draw order.
    #[default]
    Sampled,
    /// Consecutive slices of the most recent `N * B_max` reference points.
    Contiguous,
}

/// Splits the reference data into `n_blocks` blocks of `b_max` points.
pub fn build_offline_blocks(
    reference: &[Sample],
    n_blocks: usize,
    b_max: usize,
    layout: BlockLayout,
    seed: u64,
) -> Result<Vec<Vec<Sample>>> {
    if n_blocks == 0 || b_max < 2 {
        return Err(Error::invalid(format!(
            "need N >= 1 and B_max >= 2, got N = {n_blocks}, B_max = {b_max}"
        )));
    }
    let needed = n_blocks * b_max;
    if reference.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            available: reference.len(),
        });
    }
    let picked: Vec<usize> = match layout {
        BlockLayout::Sampled => {
            let mut rng = stream_rng(seed, 0);
            index::sample(&mut rng, reference.len(), needed).into_vec()
        }
        BlockLayout::Contiguous => (reference.len() - needed..reference.len()).collect(),
    };
    Ok(picked
        .chunks(b_max)
        .map(|c| c.iter().map(|&i| reference[i].clone()).collect())
        .collect())
}

fn check_blocks(ref_blocks: &[Vec<Sample>], test: &[Sample]) -> Result<usize> {
    let b_max = test.len();
    if b_max < 2 {
        return Err(Error::invalid(format!("test block must hold at least 2 samples, got {b_max}")));
    }
    if ref_blocks.is_empty() {
        return Err(Error::invalid("at least one reference block is required"));
    }
    for block in ref_blocks {
        if block.len() != b_max {
            return Err(Error::invalid(format!(
                "reference block has {} samples, test block has {b_max}",
                block.len()
            )));
        }
    }
    common_dim(test.iter().chain(ref_blocks.iter().flatten()))?;
    Ok(b_max)
}

/// Raw block statistics `Z_B` for `B = 2..=B_max`, computed on the right-most
/// `B` points of every block. Entry `i` holds `Z_{i+2}`.
pub fn z_series(ref_blocks: &[Vec<Sample>], test: &[Sample], spec: &KernelSpec) -> Result<Vec<f64>> {
    check_blocks(ref_blocks, test)?;
    Ok(z_series_unchecked(ref_blocks, test, spec))
}

fn z_series_unchecked(ref_blocks: &[Vec<Sample>], test: &[Sample], spec: &KernelSpec) -> Vec<f64> {
    let b_max = test.len();
    // test-test kernel values are shared by every reference block
    let mut yy = vec![0.0; b_max * b_max];
    for p in 0..b_max {
        for q in p + 1..b_max {
            yy[p * b_max + q] = spec.eval(&test[p], &test[q]);
        }
    }
    let mut sums = vec![CompensatedSum::new(); b_max - 1];
    for x in ref_blocks {
        let mut running = CompensatedSum::new();
        for (slot, bsize) in (2..=b_max).enumerate() {
            let p = b_max - bsize;
            let (xp, yp) = (x[p].as_slice(), test[p].as_slice());
            for q in p + 1..b_max {
                let h = spec.eval(xp, &x[q]) + yy[p * b_max + q]
                    - (spec.eval(xp, &test[q]) + spec.eval(&x[q], yp));
                running.add(2.0 * h);
            }
            let bf = bsize as f64;
            sums[slot].add(running.value() / (bf * (bf - 1.0)));
        }
    }
    let n = ref_blocks.len() as f64;
    sums.iter().map(|s| s.value() / n).collect()
}

/// Result of an offline scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfflineScan {
    #[serde(rename = "z_prime_by_B")]
    pub z_prime_by_block: BTreeMap<usize, f64>,
    #[serde(rename = "M")]
    pub max_statistic: f64,
    #[serde(rename = "argmax_B")]
    pub argmax_block: usize,
    pub b: f64,
    pub alarm: bool,
    #[serde(rename = "N")]
    pub n_blocks: usize,
    #[serde(rename = "B_max")]
    pub b_max: usize,
}

impl OfflineScan {
    /// Index within the test block where the detected post-change segment starts.
    pub fn change_index(&self) -> usize {
        self.b_max - self.argmax_block
    }

    /// `(B, Z_B')` rows for plotting.
    pub fn series(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.z_prime_by_block.iter().map(|(&b, &z)| (b, z))
    }
}

/// Standardizes the `Z_B` series and maximizes over block sizes.
pub fn scan(
    ref_blocks: &[Vec<Sample>],
    test: &[Sample],
    moments: &NullMoments,
    spec: &KernelSpec,
    b: f64,
) -> Result<OfflineScan> {
    let b_max = check_blocks(ref_blocks, test)?;
    let sd: Vec<f64> = (2..=b_max)
        .map(|bl| moments.variance(bl).map(f64::sqrt))
        .collect::<Result<_>>()?;
    let z = z_series_unchecked(ref_blocks, test, spec);
    let mut z_prime_by_block = BTreeMap::new();
    let (mut best, mut argmax) = (f64::NEG_INFINITY, 2);
    for (i, (zb, s)) in z.iter().zip(&sd).enumerate() {
        let v = zb / s;
        if v > best {
            best = v;
            argmax = i + 2;
        }
        z_prime_by_block.insert(i + 2, v);
    }
    Ok(OfflineScan {
        z_prime_by_block,
        max_statistic: best,
        argmax_block: argmax,
        b,
        alarm: best > b,
        n_blocks: ref_blocks.len(),
        b_max,
    })
}

/// Settings for [`detect_offline`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OfflineOptions {
    /// Kernel bandwidth; the median heuristic on the reference data when absent.
    pub bandwidth: Option<f64>,
    pub moment_draws: usize,
    pub corrected: bool,
    pub layout: BlockLayout,
    pub nu_convention: NuConvention,
    pub seed: u64,
}

impl Default for OfflineOptions {
    fn default() -> Self {
        OfflineOptions {
            bandwidth: None,
            moment_draws: DEFAULT_MOMENT_DRAWS,
            corrected: false,
            layout: BlockLayout::Sampled,
            nu_convention: NuConvention::Standard,
            seed: 0,
        }
    }
}

/// Outcome of a full offline detection run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub alarm: bool,
    pub threshold: ThresholdSpec,
    pub bandwidth: f64,
    pub scan: OfflineScan,
    /// Start of the detected post-change segment within the test block,
    /// reported only on alarm.
    pub change_index: Option<usize>,
}

/// Kernel from options or the median heuristic.
pub(crate) fn resolve_kernel(pool: &[Sample], bandwidth: Option<f64>, seed: u64) -> Result<KernelSpec> {
    match bandwidth {
        Some(bw) => KernelSpec::gaussian(bw),
        None => KernelSpec::gaussian(median_bandwidth(pool, DEFAULT_MEDIAN_CAP, seed)?),
    }
}

/// Seed used for the h-moment draws of a detection run seeded with `seed`.
pub fn moment_seed(seed: u64) -> u64 {
    derive_seed(seed, 1)
}

/// Seed used for the median-heuristic subsample.
pub fn bandwidth_seed(seed: u64) -> u64 {
    derive_seed(seed, 2)
}

/// Estimates null moments, calibrates the threshold for level `alpha`,
/// and scans the test block.
pub fn detect_offline(
    reference: &[Sample],
    test: &[Sample],
    n_blocks: usize,
    alpha: f64,
    options: &OfflineOptions,
) -> Result<DetectionReport> {
    let spec = resolve_kernel(reference, options.bandwidth, bandwidth_seed(options.seed))?;
    let h = estimate_h_moments(reference, &spec, options.moment_draws, moment_seed(options.seed))?;
    detect_offline_with_moments(reference, test, n_blocks, alpha, options, spec, h)
}

/// [`detect_offline`] with the kernel and h-moments supplied by the caller.
pub fn detect_offline_with_moments(
    reference: &[Sample],
    test: &[Sample],
    n_blocks: usize,
    alpha: f64,
    options: &OfflineOptions,
    spec: KernelSpec,
    h: HMoments,
) -> Result<DetectionReport> {
    let b_max = test.len();
    let blocks = build_offline_blocks(reference, n_blocks, b_max, options.layout, options.seed)?;
    let moments = NullMoments::for_offline(h, n_blocks, b_max)?;
    let threshold = offline_threshold(alpha, b_max, &moments, options)?;
    let scan = scan(&blocks, test, &moments, &spec, threshold.b)?;
    Ok(DetectionReport {
        alarm: scan.alarm,
        change_index: scan.alarm.then(|| scan.change_index()),
        threshold,
        bandwidth: spec.bandwidth(),
        scan,
    })
}

fn offline_threshold(
    alpha: f64,
    b_max: usize,
    moments: &NullMoments,
    options: &OfflineOptions,
) -> Result<ThresholdSpec> {
    if options.corrected {
        return ThresholdSpec::calibrate_corrected(
            Target::Significance(alpha),
            b_max,
            &moments.skew_by_block,
        );
    }
    let b = crate::threshold::solve_offline_threshold_with(alpha, b_max, options.nu_convention)?;
    Ok(ThresholdSpec {
        b,
        target: Target::Significance(alpha),
        blocks: b_max,
        corrected: false,
        theta_by_block: None,
        fallbacks: Vec::new(),
    })
}
