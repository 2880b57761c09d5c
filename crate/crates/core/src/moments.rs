//! Null moments of the block statistic `Z_B`.
//!
//! The variance and third moment of `Z_B` under the null reduce to a handful
//! of expectations of products of `h`, which are estimated by Monte Carlo
//! over tuples drawn without replacement from reference data. Everything
//! downstream (standardization, skewness, threshold correction) is closed
//! form in those expectations.

use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{common_dim, KernelSpec, Sample};
use crate::numeric::{pairs, CompensatedSum};
use crate::rng::stream_rng;

/// Default Monte-Carlo draws for the h-moments.
pub const DEFAULT_MOMENT_DRAWS: usize = 10_000;
/// Smallest accepted number of draws.
pub const MIN_MOMENT_DRAWS: usize = 1_000;
/// Distinct points needed per draw: six `x`-role and three `y`-role points
/// cover every expectation in the third-moment expansion.
pub const POINTS_PER_DRAW: usize = 9;

const DRAWS_PER_CHUNK: usize = 2_048;

/// Monte-Carlo estimates of the h-moment expectations.
///
/// With `x_i` iid and `y_i` iid from the null:
///
/// * `e_h2   = E[h(x0,x1,y0,y1)^2]`
/// * `cov_hh = Cov[h(x0,x1,y0,y1), h(x2,x3,y0,y1)]`
/// * `t1 = E[h(x0,x1,y0,y1) h(x1,x2,y1,y2) h(x2,x0,y2,y0)]`
/// * `t2 = E[h(x0,x1,y0,y1) h(x1,x2,y1,y2) h(x3,x4,y2,y0)]`
/// * `t3 = E[h(x0,x1,y0,y1) h(x2,x3,y1,y2) h(x4,x5,y2,y0)]`
/// * `t4 = E[h(x0,x1,y0,y1)^3]`
/// * `t5 = E[h(x0,x1,y0,y1)^2 h(x2,x3,y0,y1)]`
/// * `t6 = E[h(x0,x1,y0,y1) h(x2,x3,y0,y1) h(x4,x5,y0,y1)]`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HMoments {
    pub e_h2: f64,
    pub cov_hh: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub t5: f64,
    pub t6: f64,
    pub n_draws: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Default)]
struct Accumulator {
    h: CompensatedSum,
    h_partner: CompensatedSum,
    h2: CompensatedSum,
    h_cross: CompensatedSum,
    t: [CompensatedSum; 6],
    draws: usize,
}

impl Accumulator {
    fn merge(&mut self, other: &Accumulator) {
        self.h.merge(&other.h);
        self.h_partner.merge(&other.h_partner);
        self.h2.merge(&other.h2);
        self.h_cross.merge(&other.h_cross);
        for (a, b) in self.t.iter_mut().zip(&other.t) {
            a.merge(b);
        }
        self.draws += other.draws;
    }
}

fn accumulate_chunk(
    pool: &[Sample],
    spec: &KernelSpec,
    draws: usize,
    seed: u64,
    chunk: u64,
) -> Accumulator {
    let mut rng = stream_rng(seed, chunk);
    let mut acc = Accumulator::default();
    for _ in 0..draws {
        let idx = index::sample(&mut rng, pool.len(), POINTS_PER_DRAW);
        let p = |i: usize| pool[idx.index(i)].as_slice();
        let (x0, x1, x2, x3, x4, x5) = (p(0), p(1), p(2), p(3), p(4), p(5));
        let (y0, y1, y2) = (p(6), p(7), p(8));

        let a = spec.h(x0, x1, y0, y1);
        let shared_y = spec.h(x2, x3, y0, y1);
        let third_y = spec.h(x4, x5, y0, y1);
        let tri_12 = spec.h(x1, x2, y1, y2);
        let tri_20 = spec.h(x2, x0, y2, y0);
        let far_20 = spec.h(x3, x4, y2, y0);
        let mid_12 = spec.h(x2, x3, y1, y2);
        let end_20 = spec.h(x4, x5, y2, y0);

        acc.h.add(a);
        acc.h_partner.add(shared_y);
        acc.h2.add(a * a);
        acc.h_cross.add(a * shared_y);
        acc.t[0].add(a * tri_12 * tri_20);
        acc.t[1].add(a * tri_12 * far_20);
        acc.t[2].add(a * mid_12 * end_20);
        acc.t[3].add(a * a * a);
        acc.t[4].add(a * a * shared_y);
        acc.t[5].add(a * shared_y * third_y);
    }
    acc.draws = draws;
    acc
}

/// Estimates the h-moments from `n_draws` tuples of distinct pool points.
///
/// Draws are split into fixed-size chunks, each with its own random stream,
/// so the result is identical regardless of the number of worker threads.
pub fn estimate_h_moments(
    pool: &[Sample],
    spec: &KernelSpec,
    n_draws: usize,
    seed: u64,
) -> Result<HMoments> {
    if pool.len() < POINTS_PER_DRAW {
        return Err(Error::InsufficientData {
            needed: POINTS_PER_DRAW,
            available: pool.len(),
        });
    }
    if n_draws < MIN_MOMENT_DRAWS {
        return Err(Error::invalid(format!(
            "n_draws must be at least {MIN_MOMENT_DRAWS}, got {n_draws}"
        )));
    }
    common_dim(pool)?;

    let chunks = n_draws.div_ceil(DRAWS_PER_CHUNK);
    let parts: Vec<Accumulator> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let draws = DRAWS_PER_CHUNK.min(n_draws - c * DRAWS_PER_CHUNK);
            accumulate_chunk(pool, spec, draws, seed, c as u64)
        })
        .collect();
    let mut total = Accumulator::default();
    for part in &parts {
        total.merge(part);
    }

    let n = total.draws as f64;
    let mean_h = total.h.value() / n;
    let mean_partner = total.h_partner.value() / n;
    let t: Vec<f64> = total.t.iter().map(|s| s.value() / n).collect();
    let moments = HMoments {
        e_h2: total.h2.value() / n,
        cov_hh: total.h_cross.value() / n - mean_h * mean_partner,
        t1: t[0],
        t2: t[1],
        t3: t[2],
        t4: t[3],
        t5: t[4],
        t6: t[5],
        n_draws,
        seed,
    };
    let all = [
        moments.e_h2,
        moments.cov_hh,
        moments.t1,
        moments.t2,
        moments.t3,
        moments.t4,
        moments.t5,
        moments.t6,
    ];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("h-moment estimate".into()));
    }
    Ok(moments)
}

fn check_sizes(block_size: usize, n_blocks: usize) -> Result<()> {
    if block_size < 2 {
        return Err(Error::invalid(format!(
            "block size must be at least 2, got {block_size}"
        )));
    }
    if n_blocks < 1 {
        return Err(Error::invalid("number of reference blocks must be at least 1"));
    }
    Ok(())
}

/// Null variance of `Z_B` with `n_blocks` reference blocks of size `block_size`.
pub fn var_zb(h: &HMoments, block_size: usize, n_blocks: usize) -> Result<f64> {
    check_sizes(block_size, n_blocks)?;
    let n = n_blocks as f64;
    let value = (h.e_h2 / n + (n - 1.0) / n * h.cov_hh) / pairs(block_size);
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonPositiveVariance { block_size, value })
    }
}

/// Null third moment `E[Z_B^3]`.
pub fn third_moment_zb(h: &HMoments, block_size: usize, n_blocks: usize) -> Result<f64> {
    check_sizes(block_size, n_blocks)?;
    let b = block_size as f64;
    let n = n_blocks as f64;
    let denom = b * b * (b - 1.0) * (b - 1.0);
    let (w1, w2, w3) = (1.0 / (n * n), 3.0 * (n - 1.0) / (n * n), (n - 1.0) * (n - 2.0) / (n * n));
    let triangles = 8.0 * (b - 2.0) / denom * (w1 * h.t1 + w2 * h.t2 + w3 * h.t3);
    let repeated = 4.0 / denom * (w1 * h.t4 + w2 * h.t5 + w3 * h.t6);
    Ok(triangles + repeated)
}

/// Skewness of the standardized statistic, `E[Z_B^3] / Var[Z_B]^{3/2}`.
pub fn skewness_zb(h: &HMoments, block_size: usize, n_blocks: usize) -> Result<f64> {
    let var = var_zb(h, block_size, n_blocks)?;
    Ok(third_moment_zb(h, block_size, n_blocks)? / var.powf(1.5))
}

/// Correlation of the offline standardized statistics `Z_u'` and `Z_v'`.
///
/// Panics if `u < 2` or `v < 2`.
pub fn offline_correlation(u: usize, v: usize) -> f64 {
    assert!(u >= 2 && v >= 2, "block sizes must be at least 2");
    (pairs(u) * pairs(v)).sqrt() / pairs(u.max(v))
}

/// Correlation of the online statistics `M_t` and `M_{t+s}` for window `b0`.
/// Zero once the windows share no pairs (`s >= b0 - 1`).
///
/// Panics if `b0 < 2`.
pub fn online_correlation(b0: usize, s: usize) -> f64 {
    assert!(b0 >= 2, "window size must be at least 2");
    if s + 1 >= b0 {
        return 0.0;
    }
    let (b, s) = (b0 as f64, s as f64);
    (1.0 - s / b) * (1.0 - s / (b - 1.0))
}

/// h-moments plus the derived per-block-size variance and skewness tables
/// for a fixed number of reference blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullMoments {
    pub h: HMoments,
    #[serde(rename = "var_by_B")]
    pub var_by_block: BTreeMap<usize, f64>,
    #[serde(rename = "skew_by_B")]
    pub skew_by_block: BTreeMap<usize, f64>,
    #[serde(rename = "N")]
    pub n_blocks: usize,
}

impl NullMoments {
    /// Tabulates variance and skewness for every requested block size.
    pub fn new(
        h: HMoments,
        n_blocks: usize,
        block_sizes: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let mut var_by_block = BTreeMap::new();
        let mut skew_by_block = BTreeMap::new();
        for b in block_sizes {
            let var = var_zb(&h, b, n_blocks)?;
            var_by_block.insert(b, var);
            skew_by_block.insert(b, third_moment_zb(&h, b, n_blocks)? / var.powf(1.5));
        }
        Ok(NullMoments {
            h,
            var_by_block,
            skew_by_block,
            n_blocks,
        })
    }

    /// Tables for `B = 2..=b_max`.
    pub fn for_offline(h: HMoments, n_blocks: usize, b_max: usize) -> Result<Self> {
        if b_max < 2 {
            return Err(Error::invalid("B_max must be at least 2"));
        }
        Self::new(h, n_blocks, 2..=b_max)
    }

    pub fn variance(&self, block_size: usize) -> Result<f64> {
        self.var_by_block
            .get(&block_size)
            .copied()
            .ok_or(Error::MissingBlockSize(block_size))
    }

    pub fn skewness(&self, block_size: usize) -> Result<f64> {
        self.skew_by_block
            .get(&block_size)
            .copied()
            .ok_or(Error::MissingBlockSize(block_size))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: NullMoments = serde_json::from_str(text)?;
        for (&b, &v) in &m.var_by_block {
            if !(v > 0.0) {
                return Err(Error::NonPositiveVariance {
                    block_size: b,
                    value: v,
                });
            }
        }
        Ok(m)
    }
}
