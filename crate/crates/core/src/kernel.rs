//! Gaussian RBF kernel, the MMD U-statistic kernel `h`, and the unbiased
//! block MMD estimator.
//!
//! For paired blocks `X = (x_1..x_B)` and `Y = (y_1..y_B)`
//!
//! ```text
//! h(x, x', y, y') = k(x, x') + k(y, y') - k(x, y') - k(x', y)
//! MMD_u^2(X, Y)   = 1 / (B (B - 1)) * sum_{i != j} h(x_i, x_j, y_i, y_j)
//! ```

use std::ops::Deref;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::rng::stream_rng;

/// Default number of points used by the median heuristic.
pub const DEFAULT_MEDIAN_CAP: usize = 1000;

/// One `d`-dimensional observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Sample(Vec<f64>);

impl Sample {
    /// Validating constructor: at least one coordinate, all finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("sample must have at least one coordinate"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "sample coordinate {pos} is {}",
                values[pos]
            )));
        }
        Ok(Sample(values))
    }

    /// Wraps values produced by an internal generator, which are finite by
    /// construction.
    pub(crate) fn from_generated(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty() && values.iter().all(|v| v.is_finite()));
        Sample(values)
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Sample::new(vec![value])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Sample {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Sample {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Sample::new(values)
    }
}

impl From<Sample> for Vec<f64> {
    fn from(s: Sample) -> Vec<f64> {
        s.0
    }
}

/// Checks that every sample has dimension `dim` and returns it.
pub fn common_dim<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<Option<usize>> {
    let mut dim = None;
    for s in samples {
        match dim {
            None => dim = Some(s.dim()),
            Some(d) if d != s.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: s.dim(),
                })
            }
            _ => {}
        }
    }
    Ok(dim)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    GaussianRbf,
}

/// Kernel family plus bandwidth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec")]
pub struct KernelSpec {
    family: KernelFamily,
    bandwidth: f64,
}

#[derive(Deserialize)]
struct RawKernelSpec {
    family: KernelFamily,
    bandwidth: f64,
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        match raw.family {
            KernelFamily::GaussianRbf => KernelSpec::gaussian(raw.bandwidth),
        }
    }
}

impl KernelSpec {
    /// Gaussian RBF kernel `exp(-|x - y|^2 / (2 sigma^2))`.
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::invalid(format!(
                "kernel bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(KernelSpec {
            family: KernelFamily::GaussianRbf,
            bandwidth,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Unchecked evaluation. Callers guarantee equal dimensions.
    ///
    /// Bitwise symmetric: `eval(x, y) == eval(y, x)`.
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        let mut d2 = 0.0;
        for (a, b) in x.iter().zip(y) {
            let diff = a - b;
            d2 += diff * diff;
        }
        match self.family {
            KernelFamily::GaussianRbf => (-d2 / (2.0 * self.bandwidth * self.bandwidth)).exp(),
        }
    }

    /// `h(x, x', y, y')` without dimension checks.
    ///
    /// Grouped as `(k(x,x') + k(y,y')) - (k(x,y') + k(x',y))` so that both the
    /// pair swap and the X/Y swap leave the result bitwise unchanged.
    #[inline]
    pub fn h(&self, x: &[f64], x2: &[f64], y: &[f64], y2: &[f64]) -> f64 {
        (self.eval(x, x2) + self.eval(y, y2)) - (self.eval(x, y2) + self.eval(x2, y))
    }
}

fn check_same_dim(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

pub fn kernel_eval(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    check_same_dim(x, y)?;
    Ok(spec.eval(x, y))
}

pub fn h_eval(x: &[f64], x2: &[f64], y: &[f64], y2: &[f64], spec: &KernelSpec) -> Result<f64> {
    check_same_dim(x, x2)?;
    check_same_dim(x, y)?;
    check_same_dim(x, y2)?;
    Ok(spec.h(x, x2, y, y2))
}

fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Median pairwise Euclidean distance over at most `cap` points drawn
/// uniformly without replacement from `pool` (all points when the pool is
/// small enough, in which case `seed` is unused).
pub fn median_bandwidth(pool: &[Sample], cap: usize, seed: u64) -> Result<f64> {
    if pool.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            available: pool.len(),
        });
    }
    if cap < 2 {
        return Err(Error::invalid("median bandwidth cap must be at least 2"));
    }
    common_dim(pool)?;
    let chosen: Vec<&Sample> = if pool.len() <= cap {
        pool.iter().collect()
    } else {
        let mut rng = stream_rng(seed, 0);
        index::sample(&mut rng, pool.len(), cap)
            .into_iter()
            .map(|i| &pool[i])
            .collect()
    };
    let mut distances = Vec::with_capacity(chosen.len() * (chosen.len() - 1) / 2);
    for (i, a) in chosen.iter().enumerate() {
        for b in &chosen[i + 1..] {
            distances.push(euclidean(a, b));
        }
    }
    distances.sort_by(f64::total_cmp);
    let n = distances.len();
    let median = if n % 2 == 1 {
        distances[n / 2]
    } else {
        0.5 * (distances[n / 2 - 1] + distances[n / 2])
    };
    if median > 0.0 {
        Ok(median)
    } else if distances[n - 1] > 0.0 {
        // More than half the pairs coincide; fall back to the mean of the
        // nonzero distances so that the kernel stays informative.
        let nonzero: Vec<f64> = distances.into_iter().filter(|d| *d > 0.0).collect();
        Ok(nonzero.iter().sum::<f64>() / nonzero.len() as f64)
    } else {
        Err(Error::DegenerateData(
            "all pairwise distances are zero; cannot choose a bandwidth".into(),
        ))
    }
}

fn check_blocks(x: &[Sample], y: &[Sample]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "paired blocks must have equal size ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid("MMD_u^2 needs blocks of size at least 2"));
    }
    common_dim(x.iter().chain(y))?;
    Ok(())
}

/// Unbiased `MMD_u^2` between two equally sized, index-paired blocks.
pub fn mmd_u_squared(x: &[Sample], y: &[Sample], spec: &KernelSpec) -> Result<f64> {
    check_blocks(x, y)?;
    Ok(mmd_u_squared_unchecked(x, y, spec))
}

pub(crate) fn mmd_u_squared_unchecked(x: &[Sample], y: &[Sample], spec: &KernelSpec) -> f64 {
    let b = x.len();
    let mut acc = CompensatedSum::new();
    for i in 0..b {
        for j in i + 1..b {
            acc.add(spec.h(&x[i], &x[j], &y[i], &y[j]));
        }
    }
    // h is symmetric in the pair (i, j), so each unordered pair counts twice.
    2.0 * acc.value() / (b as f64 * (b as f64 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[f64]) -> Sample {
        Sample::new(v.to_vec()).unwrap()
    }

    fn unit() -> KernelSpec {
        KernelSpec::gaussian(1.0).unwrap()
    }

    #[test]
    fn kernel_of_identical_points_is_one() {
        let x = s(&[0.3, -1.2, 4.0]);
        assert_eq!(kernel_eval(&x, &x, &unit()).unwrap(), 1.0);
    }

    #[test]
    fn kernel_unit_distance() {
        let v = kernel_eval(&s(&[0.0]), &s(&[1.0]), &unit()).unwrap();
        assert!((v - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn kernel_wide_bandwidth_tends_to_one() {
        let spec = KernelSpec::gaussian(1e8).unwrap();
        let v = kernel_eval(&s(&[0.0]), &s(&[1.0]), &spec).unwrap();
        assert!((1.0 - v) < 1e-15);
    }

    #[test]
    fn kernel_rejects_bad_input() {
        assert!(matches!(
            kernel_eval(&s(&[0.0]), &s(&[1.0, 2.0]), &unit()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
        assert!(KernelSpec::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn sample_rejects_non_finite() {
        assert!(Sample::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(Sample::new(vec![]).is_err());
    }

    #[test]
    fn median_of_single_pair() {
        let pool = [s(&[0.0]), s(&[1.0])];
        assert_eq!(median_bandwidth(&pool, 1000, 0).unwrap(), 1.0);
    }

    #[test]
    fn median_of_three_points() {
        let pool = [s(&[0.0]), s(&[1.0]), s(&[3.0])];
        assert_eq!(median_bandwidth(&pool, 1000, 0).unwrap(), 2.0);
    }

    #[test]
    fn median_of_identical_points_is_an_error() {
        let pool = vec![s(&[2.0, 2.0]); 10];
        assert!(matches!(
            median_bandwidth(&pool, 1000, 0),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn median_subsampling_is_deterministic() {
        let pool: Vec<Sample> = (0..300).map(|i| s(&[(i as f64).sin() * 10.0])).collect();
        let a = median_bandwidth(&pool, 50, 9).unwrap();
        let b = median_bandwidth(&pool, 50, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn h_vanishes_when_y_copies_x() {
        let (x, x2) = (s(&[0.1, 0.2]), s(&[-1.0, 3.0]));
        assert_eq!(h_eval(&x, &x2, &x, &x2, &unit()).unwrap(), 0.0);
    }

    #[test]
    fn h_symmetric_configuration_is_zero() {
        let v = h_eval(&s(&[0.0]), &s(&[1.0]), &s(&[0.0]), &s(&[1.0]), &unit()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn h_hand_evaluation() {
        // k(x,x') = k(y,y') = 1, cross terms e^{-1/2}
        let v = h_eval(&s(&[0.0]), &s(&[0.0]), &s(&[1.0]), &s(&[1.0]), &unit()).unwrap();
        assert!((v - 0.786_938_680_574_733_2).abs() < 1e-15);
    }

    #[test]
    fn mmd_of_block_size_two_is_h() {
        let x = [s(&[0.0, 1.0]), s(&[2.0, -1.0])];
        let y = [s(&[0.5, 0.5]), s(&[1.0, 1.0])];
        let spec = KernelSpec::gaussian(1.3).unwrap();
        let h = h_eval(&x[0], &x[1], &y[0], &y[1], &spec).unwrap();
        assert_eq!(mmd_u_squared(&x, &y, &spec).unwrap(), h);
    }

    #[test]
    fn mmd_rejects_bad_blocks() {
        let x = [s(&[0.0]), s(&[1.0])];
        let y = [s(&[0.0])];
        assert!(mmd_u_squared(&x, &y, &unit()).is_err());
        assert!(mmd_u_squared(&y, &y, &unit()).is_err());
    }

    fn block(d: usize, b: usize) -> impl Strategy<Value = Vec<Sample>> {
        prop::collection::vec(prop::collection::vec(-5.0..5.0f64, d), b)
            .prop_map(|rows| rows.into_iter().map(|r| Sample::new(r).unwrap()).collect())
    }

    proptest! {
        #[test]
        fn kernel_in_unit_interval_and_symmetric(
            x in prop::collection::vec(-10.0..10.0f64, 3),
            y in prop::collection::vec(-10.0..10.0f64, 3),
            bw in 0.1..10.0f64,
        ) {
            let spec = KernelSpec::gaussian(bw).unwrap();
            let a = spec.eval(&x, &y);
            prop_assert!(a > 0.0 || a == 0.0 && x != y);
            prop_assert!(a <= 1.0);
            prop_assert_eq!(a, spec.eval(&y, &x));
        }

        #[test]
        fn h_pair_swap_is_exact(
            pts in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 4),
            bw in 0.2..5.0f64,
        ) {
            let spec = KernelSpec::gaussian(bw).unwrap();
            let v = spec.h(&pts[0], &pts[1], &pts[2], &pts[3]);
            prop_assert!(v.abs() <= 2.0);
            prop_assert_eq!(v, spec.h(&pts[1], &pts[0], &pts[3], &pts[2]));
        }

        #[test]
        fn mmd_structural_identities((x, y) in (2usize..7).prop_flat_map(|b| (block(2, b), block(2, b))), bw in 0.3..4.0f64) {
            let spec = KernelSpec::gaussian(bw).unwrap();
            let xy = mmd_u_squared(&x, &y, &spec).unwrap();
            prop_assert_eq!(xy, mmd_u_squared(&y, &x, &spec).unwrap());
            prop_assert_eq!(mmd_u_squared(&x, &x, &spec).unwrap(), 0.0);
            prop_assert!(xy.abs() <= 2.0);
        }
    }
}
