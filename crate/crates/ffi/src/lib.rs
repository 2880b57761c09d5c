//! C ABI for the `mstat` change-point detectors.
//!
//! Sample matrices are passed row-major as `n * d` doubles. Every fallible
//! function returns an [`MstatStatus`]; on failure a message is available
//! from [`mstat_last_error`] until the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mstat::offline::{detect_offline, OfflineOptions};
use mstat::online::{calibrate_online, OnlineDetector, OnlineOptions};
use mstat::threshold::{
    offline_sl, online_arl, solve_offline_threshold, solve_offline_threshold_corrected, solve_online_threshold,
    solve_online_threshold_corrected,
};
use mstat::{estimate_h_moments, median_bandwidth, nu, Error, KernelSpec, NullMoments, Sample};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MstatStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    InsufficientData = 4,
    /// Non-positive variance, failed root bracket, infeasible correction,
    /// singular covariance or non-finite input.
    Numerical = 5,
    ReservoirExhausted = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> MstatStatus {
    match err {
        Error::DimensionMismatch { .. } => MstatStatus::DimensionMismatch,
        Error::InsufficientData { .. } | Error::MissingBlockSize(_) => MstatStatus::InsufficientData,
        Error::ReservoirExhausted { .. } => MstatStatus::ReservoirExhausted,
        Error::NonPositiveVariance { .. }
        | Error::NoBracket { .. }
        | Error::NegativeDiscriminant { .. }
        | Error::SingularCovariance { .. }
        | Error::NonFinite(_)
        | Error::DegenerateData(_) => MstatStatus::Numerical,
        _ => MstatStatus::InvalidArgument,
    }
}

struct Failure(MstatStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null_pointer(name: &str) -> Failure {
    Failure(MstatStatus::NullPointer, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MstatStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MstatStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            MstatStatus::Panic
        }
    }
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null_pointer("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn samples(data: *const f64, n: usize, d: usize) -> Result<Vec<Sample>, Failure> {
    if data.is_null() {
        return Err(null_pointer("data"));
    }
    if d == 0 {
        return Err(Failure(MstatStatus::InvalidArgument, "dimension must be positive".into()));
    }
    let len = n.checked_mul(d).ok_or_else(|| Failure(MstatStatus::InvalidArgument, "n * d overflows".into()))?;
    let flat = std::slice::from_raw_parts(data, len);
    flat.chunks(d).map(|row| Sample::new(row.to_vec()).map_err(Failure::from)).collect()
}

fn bandwidth_option(bandwidth: f64) -> Option<f64> {
    (bandwidth > 0.0).then_some(bandwidth)
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next `mstat_*` call on the same thread.
#[no_mangle]
pub extern "C" fn mstat_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// The overshoot correction `nu(u)` for `u > 0`.
///
/// # Safety
/// `out` must be valid for writing one double.
#[no_mangle]
pub unsafe extern "C" fn mstat_nu(u: f64, out: *mut f64) -> MstatStatus {
    guard(|| write_out(out, nu(u)?))
}

/// Analytic significance level of the offline scan at threshold `b`.
///
/// # Safety
/// `out` must be valid for writing one double.
#[no_mangle]
pub unsafe extern "C" fn mstat_offline_sl(b: f64, b_max: usize, out: *mut f64) -> MstatStatus {
    guard(|| write_out(out, offline_sl(b, b_max)?))
}

/// Analytic average run length of the online detector at threshold `b`.
///
/// # Safety
/// `out` must be valid for writing one double.
#[no_mangle]
pub unsafe extern "C" fn mstat_online_arl(b: f64, b0: usize, out: *mut f64) -> MstatStatus {
    guard(|| write_out(out, online_arl(b, b0)?))
}

/// Offline threshold for significance level `alpha`.
///
/// # Safety
/// `out` must be valid for writing one double.
#[no_mangle]
pub unsafe extern "C" fn mstat_solve_offline_threshold(alpha: f64, b_max: usize, out: *mut f64) -> MstatStatus {
    guard(|| write_out(out, solve_offline_threshold(alpha, b_max)?))
}

/// Online threshold for average run length `arl`.
///
/// # Safety
/// `out` must be valid for writing one double.
#[no_mangle]
pub unsafe extern "C" fn mstat_solve_online_threshold(arl: f64, b0: usize, out: *mut f64) -> MstatStatus {
    guard(|| write_out(out, solve_online_threshold(arl, b0)?))
}

/// Median pairwise distance of `n` samples of dimension `d`.
///
/// # Safety
/// `data` must point to `n * d` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mstat_median_bandwidth(
    data: *const f64,
    n: usize,
    d: usize,
    seed: u64,
    out: *mut f64,
) -> MstatStatus {
    guard(|| {
        let pool = samples(data, n, d)?;
        write_out(out, median_bandwidth(&pool, mstat::kernel::DEFAULT_MEDIAN_CAP, seed)?)
    })
}

/// Null variance and skewness of `Z_B`, tabulated by block size.
pub struct MstatMoments {
    inner: NullMoments,
    bandwidth: f64,
}

/// Estimates null moments on a reference pool for block sizes `2..=b_max`.
/// A non-positive `bandwidth` selects the median heuristic.
///
/// # Safety
/// `pool` must point to `n * d` readable doubles; `out` must be writable.
/// The handle must be released with [`mstat_moments_free`].
#[no_mangle]
pub unsafe extern "C" fn mstat_moments_estimate(
    pool: *const f64,
    n: usize,
    d: usize,
    bandwidth: f64,
    n_draws: usize,
    n_blocks: usize,
    b_max: usize,
    seed: u64,
    out: *mut *mut MstatMoments,
) -> MstatStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_pointer("out"));
        }
        let pool = samples(pool, n, d)?;
        let bw = match bandwidth_option(bandwidth) {
            Some(bw) => bw,
            None => median_bandwidth(&pool, mstat::kernel::DEFAULT_MEDIAN_CAP, seed)?,
        };
        let spec = KernelSpec::gaussian(bw)?;
        let h = estimate_h_moments(&pool, &spec, n_draws, seed)?;
        let inner = NullMoments::for_offline(h, n_blocks, b_max)?;
        out.write(Box::into_raw(Box::new(MstatMoments { inner, bandwidth: bw })));
        Ok(())
    })
}

/// Bandwidth the moments were estimated with.
///
/// # Safety
/// `moments` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mstat_moments_bandwidth(moments: *const MstatMoments, out: *mut f64) -> MstatStatus {
    guard(|| {
        let m = moments.as_ref().ok_or_else(|| null_pointer("moments"))?;
        write_out(out, m.bandwidth)
    })
}

/// `Var[Z_B]` at block size `block_size`.
///
/// # Safety
/// `moments` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mstat_moments_variance(
    moments: *const MstatMoments,
    block_size: usize,
    out: *mut f64,
) -> MstatStatus {
    guard(|| {
        let m = moments.as_ref().ok_or_else(|| null_pointer("moments"))?;
        write_out(out, m.inner.variance(block_size)?)
    })
}

/// Skewness of `Z_B` at block size `block_size`.
///
/// # Safety
/// `moments` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mstat_moments_skewness(
    moments: *const MstatMoments,
    block_size: usize,
    out: *mut f64,
) -> MstatStatus {
    guard(|| {
        let m = moments.as_ref().ok_or_else(|| null_pointer("moments"))?;
        write_out(out, m.inner.skewness(block_size)?)
    })
}

/// Skewness-corrected offline threshold using the handle's skewness table.
///
/// # Safety
/// `moments` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mstat_solve_offline_threshold_corrected(
    moments: *const MstatMoments,
    alpha: f64,
    b_max: usize,
    out: *mut f64,
) -> MstatStatus {
    guard(|| {
        let m = moments.as_ref().ok_or_else(|| null_pointer("moments"))?;
        write_out(out, solve_offline_threshold_corrected(alpha, b_max, &m.inner.skew_by_block)?.b)
    })
}

/// Skewness-corrected online threshold at window size `b0`.
///
/// # Safety
/// `moments` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mstat_solve_online_threshold_corrected(
    moments: *const MstatMoments,
    arl: f64,
    b0: usize,
    out: *mut f64,
) -> MstatStatus {
    guard(|| {
        let m = moments.as_ref().ok_or_else(|| null_pointer("moments"))?;
        write_out(out, solve_online_threshold_corrected(arl, b0, m.inner.skewness(b0)?)?.b)
    })
}

/// Releases a moments handle. Null is ignored.
///
/// # Safety
/// `moments` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mstat_moments_free(moments: *mut MstatMoments) {
    if !moments.is_null() {
        drop(Box::from_raw(moments));
    }
}

/// Outcome of [`mstat_detect_offline`].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MstatOfflineResult {
    pub alarm: bool,
    pub threshold: f64,
    pub statistic: f64,
    /// Block size attaining the maximum.
    pub argmax_block: usize,
    /// Start of the detected post-change segment within the test block.
    pub change_index: usize,
    pub bandwidth: f64,
}

/// Offline detection of a change in a test block of `b_max` samples.
/// A non-positive `bandwidth` selects the median heuristic.
///
/// # Safety
/// `reference` must point to `n_ref * d` and `test` to `b_max * d` readable
/// doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mstat_detect_offline(
    reference: *const f64,
    n_ref: usize,
    test: *const f64,
    b_max: usize,
    d: usize,
    n_blocks: usize,
    alpha: f64,
    bandwidth: f64,
    n_draws: usize,
    corrected: bool,
    seed: u64,
    out: *mut MstatOfflineResult,
) -> MstatStatus {
    guard(|| {
        let reference = samples(reference, n_ref, d)?;
        let test = samples(test, b_max, d)?;
        let options = OfflineOptions {
            bandwidth: bandwidth_option(bandwidth),
            moment_draws: n_draws,
            corrected,
            seed,
            ..OfflineOptions::default()
        };
        let r = detect_offline(&reference, &test, n_blocks, alpha, &options)?;
        write_out(
            out,
            MstatOfflineResult {
                alarm: r.alarm,
                threshold: r.threshold.b,
                statistic: r.scan.max_statistic,
                argmax_block: r.scan.argmax_block,
                change_index: r.scan.change_index(),
                bandwidth: r.bandwidth,
            },
        )
    })
}

/// Streaming detector state.
pub struct MstatOnline {
    inner: OnlineDetector,
}

/// Builds an online detector calibrated for average run length `arl`.
/// A non-positive `bandwidth` selects the median heuristic.
///
/// # Safety
/// `pool` must point to `n * d` readable doubles; `out` must be writable.
/// The handle must be released with [`mstat_online_free`].
#[no_mangle]
pub unsafe extern "C" fn mstat_online_new(
    pool: *const f64,
    n: usize,
    d: usize,
    b0: usize,
    n_blocks: usize,
    arl: f64,
    bandwidth: f64,
    n_draws: usize,
    corrected: bool,
    seed: u64,
    out: *mut *mut MstatOnline,
) -> MstatStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_pointer("out"));
        }
        let pool = samples(pool, n, d)?;
        let options = OnlineOptions {
            bandwidth: bandwidth_option(bandwidth),
            moment_draws: n_draws,
            corrected,
            seed,
        };
        let (inner, _) = calibrate_online(&pool, b0, n_blocks, arl, &options)?;
        out.write(Box::into_raw(Box::new(MstatOnline { inner })));
        Ok(())
    })
}

/// Threshold the detector stops at.
///
/// # Safety
/// `detector` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mstat_online_threshold(detector: *const MstatOnline, out: *mut f64) -> MstatStatus {
    guard(|| {
        let det = detector.as_ref().ok_or_else(|| null_pointer("detector"))?;
        write_out(out, det.inner.threshold())
    })
}

/// Result of one online step.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MstatStep {
    pub t: usize,
    /// False until the test window is full; `statistic` is then 0.
    pub has_statistic: bool,
    pub statistic: f64,
    pub alarm: bool,
}

/// Feeds one sample of dimension `d`.
///
/// # Safety
/// `detector` must be a live handle, `sample` must point to `d` readable
/// doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mstat_online_step(
    detector: *mut MstatOnline,
    sample: *const f64,
    d: usize,
    out: *mut MstatStep,
) -> MstatStatus {
    guard(|| {
        let det = detector.as_mut().ok_or_else(|| null_pointer("detector"))?;
        let s = samples(sample, 1, d)?.pop().expect("one row");
        let step = det.inner.step(s)?;
        write_out(
            out,
            MstatStep {
                t: step.t,
                has_statistic: step.statistic.is_some(),
                statistic: step.statistic.unwrap_or(0.0),
                alarm: step.alarm,
            },
        )
    })
}

/// Releases a detector handle. Null is ignored.
///
/// # Safety
/// `detector` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mstat_online_free(detector: *mut MstatOnline) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}
