//! Kernel M-statistics for change-point detection.
//!
//! Offline and online detectors built on block-wise unbiased MMD
//! statistics, with analytic null moments and threshold calibration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod error;
pub mod io;
pub mod kernel;
pub mod moments;
pub mod numeric;
pub mod offline;
pub mod online;
pub mod rng;
pub mod simulation;
pub mod threshold;

pub use error::{Error, Result};
pub use kernel::{median_bandwidth, mmd_u_squared, KernelSpec, Sample};
pub use moments::{estimate_h_moments, HMoments, NullMoments};
pub use threshold::{
    nu, offline_sl, online_arl, solve_offline_threshold, solve_online_threshold, ThresholdSpec,
};
pub use offline::{detect_offline, scan, DetectionReport, OfflineOptions, OfflineScan};
pub use online::{calibrate_online, OnlineDetector, OnlineOptions, StepOutput, StoppingResult};
