#ifndef MSTAT_H
#define MSTAT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes.
 */
typedef enum MstatStatus {
  MSTAT_STATUS_OK = 0,
  MSTAT_STATUS_NULL_POINTER = 1,
  MSTAT_STATUS_INVALID_ARGUMENT = 2,
  MSTAT_STATUS_DIMENSION_MISMATCH = 3,
  MSTAT_STATUS_INSUFFICIENT_DATA = 4,
  /**
   * Non-positive variance, failed root bracket, infeasible correction,
   * singular covariance or non-finite input.
   */
  MSTAT_STATUS_NUMERICAL = 5,
  MSTAT_STATUS_RESERVOIR_EXHAUSTED = 6,
  MSTAT_STATUS_PANIC = 7,
} MstatStatus;

/**
 * Null variance and skewness of `Z_B`, tabulated by block size.
 */
typedef struct MstatMoments MstatMoments;

/**
 * Streaming detector state.
 */
typedef struct MstatOnline MstatOnline;

/**
 * Outcome of [`mstat_detect_offline`].
 */
typedef struct MstatOfflineResult {
  bool alarm;
  double threshold;
  double statistic;
  /**
   * Block size attaining the maximum.
   */
  uintptr_t argmax_block;
  /**
   * Start of the detected post-change segment within the test block.
   */
  uintptr_t change_index;
  double bandwidth;
} MstatOfflineResult;

/**
 * Result of one online step.
 */
typedef struct MstatStep {
  uintptr_t t;
  /**
   * False until the test window is full; `statistic` is then 0.
   */
  bool has_statistic;
  double statistic;
  bool alarm;
} MstatStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next `mstat_*` call on the same thread.
 */
const char *mstat_last_error(void);

/**
 * The overshoot correction `nu(u)` for `u > 0`.
 *
 * # Safety
 * `out` must be valid for writing one double.
 */
enum MstatStatus mstat_nu(double u, double *out);

/**
 * Analytic significance level of the offline scan at threshold `b`.
 *
 * # Safety
 * `out` must be valid for writing one double.
 */
enum MstatStatus mstat_offline_sl(double b, uintptr_t b_max, double *out);

/**
 * Analytic average run length of the online detector at threshold `b`.
 *
 * # Safety
 * `out` must be valid for writing one double.
 */
enum MstatStatus mstat_online_arl(double b, uintptr_t b0, double *out);

/**
 * Offline threshold for significance level `alpha`.
 *
 * # Safety
 * `out` must be valid for writing one double.
 */
enum MstatStatus mstat_solve_offline_threshold(double alpha, uintptr_t b_max, double *out);

/**
 * Online threshold for average run length `arl`.
 *
 * # Safety
 * `out` must be valid for writing one double.
 */
enum MstatStatus mstat_solve_online_threshold(double arl, uintptr_t b0, double *out);

/**
 * Median pairwise distance of `n` samples of dimension `d`.
 *
 * # Safety
 * `data` must point to `n * d` readable doubles and `out` must be writable.
 */
enum MstatStatus mstat_median_bandwidth(const double *data,
                                        uintptr_t n,
                                        uintptr_t d,
                                        uint64_t seed,
                                        double *out);

/**
 * Estimates null moments on a reference pool for block sizes `2..=b_max`.
 * A non-positive `bandwidth` selects the median heuristic.
 *
 * # Safety
 * `pool` must point to `n * d` readable doubles; `out` must be writable.
 * The handle must be released with [`mstat_moments_free`].
 */
enum MstatStatus mstat_moments_estimate(const double *pool,
                                        uintptr_t n,
                                        uintptr_t d,
                                        double bandwidth,
                                        uintptr_t n_draws,
                                        uintptr_t n_blocks,
                                        uintptr_t b_max,
                                        uint64_t seed,
                                        struct MstatMoments **out);

/**
 * Bandwidth the moments were estimated with.
 *
 * # Safety
 * `moments` must be a live handle; `out` must be writable.
 */
enum MstatStatus mstat_moments_bandwidth(const struct MstatMoments *moments, double *out);

/**
 * `Var[Z_B]` at block size `block_size`.
 *
 * # Safety
 * `moments` must be a live handle; `out` must be writable.
 */
enum MstatStatus mstat_moments_variance(const struct MstatMoments *moments,
                                        uintptr_t block_size,
                                        double *out);

/**
 * Skewness of `Z_B` at block size `block_size`.
 *
 * # Safety
 * `moments` must be a live handle; `out` must be writable.
 */
enum MstatStatus mstat_moments_skewness(const struct MstatMoments *moments,
                                        uintptr_t block_size,
                                        double *out);

/**
 * Skewness-corrected offline threshold using the handle's skewness table.
 *
 * # Safety
 * `moments` must be a live handle; `out` must be writable.
 */
enum MstatStatus mstat_solve_offline_threshold_corrected(const struct MstatMoments *moments,
                                                         double alpha,
                                                         uintptr_t b_max,
                                                         double *out);

/**
 * Skewness-corrected online threshold at window size `b0`.
 *
 * # Safety
 * `moments` must be a live handle; `out` must be writable.
 */
enum MstatStatus mstat_solve_online_threshold_corrected(const struct MstatMoments *moments,
                                                        double arl,
                                                        uintptr_t b0,
                                                        double *out);

/**
 * Releases a moments handle. Null is ignored.
 *
 * # Safety
 * `moments` must be null or a handle not yet freed.
 */
void mstat_moments_free(struct MstatMoments *moments);

/**
 * Offline detection of a change in a test block of `b_max` samples.
 * A non-positive `bandwidth` selects the median heuristic.
 *
 * # Safety
 * `reference` must point to `n_ref * d` and `test` to `b_max * d` readable
 * doubles; `out` must be writable.
 */
enum MstatStatus mstat_detect_offline(const double *reference,
                                      uintptr_t n_ref,
                                      const double *test,
                                      uintptr_t b_max,
                                      uintptr_t d,
                                      uintptr_t n_blocks,
                                      double alpha,
                                      double bandwidth,
                                      uintptr_t n_draws,
                                      bool corrected,
                                      uint64_t seed,
                                      struct MstatOfflineResult *out);

/**
 * Builds an online detector calibrated for average run length `arl`.
 * A non-positive `bandwidth` selects the median heuristic.
 *
 * # Safety
 * `pool` must point to `n * d` readable doubles; `out` must be writable.
 * The handle must be released with [`mstat_online_free`].
 */
enum MstatStatus mstat_online_new(const double *pool,
                                  uintptr_t n,
                                  uintptr_t d,
                                  uintptr_t b0,
                                  uintptr_t n_blocks,
                                  double arl,
                                  double bandwidth,
                                  uintptr_t n_draws,
                                  bool corrected,
                                  uint64_t seed,
                                  struct MstatOnline **out);

/**
 * Threshold the detector stops at.
 *
 * # Safety
 * `detector` must be a live handle; `out` must be writable.
 */
enum MstatStatus mstat_online_threshold(const struct MstatOnline *detector, double *out);

/**
 * Feeds one sample of dimension `d`.
 *
 * # Safety
 * `detector` must be a live handle, `sample` must point to `d` readable
 * doubles and `out` must be writable.
 */
enum MstatStatus mstat_online_step(struct MstatOnline *detector,
                                   const double *sample,
                                   uintptr_t d,
                                   struct MstatStep *out);

/**
 * Releases a detector handle. Null is ignored.
 *
 * # Safety
 * `detector` must be null or a handle not yet freed.
 */
void mstat_online_free(struct MstatOnline *detector);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSTAT_H */
