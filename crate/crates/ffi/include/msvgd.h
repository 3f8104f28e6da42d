#ifndef MSVGD_H
#define MSVGD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MsvgdStatus {
  MSVGD_STATUS_OK = 0,
  MSVGD_STATUS_NULL_POINTER = 1,
  MSVGD_STATUS_INVALID_UTF8 = 2,
  MSVGD_STATUS_BUFFER_TOO_SMALL = 3,
  MSVGD_STATUS_INDEX_OUT_OF_RANGE = 4,
  MSVGD_STATUS_INVALID_INPUT = 10,
  MSVGD_STATUS_DOMAIN = 11,
  MSVGD_STATUS_CONFIG = 12,
  MSVGD_STATUS_VALIDATION = 13,
  MSVGD_STATUS_IO = 14,
  MSVGD_STATUS_DATA = 15,
  MSVGD_STATUS_NUMERICAL = 16,
  MSVGD_STATUS_PANIC = 99,
} MsvgdStatus;

// A finished run: snapshots and the metrics document.
typedef struct MsvgdRun MsvgdRun;

// A target density built from a kind name or a JSON target object.
typedef struct MsvgdTarget MsvgdTarget;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *msvgd_version(void);

// Message of the last failed call on this thread, or an empty string.
// The pointer stays valid until the next failing call on the same thread.
const char *msvgd_last_error_message(void);

// Builds a target from `spec`: a kind name (`"star"`, `"sine"`,
// `"double_banana"`, `"gaussian"`) or a JSON target object.
//
// # Safety
// `spec` must be a NUL-terminated string and `out` a valid pointer.
enum MsvgdStatus msvgd_target_new(const char *spec, struct MsvgdTarget **out);

// # Safety
// `target` must come from [`msvgd_target_new`] and not be used afterwards.
void msvgd_target_free(struct MsvgdTarget *target);

// # Safety
// `target` must be a live handle and `out` a valid pointer.
enum MsvgdStatus msvgd_target_dim(const struct MsvgdTarget *target, size_t *out);

// Unnormalized log density at `x` (length `dim`).
//
// # Safety
// `x` must point to `dim` readable values and `out` must be valid.
enum MsvgdStatus msvgd_target_log_density(const struct MsvgdTarget *target,
                                          const double *x,
                                          size_t dim,
                                          double *out);

// Gradient of the log density at `x`, written to `grad` (both length `dim`).
//
// # Safety
// `x` must point to `dim` readable values and `grad` to `dim` writable ones.
enum MsvgdStatus msvgd_target_grad(const struct MsvgdTarget *target,
                                   const double *x,
                                   size_t dim,
                                   double *grad);

// Draws `n` reference samples into `out` (row-major, `n * dim` values).
//
// # Safety
// `out` must point to `out_len` writable values.
enum MsvgdStatus msvgd_target_sample(const struct MsvgdTarget *target,
                                     size_t n,
                                     uint64_t seed,
                                     double *out,
                                     size_t out_len);

// Parses a JSON run config and executes it in memory. Nothing is written
// to disk; see [`msvgd_run_write`].
//
// A run that stops on a numerical failure still yields a handle; its
// metrics document carries `"partial": true`.
//
// # Safety
// `config_json` must be a NUL-terminated string and `out` a valid pointer.
enum MsvgdStatus msvgd_run_new(const char *config_json, struct MsvgdRun **out);

// # Safety
// `run` must come from [`msvgd_run_new`] and not be used afterwards.
void msvgd_run_free(struct MsvgdRun *run);

// Number of snapshots reached, and the particle count and dimension.
//
// # Safety
// `run` must be a live handle; each output pointer must be valid.
enum MsvgdStatus msvgd_run_shape(const struct MsvgdRun *run,
                                 size_t *snapshots,
                                 size_t *n,
                                 size_t *dim);

// Copies snapshot `index` into `out` (row-major, `n * dim` values) and its
// checkpoint iteration into `iteration`.
//
// # Safety
// `out` must point to `out_len` writable values; `iteration` must be valid.
enum MsvgdStatus msvgd_run_snapshot(const struct MsvgdRun *run,
                                    size_t index,
                                    size_t *iteration,
                                    double *out,
                                    size_t out_len);

// The metrics document. The pointer lives as long as the handle.
//
// # Safety
// `run` must be a live handle and `out` a valid pointer.
enum MsvgdStatus msvgd_run_metrics_json(const struct MsvgdRun *run, const char **out);

// Writes particle files, `metrics.json` and `timing.csv` into `dir`.
//
// # Safety
// `run` must be a live handle and `dir` a NUL-terminated string.
enum MsvgdStatus msvgd_run_write(const struct MsvgdRun *run, const char *dir);

// Squared MMD between `x` (`nx * dim`) and `y` (`ny * dim`), row-major.
// A `bandwidth` of 0 uses the median trick on the pooled sample; the
// bandwidth used is written to `used_bandwidth` when it is not null.
//
// # Safety
// `x` and `y` must point to `nx * dim` and `ny * dim` readable values.
enum MsvgdStatus msvgd_mmd_sq(const double *x,
                              size_t nx,
                              const double *y,
                              size_t ny,
                              size_t dim,
                              double bandwidth,
                              double *out,
                              double *used_bandwidth);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSVGD_H */
