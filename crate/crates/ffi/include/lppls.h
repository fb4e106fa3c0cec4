#ifndef LPPLS_H
#define LPPLS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LpplsStatus {
  LPPLS_STATUS_OK = 0,
  LPPLS_STATUS_NULL_POINTER = 1,
  LPPLS_STATUS_INVALID_ARGUMENT = 2,
  LPPLS_STATUS_DATA = 3,
  LPPLS_STATUS_CONFIG = 4,
  LPPLS_STATUS_NO_FIT = 5,
  LPPLS_STATUS_PANIC = 6,
} LpplsStatus;

// Result of crash detection.
typedef struct LpplsCrashList LpplsCrashList;

// A price series on a regular grid.
typedef struct LpplsSeries LpplsSeries;

// The seven LPPLS parameters; `tc` is relative to the window start, in samples.
typedef struct LpplsModelParams {
  double tc;
  double m;
  double omega;
  double a;
  double b;
  double c1;
  double c2;
} LpplsModelParams;

// One calibrated window and its filter outcome.
typedef struct LpplsFitResult {
  struct LpplsModelParams params;
  double ssr;
  size_t t1_index;
  size_t t2_index;
  bool converged;
  // All filters passed.
  bool qualified;
  double damping;
  double half_periods;
  double max_rel_err;
  // NaN when the spectral test was skipped.
  double lomb_p;
} LpplsFitResult;

// Confidence indicator at one endpoint.
typedef struct LpplsConfidence {
  size_t n_windows;
  size_t n_pass_pos;
  size_t n_pass_neg;
  double ci_pos;
  double ci_neg;
} LpplsConfidence;

typedef struct LpplsCrash {
  int64_t peak_time;
  double peak_price;
  int64_t end_time;
  double end_price;
  int64_t duration_days;
  double size;
} LpplsCrash;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *lppls_version(void);

// Message of the last failed call on this thread; empty after a success.
// Valid until the next library call on the same thread.
const char *lppls_last_error_message(void);

// Builds a series from `len` strictly increasing epoch-second timestamps and
// positive prices sampled every `spacing_secs` seconds.
//
// # Safety
// `timestamps` and `prices` must point to `len` readable values and `out` to
// writable storage for one handle.
enum LpplsStatus lppls_series_new(const int64_t *timestamps,
                                  const double *prices,
                                  size_t len,
                                  int64_t spacing_secs,
                                  struct LpplsSeries **out);

// Loads a `timestamp,price` CSV file; the sampling level is inferred.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum LpplsStatus lppls_series_load_csv(const char *path, struct LpplsSeries **out);

// Number of samples; zero for a null handle.
//
// # Safety
// `series` must be null or a live handle.
size_t lppls_series_len(const struct LpplsSeries *series);

// Releases a series handle. Null is ignored.
//
// # Safety
// `series` must be null or a handle not yet freed.
void lppls_series_free(struct LpplsSeries *series);

// Model log-price at window time `t`.
//
// # Safety
// `params` must be readable and `out` writable.
enum LpplsStatus lppls_value(double t, const struct LpplsModelParams *params, double *out);

// Least-squares amplitudes for fixed `(tc, m, omega)`.
//
// # Safety
// `log_prices` and `times` must point to `len` readable values; `out` and
// `ssr` must be writable.
enum LpplsStatus lppls_solve_linear(const double *log_prices,
                                    const double *times,
                                    size_t len,
                                    double tc,
                                    double m,
                                    double omega,
                                    struct LpplsModelParams *out,
                                    double *ssr);

// Calibrates window `[t1_index, t2_index]` with default settings and the given seed.
//
// # Safety
// `series` must be a live handle and `out` writable.
enum LpplsStatus lppls_fit_window(const struct LpplsSeries *series,
                                  size_t t1_index,
                                  size_t t2_index,
                                  uint64_t seed,
                                  struct LpplsFitResult *out);

// Confidence indicator at `t2_index` over window lengths
// `min_length..=max_length` in steps of `step`.
//
// # Safety
// `series` must be a live handle and `out` writable.
enum LpplsStatus lppls_confidence_at(const struct LpplsSeries *series,
                                     size_t t2_index,
                                     size_t min_length,
                                     size_t max_length,
                                     size_t step,
                                     uint64_t seed,
                                     struct LpplsConfidence *out);

// Detects crashes larger than `threshold` in a daily series.
//
// # Safety
// `series` must be a live handle and `out` writable.
enum LpplsStatus lppls_detect_crashes(const struct LpplsSeries *series,
                                      double threshold,
                                      struct LpplsCrashList **out);

// Number of crashes in the list; zero for a null handle.
//
// # Safety
// `list` must be null or a live handle.
size_t lppls_crash_list_len(const struct LpplsCrashList *list);

// Copies crash `index` into `out`.
//
// # Safety
// `list` must be a live handle and `out` writable.
enum LpplsStatus lppls_crash_list_get(const struct LpplsCrashList *list,
                                      size_t index,
                                      struct LpplsCrash *out);

// Releases a crash list. Null is ignored.
//
// # Safety
// `list` must be null or a handle not yet freed.
void lppls_crash_list_free(struct LpplsCrashList *list);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LPPLS_H */
