#ifndef MFG_H
#define MFG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

enum MfgStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  MFG_STATUS_OK = 0,
  MFG_STATUS_NULL_POINTER = 1,
  /**
   * Bad grid, lengths, configuration, expression or archive.
   */
  MFG_STATUS_INVALID_INPUT = 2,
  /**
   * A solver failed to converge or produced non-finite values.
   */
  MFG_STATUS_SOLVER_FAILURE = 3,
  /**
   * A verified property did not hold.
   */
  MFG_STATUS_PROPERTY_VIOLATION = 4,
  MFG_STATUS_PANIC = 5,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum MfgStatus MfgStatus;
#else
typedef int32_t MfgStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

typedef struct MfgBaseline MfgBaseline;

typedef struct MfgGrid MfgGrid;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `cap`) and returns its full length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t mfg_last_error(char *buf, size_t cap);

/**
 * Uniform grid on `[lower, upper]^dim` with `nx` interior nodes per axis and
 * `nt` time steps (`0` for stationary). Null `lower`/`upper` mean the unit box.
 *
 * # Safety
 * `lower` and `upper` must be null or point to `dim` values; `out` must be valid.
 */
MfgStatus mfg_grid_new(size_t dim,
                       size_t nx,
                       size_t nt,
                       double horizon,
                       const double *lower,
                       const double *upper,
                       struct MfgGrid **out);

/**
 * # Safety
 * `grid` must come from [`mfg_grid_new`] and not be used afterwards.
 */
void mfg_grid_free(struct MfgGrid *grid);

/**
 * Spatial nodes, boundary included. Zero for a null handle.
 *
 * # Safety
 * `grid` must be null or valid.
 */
size_t mfg_grid_npts(const struct MfgGrid *grid);

/**
 * Time levels (`nt + 1`, or 1 when stationary).
 *
 * # Safety
 * `grid` must be null or valid.
 */
size_t mfg_grid_nlev(const struct MfgGrid *grid);

/**
 * Boundary points per time level.
 *
 * # Safety
 * `grid` must be null or valid.
 */
size_t mfg_grid_face_points(const struct MfgGrid *grid);

/**
 * Node coordinates as `npts` triples (unused axes are zero).
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
MfgStatus mfg_grid_coords(const struct MfgGrid *grid, double *out, size_t len);

/**
 * Stationary baseline: the Gibbs density of `seed_v0`, or the constant state
 * when `seed_v0` is null.
 *
 * # Safety
 * `seed_v0` must be null or point to `len` doubles; `grid` and `out` must be valid.
 */
MfgStatus mfg_baseline_new(const struct MfgGrid *grid,
                           const double *seed_v0,
                           size_t len,
                           struct MfgBaseline **out);

/**
 * # Safety
 * `baseline` must come from [`mfg_baseline_new`] and not be used afterwards.
 */
void mfg_baseline_free(struct MfgBaseline *baseline);

/**
 * Ergodic constant of the baseline; NaN for a null handle.
 *
 * # Safety
 * `baseline` must be null or valid.
 */
double mfg_baseline_lambda(const struct MfgBaseline *baseline);

/**
 * # Safety
 * `out` must point to `len` writable doubles.
 */
MfgStatus mfg_baseline_density(const struct MfgBaseline *baseline, double *out, size_t len);

/**
 * Remainder sizes of complex geometric optics solutions of the reduced
 * stationary equation with coefficient `f1`, at frequency `2 pi k` and the
 * given radii. Writes `|omega|_2` per radius and the log-log slope.
 *
 * # Safety
 * `f1` has `npts` values, `k` has `dim` values, `radii` and `omega_out` have `nr`.
 */
MfgStatus mfg_remainder_decay(const struct MfgGrid *grid,
                              const struct MfgBaseline *baseline,
                              const double *f1,
                              const double *k,
                              const double *radii,
                              size_t nr,
                              double *omega_out,
                              double *slope_out);

/**
 * Synthesises boundary records for the probe plan `(jmax, r)` with the true
 * coefficient `f1_true` and reconstructs it from those records alone.
 *
 * # Safety
 * `f1_true` and `out` have `npts` values.
 */
MfgStatus mfg_probe_and_recover_f1(const struct MfgGrid *grid,
                                   const struct MfgBaseline *baseline,
                                   const double *f1_true,
                                   int64_t jmax,
                                   double r,
                                   double *out);

/**
 * Runs one of `forward`, `linearize`, `probe`, `measure`, `reconstruct`,
 * `verify` with a TOML configuration, writing results under `out_dir`.
 *
 * # Safety
 * `command`, `config_path` and `out_dir` must be NUL-terminated strings.
 */
MfgStatus mfg_run(const char *command, const char *config_path, const char *out_dir, bool serial);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MFG_H */
