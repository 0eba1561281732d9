#ifndef BUBBLY_H
#define BUBBLY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BubblyStatus {
  BUBBLY_STATUS_OK = 0,
  BUBBLY_STATUS_NULL_POINTER = 1,
  BUBBLY_STATUS_INVALID_UTF8 = 2,
  BUBBLY_STATUS_INVALID_CONFIG = 3,
  BUBBLY_STATUS_INVALID_INPUT = 4,
  BUBBLY_STATUS_INFEASIBLE = 5,
  BUBBLY_STATUS_SOLVER_FAILURE = 6,
  BUBBLY_STATUS_IO = 7,
  /**
   * The requested quantity does not exist (e.g. a rate fit with too few entries).
   */
  BUBBLY_STATUS_UNAVAILABLE = 8,
  BUBBLY_STATUS_PANIC = 9,
} BubblyStatus;

typedef struct BubblyCloud BubblyCloud;

typedef struct BubblyComparison BubblyComparison;

typedef struct BubblyConfig BubblyConfig;

typedef struct BubblyTrajectories BubblyTrajectories;

/**
 * One sweep entry. Errors are NaN for entries skipped by the cost budget.
 */
typedef struct BubblyEntry {
  double delta;
  size_t m;
  double d;
  double eps;
  double e_max;
  double e_l2;
  double runtime_s;
  /**
   * 1 when C1 to C3 hold.
   */
  int32_t conditions_pass;
} BubblyEntry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *bubbly_last_error_message(void);

/**
 * Static, NUL-terminated name of a status code.
 */
const char *bubbly_status_name(enum BubblyStatus status);

/**
 * Built-in default configuration. Never returns null.
 */
struct BubblyConfig *bubbly_config_new(void);

/**
 * Parses a TOML configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BubblyStatus bubbly_config_from_toml(const char *toml, struct BubblyConfig **out);

/**
 * Reads a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BubblyStatus bubbly_config_load(const char *path, struct BubblyConfig **out);

/**
 * # Safety
 * `cfg` must come from this library and not be used afterwards; null is ignored.
 */
void bubbly_config_free(struct BubblyConfig *cfg);

/**
 * # Safety
 * `cfg` must be a valid configuration handle.
 */
enum BubblyStatus bubbly_config_set_seed(struct BubblyConfig *cfg, uint64_t seed);

/**
 * Replaces the bubble sizes of the sweep; they must be strictly decreasing.
 *
 * # Safety
 * `cfg` must be a valid handle and `deltas` point to `len` doubles.
 */
enum BubblyStatus bubbly_config_set_deltas(struct BubblyConfig *cfg,
                                           const double *deltas,
                                           size_t len);

/**
 * Sets the end of the simulated time window.
 *
 * # Safety
 * `cfg` must be a valid configuration handle.
 */
enum BubblyStatus bubbly_config_set_t_end(struct BubblyConfig *cfg, double t_end);

/**
 * Builds the bubble cloud of one bubble size.
 *
 * # Safety
 * `cfg` must be a valid handle and `out` a valid pointer.
 */
enum BubblyStatus bubbly_cloud_generate(const struct BubblyConfig *cfg,
                                        double delta,
                                        struct BubblyCloud **out);

/**
 * Number of bubbles; 0 for null.
 *
 * # Safety
 * `cloud` must be null or a valid handle.
 */
size_t bubbly_cloud_len(const struct BubblyCloud *cloud);

/**
 * Copies the centres as x, y, z triples into `xyz` (capacity `cap` doubles).
 *
 * # Safety
 * `cloud` must be a valid handle and `xyz` point to `cap` writable doubles.
 */
enum BubblyStatus bubbly_cloud_centers(const struct BubblyCloud *cloud, double *xyz, size_t cap);

/**
 * # Safety
 * `cloud` must come from this library and not be used afterwards; null is ignored.
 */
void bubbly_cloud_free(struct BubblyCloud *cloud);

/**
 * Solves the discrete system for one bubble size.
 *
 * # Safety
 * `cfg` must be a valid handle and `out` a valid pointer.
 */
enum BubblyStatus bubbly_solve_bubbles(const struct BubblyConfig *cfg,
                                       double delta,
                                       struct BubblyTrajectories **out);

/**
 * Number of bubbles in a solution; 0 for null.
 *
 * # Safety
 * `traj` must be null or a valid handle.
 */
size_t bubbly_trajectories_len(const struct BubblyTrajectories *traj);

/**
 * Y_i(t), interpolated; zero before the incident wave arrives.
 *
 * # Safety
 * `traj` must be a valid handle and `out` a valid pointer.
 */
enum BubblyStatus bubbly_trajectories_y(const struct BubblyTrajectories *traj,
                                        size_t i,
                                        double t,
                                        double *out);

/**
 * Scattered field at a point outside the cloud.
 *
 * # Safety
 * `traj` must be a valid handle, `x` point to three doubles and `out` be valid.
 */
enum BubblyStatus bubbly_trajectories_scattered(const struct BubblyTrajectories *traj,
                                                const double *x,
                                                double t,
                                                double *out);

/**
 * # Safety
 * `traj` must come from this library and not be used afterwards; null is ignored.
 */
void bubbly_trajectories_free(struct BubblyTrajectories *traj);

/**
 * Runs the discrete-versus-effective comparison over the configured sizes.
 *
 * # Safety
 * `cfg` must be a valid handle and `out` a valid pointer.
 */
enum BubblyStatus bubbly_run_comparison(const struct BubblyConfig *cfg,
                                        struct BubblyComparison **out);

/**
 * Number of sweep entries; 0 for null.
 *
 * # Safety
 * `cmp` must be null or a valid handle.
 */
size_t bubbly_comparison_len(const struct BubblyComparison *cmp);

/**
 * # Safety
 * `cmp` must be a valid handle and `out` a valid pointer.
 */
enum BubblyStatus bubbly_comparison_entry(const struct BubblyComparison *cmp,
                                          size_t k,
                                          struct BubblyEntry *out);

/**
 * Fitted log-log slope and intercept; `Unavailable` when fewer than three
 * entries have a positive error.
 *
 * # Safety
 * `cmp` must be a valid handle; `slope` and `intercept` valid pointers.
 */
enum BubblyStatus bubbly_comparison_fit(const struct BubblyComparison *cmp,
                                        double *slope,
                                        double *intercept);

/**
 * Writes errors.csv, conditions.csv, rate_plot.csv and the probe files.
 *
 * # Safety
 * `cmp` must be a valid handle and `dir` a NUL-terminated string.
 */
enum BubblyStatus bubbly_comparison_write(const struct BubblyComparison *cmp, const char *dir);

/**
 * # Safety
 * `cmp` must come from this library and not be used afterwards; null is ignored.
 */
void bubbly_comparison_free(struct BubblyComparison *cmp);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BUBBLY_H */
