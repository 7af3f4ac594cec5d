/* segsim C API. Opaque handles; every function is thread-compatible
 * (a handle must not be used from two threads at once). Functions that
 * can fail return SegStatus or NULL and set a thread-local error message
 * readable via seg_last_error(). */

#ifndef SEGSIM_H
#define SEGSIM_H

/* Generated by cbindgen from segsim-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for fallible calls.
 */
typedef enum SegStatus {
  SEG_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  SEG_STATUS_NULL_POINTER = 1,
  /**
   * An argument was malformed (bad UTF-8, out-of-range index, ...).
   */
  SEG_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The configuration failed to parse or validate.
   */
  SEG_STATUS_CONFIG = 3,
  /**
   * A filesystem operation failed.
   */
  SEG_STATUS_IO = 4,
  /**
   * The simulation itself failed.
   */
  SEG_STATUS_RUNTIME = 5,
} SegStatus;

/**
 * Per-iteration metric selector for [`seg_run_metric`].
 */
typedef enum SegMetric {
  SEG_METRIC_SAME_TYPE_FRACTION = 0,
  SEG_METRIC_INTERFACE_DENSITY = 1,
  SEG_METRIC_MEAN_REWARD_A = 2,
  SEG_METRIC_MEAN_REWARD_B = 3,
  SEG_METRIC_DEATHS = 4,
  SEG_METRIC_KILLS = 5,
  SEG_METRIC_EPSILON = 6,
} SegMetric;

/**
 * Opaque configuration handle.
 */
typedef struct SegConfig SegConfig;

/**
 * Opaque handle over a finished run.
 */
typedef struct SegRun SegRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or NULL if
 * none. The pointer stays valid until the next failing call on the same
 * thread.
 */
const char *seg_last_error(void);

/**
 * Library version as a static string.
 */
const char *seg_version(void);

/**
 * New configuration with all defaults (seed unset). Free with
 * [`seg_config_free`].
 */
struct SegConfig *seg_config_new(void);

/**
 * Parse a config file over the defaults; NULL on failure.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct SegConfig *seg_config_from_file(const char *path);

/**
 * Set one configuration key (same names as the config file format).
 *
 * # Safety
 * `config` must come from a `seg_config_*` constructor; `key` and `value`
 * must be valid NUL-terminated strings.
 */
enum SegStatus seg_config_set(struct SegConfig *config, const char *key, const char *value);

/**
 * Write the fully resolved configuration as NUL-terminated text into
 * `buffer` (truncating if needed) and return the untruncated length.
 *
 * # Safety
 * `config` must be a live handle; `buffer` must point at `len` writable
 * bytes (or be NULL with `len` 0 to query the size).
 */
uintptr_t seg_config_echo(const struct SegConfig *config, char *buffer, uintptr_t len);

/**
 * # Safety
 * `config` must be NULL or a pointer from a `seg_config_*` constructor;
 * it must not be used afterwards.
 */
void seg_config_free(struct SegConfig *config);

/**
 * Run a full simulation (training plus evaluation). Returns a run handle,
 * or NULL with an error message.
 *
 * # Safety
 * `config` must be a live configuration handle.
 */
struct SegRun *seg_run(const struct SegConfig *config);

/**
 * Number of recorded iterations in a run.
 *
 * # Safety
 * `run` must be a live run handle.
 */
uint64_t seg_run_iterations(const struct SegRun *run);

/**
 * Read one metric of one iteration into `out`.
 *
 * # Safety
 * `run` must be a live run handle and `out` a valid pointer.
 */
enum SegStatus seg_run_metric(const struct SegRun *run,
                              uint64_t iteration,
                              enum SegMetric metric,
                              double *out);

/**
 * Final grid dimensions.
 *
 * # Safety
 * `run` must be a live run handle; `width`/`height` must be valid.
 */
enum SegStatus seg_run_grid_size(const struct SegRun *run, uint32_t *width, uint32_t *height);

/**
 * Final cell contents at (x, y): 0 empty, 1 type A, 2 type B; -1 on a bad
 * handle or coordinates.
 *
 * # Safety
 * `run` must be a live run handle.
 */
int32_t seg_run_cell(const struct SegRun *run, uint32_t x, uint32_t y);

/**
 * Persist the run's outputs under the directory its configuration names
 * (metrics CSV, snapshots, checkpoints, config echo).
 *
 * # Safety
 * `run` must be a live run handle.
 */
enum SegStatus seg_run_save(const struct SegRun *run);

/**
 * # Safety
 * `run` must be NULL or a pointer from [`seg_run`]; it must not be used
 * afterwards.
 */
void seg_run_free(struct SegRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEGSIM_H */
