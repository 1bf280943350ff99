#ifndef CURVEWARP_H
#define CURVEWARP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CwStatus {
  CW_STATUS_OK = 0,
  CW_STATUS_NULL_POINTER = 1,
  CW_STATUS_INVALID_ARGUMENT = 2,
  CW_STATUS_DATA_ERROR = 3,
  CW_STATUS_CONFIG_ERROR = 4,
  CW_STATUS_MODEL_ERROR = 5,
  CW_STATUS_IO_ERROR = 6,
  CW_STATUS_INFERENCE_ERROR = 7,
  CW_STATUS_BUFFER_TOO_SMALL = 8,
  CW_STATUS_PANIC = 99,
} CwStatus;

/**
 * Growable collection of curves sharing one dimension.
 */
typedef struct CwCurveSet CwCurveSet;

typedef struct CwModel CwModel;

/**
 * Fitting options. `grid_len == 0` selects the default grid.
 */
typedef struct CwConfig {
  size_t components;
  size_t max_shift;
  size_t max_skip;
  bool allow_stay;
  bool offsets_enabled;
  size_t grid_len;
  double dirichlet_alpha;
  double variance_floor_frac;
  double tol;
  size_t max_iters;
  bool tie_transitions;
  bool translation_search;
  size_t n_starts;
  uint64_t seed;
} CwConfig;

/**
 * Viterbi summary for one curve; the path and offset go to caller buffers.
 */
typedef struct CwAlignment {
  size_t component;
  size_t start;
  size_t len;
  size_t dims;
  double log_joint;
} CwAlignment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. Valid until
 * the next call into this library on the same thread.
 */
const char *cw_last_error_message(void);

/**
 * Library defaults: one cluster, no shift, no warping, no offsets, 5 starts, seed 0.
 */
struct CwConfig cw_config_default(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CwStatus cw_curveset_new(size_t dims, struct CwCurveSet **out);

/**
 * Appends a curve of `len` points read row-major from `values` (`len * dims` doubles).
 *
 * # Safety
 * `set` must come from this library; `id` must be a NUL-terminated string;
 * `values` must point to `len * dims` readable doubles.
 */
enum CwStatus cw_curveset_push(struct CwCurveSet *set,
                               const char *id,
                               const double *values,
                               size_t len);

/**
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum CwStatus cw_curveset_load_csv(const char *path, struct CwCurveSet **out);

/**
 * # Safety
 * `set` must come from this library; `out` must be writable.
 */
enum CwStatus cw_curveset_len(const struct CwCurveSet *set, size_t *out);

/**
 * # Safety
 * `set` must be NULL or come from this library, and must not be used afterwards.
 */
void cw_curveset_free(struct CwCurveSet *set);

/**
 * Fits with `config.n_starts` random restarts. `out_objective` may be NULL.
 *
 * # Safety
 * `set` and `config` must be valid; `out_model` must be writable.
 */
enum CwStatus cw_fit(const struct CwCurveSet *set,
                     const struct CwConfig *config,
                     struct CwModel **out_model,
                     double *out_objective);

/**
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum CwStatus cw_model_load(const char *path, struct CwModel **out);

/**
 * # Safety
 * `model` must come from this library; `path` must be a NUL-terminated UTF-8 string.
 */
enum CwStatus cw_model_save(const struct CwModel *model, const char *path);

/**
 * # Safety
 * `model` must come from this library; `out` must be writable.
 */
enum CwStatus cw_model_components(const struct CwModel *model, size_t *out);

/**
 * # Safety
 * `model` must be NULL or come from this library, and must not be used afterwards.
 */
void cw_model_free(struct CwModel *model);

/**
 * Log density of curve `index` of `set`.
 *
 * # Safety
 * Handles must come from this library; `out` must be writable.
 */
enum CwStatus cw_curve_loglik(const struct CwModel *model,
                              const struct CwCurveSet *set,
                              size_t index,
                              double *out);

/**
 * Mean log density per scalar measurement over the whole set.
 *
 * # Safety
 * Handles must come from this library; `out` must be writable.
 */
enum CwStatus cw_heldout_logp(const struct CwModel *model,
                              const struct CwCurveSet *set,
                              double *out);

/**
 * Most probable alignment of curve `index`. Writes the summary to `out`, the
 * grid path to `path` (capacity `path_cap`) and the offset to `offset`
 * (capacity `offset_cap`). When a buffer is too small, `out` still receives
 * the required sizes and `CW_STATUS_BUFFER_TOO_SMALL` is returned.
 *
 * # Safety
 * Handles must come from this library; buffers must hold their stated capacities.
 */
enum CwStatus cw_align(const struct CwModel *model,
                       const struct CwCurveSet *set,
                       size_t index,
                       struct CwAlignment *out,
                       size_t *path,
                       size_t path_cap,
                       double *offset,
                       size_t offset_cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CURVEWARP_H */
