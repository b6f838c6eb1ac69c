/* Generated by cbindgen from crates/ffi/src/lib.rs. */

#ifndef DSM_GEOM_H
#define DSM_GEOM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DsmStatus {
  DSM_STATUS_OK = 0,
  DSM_STATUS_NULL_POINTER = 1,
  DSM_STATUS_INVALID_ARGUMENT = 2,
  DSM_STATUS_DOMAIN = 3,
  DSM_STATUS_CONDITION4_VIOLATED = 4,
  DSM_STATUS_HESSIAN_STRUCTURE_VIOLATED = 5,
  DSM_STATUS_NUMERICAL_FAILURE = 6,
  DSM_STATUS_NO_CONVERGENCE = 7,
  DSM_STATUS_UNSUPPORTED = 8,
  DSM_STATUS_PANIC = 9,
} DsmStatus;

/**
 * Opaque model handle.
 */
typedef struct DsmModel DsmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a catalogue model. `params_json` may be null for defaults, else a
 * JSON object with any of `levels`, `kappa`, `lambda`, `mu0`, `sigma0`.
 *
 * # Safety
 * `name` and a non-null `params_json` must be NUL-terminated strings; `out`
 * must be writable.
 */
enum DsmStatus dsm_model_new(const char *name, const char *params_json, struct DsmModel **out);

/**
 * # Safety
 * `model` must come from [`dsm_model_new`] and not be freed twice. Null is ignored.
 */
void dsm_model_free(struct DsmModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum DsmStatus dsm_model_dim(const struct DsmModel *model, size_t *out);

/**
 * Writes the metric at `theta` into `out` (`n*n`, row-major).
 *
 * # Safety
 * `theta` must hold `n` values and `out` room for `n*n`.
 */
enum DsmStatus dsm_metric_at(const struct DsmModel *model,
                             const double *theta,
                             size_t n,
                             double *out);

/**
 * Writes ω^k_ij at `theta` into `out[(k*n + i)*n + j]`.
 *
 * # Safety
 * `theta` must hold `n` values and `out` room for `n*n*n`.
 */
enum DsmStatus dsm_connection_at(const struct DsmModel *model,
                                 const double *theta,
                                 size_t n,
                                 double *out);

/**
 * Largest absolute curvature component at `theta`.
 *
 * # Safety
 * `theta` must hold `n` values and `out` be writable.
 */
enum DsmStatus dsm_curvature_max(const struct DsmModel *model,
                                 const double *theta,
                                 size_t n,
                                 double *out);

/**
 * Integrates the geodesic from `theta0` with velocity `v0` to time `t`
 * and writes the endpoint into `out` (`n` values). A geodesic leaving the
 * chart stops early and reports `Domain`; `out` then holds the last point.
 *
 * # Safety
 * `theta0`, `v0` and `out` must each hold `n` values.
 */
enum DsmStatus dsm_geodesic_endpoint(const struct DsmModel *model,
                                     const double *theta0,
                                     const double *v0,
                                     size_t n,
                                     double t,
                                     double *out);

/**
 * Classifies the model on its default grid. The JSON report is returned in
 * `*out` and must be released with [`dsm_string_free`].
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum DsmStatus dsm_classify_json(const struct DsmModel *model, char **out);

/**
 * # Safety
 * `s` must come from this library and not be freed twice. Null is ignored.
 */
void dsm_string_free(char *s);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *dsm_last_error(void);

const char *dsm_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSM_GEOM_H */
