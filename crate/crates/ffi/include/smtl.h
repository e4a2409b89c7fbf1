/* C ABI for the SMTL engine. See smtl_last_error_message for error details. */

#ifndef SMTL_H
#define SMTL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of an FFI call. Zero is success; everything else is an error and
 * leaves a message in `smtl_last_error_message()`.
 */
typedef enum SmtlStatus {
  SMTL_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  SMTL_STATUS_NULL_POINTER = 1,
  /**
   * An argument violated a precondition (shape, range, encoding).
   */
  SMTL_STATUS_INVALID_ARGUMENT = 2,
  /**
   * An experiment configuration failed validation.
   */
  SMTL_STATUS_CONFIG = 3,
  /**
   * A dataset or artifact could not be parsed.
   */
  SMTL_STATUS_DATA = 4,
  /**
   * A NaN/Inf was detected outside training.
   */
  SMTL_STATUS_NUMERICAL = 5,
  /**
   * Training loss became non-finite.
   */
  SMTL_STATUS_DIVERGED = 6,
  /**
   * Expected run artifacts are absent.
   */
  SMTL_STATUS_MISSING_ARTIFACTS = 7,
  /**
   * Filesystem failure.
   */
  SMTL_STATUS_IO = 8,
  /**
   * Invariant violation inside the library.
   */
  SMTL_STATUS_INTERNAL = 9,
  /**
   * A panic was caught at the FFI boundary.
   */
  SMTL_STATUS_PANIC = 10,
} SmtlStatus;

/**
 * Trained multi-task model loaded from a checkpoint directory. Opaque;
 * create with `smtl_model_load`, release with `smtl_model_free`.
 */
typedef struct SmtlModel SmtlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failing `smtl_*` call on this thread, or NULL
 * if the most recent call succeeded. The pointer stays valid until the next
 * `smtl_*` call on the same thread.
 */
const char *smtl_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *smtl_version(void);

/**
 * Kullback–Leibler divergence KL(p‖q) between two `len`-outcome
 * distributions. Infinite when q has a zero where p has mass.
 *
 * # Safety
 * `p` and `q` must be valid for `len` reads; `out` must be writable.
 */
enum SmtlStatus smtl_kl(const double *p, const double *q, size_t len, double *out);

/**
 * Jensen–Shannon divergence (natural log; bounded by ln 2).
 *
 * # Safety
 * `p` and `q` must be valid for `len` reads; `out` must be writable.
 */
enum SmtlStatus smtl_js(const double *p, const double *q, size_t len, double *out);

/**
 * Total variation distance (half L1; bounded by 1).
 *
 * # Safety
 * `p` and `q` must be valid for `len` reads; `out` must be writable.
 */
enum SmtlStatus smtl_tv(const double *p, const double *q, size_t len, double *out);

/**
 * Class-balanced re-weighting vector for per-class sample counts: writes
 * `m / (k_present · n_j)` into `out[j]` for present classes and 0 for
 * absent ones, so balanced counts give exactly 1. Fails when every count
 * is zero.
 *
 * # Safety
 * `counts` must be valid for `k` reads; `out` must be writable for `k`.
 */
enum SmtlStatus smtl_class_balanced_weights(const size_t *counts, size_t k, double *out);

/**
 * Euclidean projection of `v` onto the probability simplex.
 *
 * # Safety
 * `v` must be valid for `len` reads; `out` must be writable for `len`.
 */
enum SmtlStatus smtl_project_to_simplex(const double *v, size_t len, double *out);

/**
 * Loads a model from a checkpoint directory written during training.
 * On success writes an owned handle to `*out`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum SmtlStatus smtl_model_load(const char *dir, struct SmtlModel **out);

/**
 * Reports a loaded model's shape: task count, input feature dimension and
 * classes per task.
 *
 * # Safety
 * `model` must be a live handle; the three out-pointers must be writable.
 */
enum SmtlStatus smtl_model_info(const struct SmtlModel *model,
                                size_t *out_tasks,
                                size_t *out_input_dim,
                                size_t *out_classes);

/**
 * Predicts class labels for a row-major `rows × dim` feature matrix using
 * task `task`'s head. Writes one label per row into `out_labels`.
 *
 * # Safety
 * `model` must be a live handle; `features` must be valid for `rows * dim`
 * reads; `out_labels` must be writable for `rows`.
 */
enum SmtlStatus smtl_model_predict(const struct SmtlModel *model,
                                   size_t task,
                                   const double *features,
                                   size_t rows,
                                   size_t dim,
                                   size_t *out_labels);

/**
 * Releases a model handle. NULL is a no-op. The handle must not be used
 * after this call.
 *
 * # Safety
 * `model` must be NULL or a handle obtained from `smtl_model_load` that has
 * not been freed yet.
 */
void smtl_model_free(struct SmtlModel *model);

/**
 * Runs a full experiment from a JSON config file, writing all artifacts
 * under the configured output directory exactly like `smtl run`.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string.
 */
enum SmtlStatus smtl_run_experiment(const char *config_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMTL_H */
