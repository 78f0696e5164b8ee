#ifndef PROGSPACE_H
#define PROGSPACE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Values 1 to 3 match the CLI exit codes.
 */
typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_VALIDATION = 1,
  PS_STATUS_IO = 2,
  PS_STATUS_NUMERIC = 3,
  /**
   * A required pointer argument was NULL.
   */
  PS_STATUS_NULL_POINTER = 4,
  /**
   * Rust code panicked; the message is kept as the last error.
   */
  PS_STATUS_PANIC = 5,
} PsStatus;

/**
 * Result of a full `run`.
 */
typedef struct PsAnalysis PsAnalysis;

/**
 * Pipeline configuration handle.
 */
typedef struct PsConfig PsConfig;

/**
 * Trained random forest together with the caller's integer class labels.
 */
typedef struct PsForest PsForest;

/**
 * Fitted Gaussian mixture.
 */
typedef struct PsGmm PsGmm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ps_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ps_version(void);

/**
 * New configuration with every default.
 */
struct PsConfig *ps_config_new(void);

/**
 * Parses a configuration file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum PsStatus ps_config_from_file(const char *path, struct PsConfig **out);

/**
 * Applies one `section.key = value` setting.
 *
 * # Safety
 * `config` must come from this library; `key` and `value` must be
 * NUL-terminated strings.
 */
enum PsStatus ps_config_set(struct PsConfig *config, const char *key, const char *value);

/**
 * # Safety
 * `config` must come from this library (or be NULL) and not be used afterwards.
 */
void ps_config_free(struct PsConfig *config);

/**
 * Writes a synthetic cohort (`visits.csv`, `truth.csv`) to `paths.output`.
 *
 * # Safety
 * `config` must come from this library.
 */
enum PsStatus ps_synth(const struct PsConfig *config);

/**
 * Runs the full pipeline on `paths.input`, writing reports to
 * `paths.output`. When `out` is non-NULL it receives the analysis handle.
 *
 * # Safety
 * `config` must come from this library; `out` must be NULL or writable.
 */
enum PsStatus ps_run(const struct PsConfig *config, struct PsAnalysis **out);

/**
 * Mixture order chosen by BIC.
 *
 * # Safety
 * `analysis` must come from [`ps_run`]; `out` must be writable.
 */
enum PsStatus ps_analysis_chosen_k(const struct PsAnalysis *analysis, size_t *out);

/**
 * Number of input windows that were cross-validated.
 *
 * # Safety
 * `analysis` must come from [`ps_run`]; `out` must be writable.
 */
enum PsStatus ps_analysis_n_windows(const struct PsAnalysis *analysis, size_t *out);

/**
 * Horizon (months) and pooled macro AUC of window `index`.
 *
 * # Safety
 * `analysis` must come from [`ps_run`]; both outputs must be writable.
 */
enum PsStatus ps_analysis_window_auc(const struct PsAnalysis *analysis,
                                     size_t index,
                                     uint32_t *horizon_out,
                                     double *auc_out);

/**
 * # Safety
 * `analysis` must come from [`ps_run`] (or be NULL) and not be used afterwards.
 */
void ps_analysis_free(struct PsAnalysis *analysis);

/**
 * Replays the models in `artifacts` on the `external` visits file and
 * writes the replication report to `paths.output`. `auc_out` receives the
 * macro AUC (NaN when undefined) and `n_out` the number of scored patients.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum PsStatus ps_replicate(const struct PsConfig *config,
                           const char *artifacts,
                           const char *external,
                           double *auc_out,
                           size_t *n_out);

/**
 * Nonnegative factorization `X ≈ W·H` of a `rows × cols` matrix. `w_out`
 * holds `rows × rank` and `h_out` `rank × cols` values; `objective_out`
 * (nullable) receives the final squared reconstruction error.
 *
 * # Safety
 * Buffers must have the stated lengths.
 */
enum PsStatus ps_nmf(const double *data,
                     size_t rows,
                     size_t cols,
                     size_t rank,
                     size_t max_iter,
                     double tol,
                     uint64_t seed,
                     size_t restarts,
                     double *w_out,
                     double *h_out,
                     double *objective_out);

/**
 * Fits a `k`-component full-covariance Gaussian mixture to `n × d` points.
 *
 * # Safety
 * `data` must hold `n * d` values; `out` must be writable.
 */
enum PsStatus ps_gmm_fit(const double *data,
                         size_t n,
                         size_t d,
                         size_t k,
                         uint64_t seed,
                         struct PsGmm **out);

/**
 * Number of mixture components.
 *
 * # Safety
 * `gmm` must come from [`ps_gmm_fit`]; `out` must be writable.
 */
enum PsStatus ps_gmm_k(const struct PsGmm *gmm, size_t *out);

/**
 * Training log-likelihood of the fitted mixture.
 *
 * # Safety
 * `gmm` must come from [`ps_gmm_fit`]; `out` must be writable.
 */
enum PsStatus ps_gmm_log_likelihood(const struct PsGmm *gmm, double *out);

/**
 * Hard subtype ranks (1 = slowest) for `n × d` points.
 *
 * # Safety
 * `data` must hold `n * d` values and `labels_out` `n` slots.
 */
enum PsStatus ps_gmm_assign(const struct PsGmm *gmm,
                            const double *data,
                            size_t n,
                            size_t d,
                            uint32_t *labels_out);

/**
 * # Safety
 * `gmm` must come from [`ps_gmm_fit`] (or be NULL) and not be used afterwards.
 */
void ps_gmm_free(struct PsGmm *gmm);

/**
 * Trains a forest on `n × p` features with integer class labels. The other
 * hyperparameters keep their defaults.
 *
 * # Safety
 * `data` must hold `n * p` values, `labels` `n` values; `out` writable.
 */
enum PsStatus ps_forest_train(const double *data,
                              size_t n,
                              size_t p,
                              const uint32_t *labels,
                              size_t n_trees,
                              uint64_t seed,
                              struct PsForest **out);

/**
 * Number of classes, i.e. the width of each probability row.
 *
 * # Safety
 * `forest` must come from [`ps_forest_train`]; `out` writable.
 */
enum PsStatus ps_forest_n_classes(const struct PsForest *forest, size_t *out);

/**
 * Caller label of probability column `index` (columns ascend by label).
 *
 * # Safety
 * `forest` must come from [`ps_forest_train`]; `out` writable.
 */
enum PsStatus ps_forest_class_label(const struct PsForest *forest, size_t index, uint32_t *out);

/**
 * Class probabilities for `n × p` rows into `out` (`n × n_classes`,
 * row-major). `out_len` must equal `n * n_classes`.
 *
 * # Safety
 * `data` must hold `n * p` values and `out` `out_len` slots.
 */
enum PsStatus ps_forest_predict_proba(const struct PsForest *forest,
                                      const double *data,
                                      size_t n,
                                      size_t p,
                                      double *out,
                                      size_t out_len);

/**
 * # Safety
 * `forest` must come from [`ps_forest_train`] (or be NULL) and not be used afterwards.
 */
void ps_forest_free(struct PsForest *forest);

/**
 * Area under the ROC curve; `labels` are 0 (negative) or nonzero (positive).
 *
 * # Safety
 * `scores` and `labels` must hold `n` values; `out` writable.
 */
enum PsStatus ps_roc_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Adjusted Rand index between two labelings of `n` elements.
 *
 * # Safety
 * `a` and `b` must hold `n` values; `out` writable.
 */
enum PsStatus ps_adjusted_rand_index(const uint32_t *a, const uint32_t *b, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROGSPACE_H */
