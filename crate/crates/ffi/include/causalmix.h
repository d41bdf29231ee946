#ifndef CAUSALMIX_H
#define CAUSALMIX_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CmStatus {
  CM_STATUS_OK = 0,
  CM_STATUS_NULL_POINTER = 1,
  CM_STATUS_INVALID_ARGUMENT = 2,
  CM_STATUS_IO = 3,
  CM_STATUS_TABLE = 4,
  CM_STATUS_DISCOVERY = 5,
  CM_STATUS_GENERATOR = 6,
  CM_STATUS_METRIC = 7,
  CM_STATUS_UNDEFINED = 8,
  CM_STATUS_PANIC = 99,
} CmStatus;

/**
 * Opaque edge-frequency matrix handle.
 */
typedef struct CmAdjacency CmAdjacency;

/**
 * Opaque table handle.
 */
typedef struct CmTable CmTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *cm_last_error(void);

/**
 * Load a CSV. `target` may be null, in which case the last column is the target.
 *
 * # Safety
 * `path` and a non-null `target` must be NUL-terminated strings; `out_table`
 * must be writable.
 */
enum CmStatus cm_table_load_csv(const char *path, const char *target, struct CmTable **out_table);

/**
 * # Safety
 * `table` must be null or a handle from this library that was not yet freed.
 */
void cm_table_free(struct CmTable *table);

/**
 * # Safety
 * `table` must be a live handle; the out pointers must be writable.
 */
enum CmStatus cm_table_shape(const struct CmTable *table, size_t *out_rows, size_t *out_cols);

/**
 * Copy the row-major values into `buf` (`rows * cols` doubles, NaN = missing).
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum CmStatus cm_table_values(const struct CmTable *table, double *buf, size_t len);

/**
 * Mean/mode imputation followed by z-scoring, both fitted on `table`.
 *
 * # Safety
 * `table` must be a live handle; `out_table` must be writable.
 */
enum CmStatus cm_table_preprocess(const struct CmTable *table, struct CmTable **out_table);

/**
 * Capped stratified train/validation/test split.
 *
 * # Safety
 * `table` must be a live handle; the three out pointers must be writable.
 */
enum CmStatus cm_table_split(const struct CmTable *table,
                             uint64_t fold_seed,
                             struct CmTable **out_train,
                             struct CmTable **out_val,
                             struct CmTable **out_test);

/**
 * # Safety
 * `table` must be a live handle and `path` a NUL-terminated string.
 */
enum CmStatus cm_table_write_csv(const struct CmTable *table, const char *path);

/**
 * Run `n_runs` randomized PC runs with default settings otherwise.
 *
 * # Safety
 * `table` must be a live handle; `out_adjacency` must be writable.
 */
enum CmStatus cm_discover(const struct CmTable *table,
                          size_t n_runs,
                          uint64_t seed,
                          struct CmAdjacency **out_adjacency);

/**
 * Build a matrix from `n * n` row-major frequencies in [0, 1].
 *
 * # Safety
 * `values` must hold `n * n` doubles; `out_adjacency` must be writable.
 */
enum CmStatus cm_adjacency_from_values(const double *values,
                                       size_t n,
                                       struct CmAdjacency **out_adjacency);

/**
 * # Safety
 * `adjacency` must be null or a live handle.
 */
void cm_adjacency_free(struct CmAdjacency *adjacency);

/**
 * # Safety
 * `adjacency` must be a live handle; `out_n` must be writable.
 */
enum CmStatus cm_adjacency_nodes(const struct CmAdjacency *adjacency, size_t *out_n);

/**
 * Frequency of the directed edge `i -> j`.
 *
 * # Safety
 * `adjacency` must be a live handle; `out_value` must be writable.
 */
enum CmStatus cm_adjacency_get(const struct CmAdjacency *adjacency,
                               size_t i,
                               size_t j,
                               double *out_value);

/**
 * Sample a DAG from `adjacency`, fit an SCM on `table` and draw `n` rows.
 * `tier` is 0 for GOOD and 1 for BETTER.
 *
 * # Safety
 * Handles must be live; `out_table` must be writable.
 */
enum CmStatus cm_generate_scm(const struct CmTable *table,
                              const struct CmAdjacency *adjacency,
                              uint32_t tier,
                              size_t n,
                              uint64_t seed,
                              struct CmTable **out_table);

/**
 * ROC-AUC from an `n x k` row-major probability matrix.
 *
 * # Safety
 * `probs` must hold `n * k` doubles and `labels` `n` values.
 */
enum CmStatus cm_roc_auc(const double *probs,
                         const size_t *labels,
                         size_t n,
                         size_t k,
                         double *out_value);

/**
 * Mean multiclass log-loss from an `n x k` row-major probability matrix.
 *
 * # Safety
 * `probs` must hold `n * k` doubles and `labels` `n` values.
 */
enum CmStatus cm_log_loss(const double *probs,
                          const size_t *labels,
                          size_t n,
                          size_t k,
                          double *out_value);

/**
 * # Safety
 * `xs` and `ys` must each hold `n` doubles.
 */
enum CmStatus cm_pearson(const double *xs, const double *ys, size_t n, double *out_value);

/**
 * Baseline-relative score. Returns `Undefined` when the baseline is zero.
 *
 * # Safety
 * `out_value` must be writable.
 */
enum CmStatus cm_normalize_score(double method,
                                 double baseline,
                                 bool higher_is_better,
                                 double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAUSALMIX_H */
