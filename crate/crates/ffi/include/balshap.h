#ifndef BALSHAP_H
#define BALSHAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum BalshapStatus {
  BALSHAP_STATUS_OK = 0,
  BALSHAP_STATUS_NULL_POINTER = 1,
  BALSHAP_STATUS_INVALID_ARGUMENT = 2,
  BALSHAP_STATUS_IO = 3,
  BALSHAP_STATUS_PARSE = 4,
  BALSHAP_STATUS_DIMENSION_MISMATCH = 5,
  BALSHAP_STATUS_INSUFFICIENT_DATA = 6,
  BALSHAP_STATUS_INVALID_CONFIG = 7,
  BALSHAP_STATUS_NUMERIC = 8,
  BALSHAP_STATUS_PANIC = 9,
} BalshapStatus;

typedef enum BalshapMethod {
  BALSHAP_METHOD_EXACT = 0,
  BALSHAP_METHOD_KERNEL = 1,
  BALSHAP_METHOD_DEEP = 2,
  BALSHAP_METHOD_GRADIENT = 3,
} BalshapMethod;

// Scale of the explained model output.
typedef enum BalshapOutput {
  BALSHAP_OUTPUT_PROBABILITY = 0,
  BALSHAP_OUTPUT_LOGIT = 1,
} BalshapOutput;

// Feature matrix with binary labels.
typedef struct BalshapDataset BalshapDataset;

// Trained classifier.
typedef struct BalshapModel BalshapModel;

// Attribution matrix for a set of rows.
typedef struct BalshapShap BalshapShap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *balshap_last_error_message(void);

// Reads a CSV with a header row. `label_column` may be null for `"label"`.
//
// # Safety
// `path` and (if non-null) `label_column` must be NUL-terminated strings;
// `out` must be valid for writing a pointer.
enum BalshapStatus balshap_dataset_load_csv(const char *path,
                                            const char *label_column,
                                            struct BalshapDataset **out);

// Builds a dataset from a row-major `n x d` matrix and `n` labels in {0, 1}.
//
// # Safety
// `features` must point to `n * d` doubles and `labels` to `n` bytes;
// `out` must be valid for writing a pointer.
enum BalshapStatus balshap_dataset_from_arrays(const double *features,
                                               const uint8_t *labels,
                                               size_t n,
                                               size_t d,
                                               struct BalshapDataset **out);

// # Safety
// `ds` must be null or a handle from this library not yet freed.
void balshap_dataset_free(struct BalshapDataset *ds);

// # Safety
// `ds` must be a live handle; `n` and `d` must be writable.
enum BalshapStatus balshap_dataset_dims(const struct BalshapDataset *ds, size_t *n, size_t *d);

// Fraction of rows with label 1.
//
// # Safety
// `ds` must be a live handle; `rate` must be writable.
enum BalshapStatus balshap_dataset_event_rate(const struct BalshapDataset *ds, double *rate);

// Copies the row-major feature matrix into `out` (`len` must be `n * d`).
//
// # Safety
// `ds` must be a live handle; `out` must have room for `len` doubles.
enum BalshapStatus balshap_dataset_copy_features(const struct BalshapDataset *ds,
                                                 double *out,
                                                 size_t len);

// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum BalshapStatus balshap_model_load_json(const char *path, struct BalshapModel **out);

// # Safety
// `model` must be null or a handle from this library not yet freed.
void balshap_model_free(struct BalshapModel *model);

// # Safety
// `model` must be a live handle; `d` must be writable.
enum BalshapStatus balshap_model_input_dim(const struct BalshapModel *model, size_t *d);

// Event probability for every row of `ds`; `len` must equal the row count.
//
// # Safety
// Handles must be live; `out` must have room for `len` doubles.
enum BalshapStatus balshap_model_predict(const struct BalshapModel *model,
                                         const struct BalshapDataset *ds,
                                         double *out,
                                         size_t len);

// Background of `size` rows with `round(size * p)` minority rows, drawn
// from `source`.
//
// # Safety
// `source` must be a live handle; `out` must be writable.
enum BalshapStatus balshap_compose_background(const struct BalshapDataset *source,
                                              size_t size,
                                              double p,
                                              uint64_t seed,
                                              struct BalshapDataset **out);

// Keeps all minority rows and under-samples the majority across K-means
// clusters to reach rate `p`. `clusters == 0` picks the count by the
// elbow rule over 1..=`k_max`.
//
// # Safety
// `source` must be a live handle; `out` must be writable.
enum BalshapStatus balshap_undersample(const struct BalshapDataset *source,
                                       double p,
                                       size_t clusters,
                                       size_t k_max,
                                       uint64_t seed,
                                       struct BalshapDataset **out);

// Explains every row of `rows` against `background`. `n_samples` is used
// by the sampled methods (0 keeps the default of 2000).
//
// # Safety
// Handles must be live; `out` must be writable.
enum BalshapStatus balshap_explain(const struct BalshapModel *model,
                                   const struct BalshapDataset *background,
                                   const struct BalshapDataset *rows,
                                   enum BalshapMethod method,
                                   enum BalshapOutput output,
                                   size_t n_samples,
                                   uint64_t seed,
                                   struct BalshapShap **out);

// # Safety
// `shap` must be null or a handle from this library not yet freed.
void balshap_shap_free(struct BalshapShap *shap);

// # Safety
// `shap` must be a live handle; `n` and `d` must be writable.
enum BalshapStatus balshap_shap_dims(const struct BalshapShap *shap, size_t *n, size_t *d);

// Expected model output over the background.
//
// # Safety
// `shap` must be a live handle; `out` must be writable.
enum BalshapStatus balshap_shap_base_value(const struct BalshapShap *shap, double *out);

// Copies the row-major `n x d` attributions; `len` must be `n * d`.
//
// # Safety
// `shap` must be a live handle; `out` must have room for `len` doubles.
enum BalshapStatus balshap_shap_copy_phi(const struct BalshapShap *shap, double *out, size_t len);

// Copies the model output for each explained row; `len` must be `n`.
//
// # Safety
// `shap` must be a live handle; `out` must have room for `len` doubles.
enum BalshapStatus balshap_shap_copy_fx(const struct BalshapShap *shap, double *out, size_t len);

// Mean absolute attribution per feature, written to `out` (`len` = `d`).
//
// # Safety
// `shap` must be a live handle; `out` must have room for `len` doubles.
enum BalshapStatus balshap_shap_mean_abs(const struct BalshapShap *shap, double *out, size_t len);

// Mann-Whitney AUC with ties counted one half.
//
// # Safety
// `scores` must hold `n` doubles and `labels` `n` bytes; `out` writable.
enum BalshapStatus balshap_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

// AUC with a class-stratified percentile bootstrap interval.
//
// # Safety
// `scores` must hold `n` doubles and `labels` `n` bytes; the three output
// pointers must be writable.
enum BalshapStatus balshap_auc_bootstrap(const double *scores,
                                         const uint8_t *labels,
                                         size_t n,
                                         size_t replicates,
                                         double level,
                                         uint64_t seed,
                                         double *auc,
                                         double *ci_low,
                                         double *ci_high);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BALSHAP_H */
