#ifndef FAIRGBT_H
#define FAIRGBT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum FgStatus {
  FG_STATUS_OK = 0,
  FG_STATUS_NULL_POINTER = 1,
  FG_STATUS_INVALID_ARGUMENT = 2,
  FG_STATUS_DATA_ERROR = 3,
  FG_STATUS_NUMERICAL_ERROR = 4,
  FG_STATUS_BUFFER_TOO_SMALL = 5,
  FG_STATUS_PANIC = 6,
} FgStatus;

// Opaque dataset handle.
typedef struct FgDataset FgDataset;

// Opaque model handle.
typedef struct FgModel FgModel;

typedef struct FgTrainParams {
  uint32_t rounds;
  double learning_rate;
  uint32_t max_depth;
  double min_child_cover;
  double l2_leaf_reg;
  uint64_t seed;
} FgTrainParams;

// `θ = (λ, w1, w2, w3)`.
typedef struct FgFairness {
  double lambda;
  double w1;
  double w2;
  double w3;
} FgFairness;

// Settings of a full mitigation run.
typedef struct FgMitigateParams {
  struct FgTrainParams train;
  double test_fraction;
  uint64_t split_seed;
  double threshold;
  uint32_t budget;
  uint32_t folds;
  uint64_t search_seed;
  // Non-zero: skip the search and use `theta`.
  uint8_t use_theta;
  struct FgFairness theta;
} FgMitigateParams;

// Hard-threshold fairness metrics of one prediction vector.
typedef struct FgSnapshot {
  double spd;
  double theil;
  double theil_normalized;
  double wasserstein;
  double rate_group0;
  double rate_group1;
} FgSnapshot;

// Test-set summary of a mitigation run.
typedef struct FgComparison {
  struct FgSnapshot pre;
  struct FgSnapshot post;
  double pre_auc;
  double post_auc;
  double lambda;
  double w1;
  double w2;
  double w3;
} FgComparison;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *fg_last_error(void);

struct FgTrainParams fg_train_params_default(void);

struct FgMitigateParams fg_mitigate_params_default(void);

// Synthetic cohort with a proxy feature and a group-shifted intercept.
//
// # Safety
// `out` must be a valid pointer to write a handle into.
enum FgStatus fg_dataset_synth(size_t rows,
                               size_t cols,
                               double bias_strength,
                               uint64_t seed,
                               struct FgDataset **out);

// Reads a CSV with a TOML schema. Rows with unusable labels or sensitive
// values are dropped.
//
// # Safety
// Paths must be nul-terminated strings; `out` must be writable.
enum FgStatus fg_dataset_load_csv(const char *csv_path,
                                  const char *schema_path,
                                  struct FgDataset **out);

// Numeric dataset from a row-major `rows × cols` matrix, labels and
// sensitive codes (0/1).
//
// # Safety
// `x` must hold `rows·cols` values; `y` and `a` must hold `rows` values.
enum FgStatus fg_dataset_from_arrays(const double *x,
                                     size_t rows,
                                     size_t cols,
                                     const uint8_t *y,
                                     const uint8_t *a,
                                     struct FgDataset **out);

// # Safety
// `d` must be a live handle or null.
size_t fg_dataset_rows(const struct FgDataset *d);

// Number of model features (after one-hot encoding once preprocessed).
//
// # Safety
// `d` must be a live handle or null.
size_t fg_dataset_features(const struct FgDataset *d);

// Copies the 0/1 labels into `out[0..len]`.
//
// # Safety
// `d` must be a live handle; `out` must hold `len` bytes.
enum FgStatus fg_dataset_labels(const struct FgDataset *d, uint8_t *out, size_t len);

// Copies the 0/1 sensitive codes into `out[0..len]`.
//
// # Safety
// `d` must be a live handle; `out` must hold `len` bytes.
enum FgStatus fg_dataset_sensitive(const struct FgDataset *d, uint8_t *out, size_t len);

// Standardized, one-hot encoded copy of `d`, with statistics fitted on `d`.
//
// # Safety
// `d` must be a live handle; `out` must be writable.
enum FgStatus fg_dataset_preprocess(const struct FgDataset *d, struct FgDataset **out);

// Stratified split; both parts are preprocessed with statistics fitted on
// the training part.
//
// # Safety
// `d` must be a live handle; `train` and `test` must be writable.
enum FgStatus fg_dataset_split(const struct FgDataset *d,
                               double test_fraction,
                               uint64_t seed,
                               struct FgDataset **train,
                               struct FgDataset **test);

// # Safety
// `d` must come from an `fg_dataset_*` constructor and not be used again.
void fg_dataset_free(struct FgDataset *d);

// # Safety
// Handles and `params` must be valid; `out` must be writable.
enum FgStatus fg_train_baseline(const struct FgDataset *train,
                                const struct FgTrainParams *params,
                                struct FgModel **out);

// # Safety
// Handles and parameter pointers must be valid; `out` must be writable.
enum FgStatus fg_train_fair(const struct FgDataset *train,
                            const struct FgTrainParams *params,
                            const struct FgFairness *theta,
                            struct FgModel **out);

// Writes one probability per row of `d` into `out[0..len]`.
//
// # Safety
// Handles must be valid; `out` must hold `len` doubles.
enum FgStatus fg_model_predict(const struct FgModel *model,
                               const struct FgDataset *d,
                               double *out,
                               size_t len);

// # Safety
// `model` must be valid; `file` must be a nul-terminated path.
enum FgStatus fg_model_save(const struct FgModel *model, const char *file);

// # Safety
// `file` must be a nul-terminated path; `out` must be writable.
enum FgStatus fg_model_load(const char *file, struct FgModel **out);

// # Safety
// `model` must be valid or null.
size_t fg_model_trees(const struct FgModel *model);

// # Safety
// `m` must come from `fg_train_*` or `fg_model_load` and not be used again.
void fg_model_free(struct FgModel *m);

// Hard-threshold SPD, Theil (summed and per-instance) and W₁.
//
// # Safety
// `p` and `a` must hold `n` values; `out` must be writable.
enum FgStatus fg_fairness_snapshot(const double *p,
                                   const uint8_t *a,
                                   size_t n,
                                   double threshold,
                                   struct FgSnapshot *out);

// # Safety
// `p` and `y` must hold `n` values; `out` must be writable.
enum FgStatus fg_auc(const double *p, const uint8_t *y, size_t n, double *out);

// Exact 1-Wasserstein distance between two samples.
//
// # Safety
// `p0` holds `n0` values, `p1` holds `n1`; `out` must be writable.
enum FgStatus fg_wasserstein(const double *p0, size_t n0, const double *p1, size_t n1, double *out);

// TreeSHAP values, row-major `rows × features`, plus the base value.
//
// # Safety
// Handles must be valid; `phi` must hold `len` doubles; `base` writable.
enum FgStatus fg_shap(const struct FgModel *model,
                      const struct FgDataset *d,
                      double *phi,
                      size_t len,
                      double *base);

// Audit, search (or fixed `theta`), retrain and compare on raw data `d`.
// When `out_dir` is non-null, the report, models and CSV artifacts are
// written there.
//
// # Safety
// `d` and `params` must be valid; `out_dir` null or a nul-terminated
// path; `out` writable.
enum FgStatus fg_mitigate(const struct FgDataset *d,
                          const struct FgMitigateParams *params,
                          const char *out_dir,
                          struct FgComparison *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAIRGBT_H */
