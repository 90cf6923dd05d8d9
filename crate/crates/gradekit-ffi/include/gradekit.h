/* C interface for the gradekit grading engine. */

#ifndef GRADEKIT_H
#define GRADEKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by fallible calls.
typedef enum GkStatus {
  // Success.
  GK_OK = 0,
  // Invalid arguments (null pointer, bad UTF-8, malformed JSON).
  GK_USAGE = 1,
  // Data or validation failure (missing file, malformed record, shape
  // mismatch, empty join).
  GK_DATA = 2,
  // Numerical failure (divergence, degenerate metric input).
  GK_NUMERIC = 3,
  // An internal panic was caught; state may be stale but memory is safe.
  GK_PANIC = 4,
} GkStatus;

// Opaque handle to a fitted per-part combination model.
typedef struct GkCombination GkCombination;

// Opaque dataset handle.
typedef struct GkDataset GkDataset;

// Opaque handle to a trained per-part ensemble.
typedef struct GkEnsemble GkEnsemble;

// The five evaluation metrics for one prediction/reference pairing.
typedef struct GkMetrics {
  double pcc;
  double src;
  double rmse;
  double within_half;
  double within_one;
  uintptr_t n;
} GkMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string; do not free.
const char *gk_version(void);

// Returns a copy of the calling thread's last error message, or null when
// no error has occurred. Free the copy with `gk_string_free`.
char *gk_last_error_message(void);

// Frees a string returned by this library.
//
// # Safety
// `ptr` must have been returned by a gradekit-ffi function and not freed
// before; null is ignored.
void gk_string_free(char *ptr);

// Loads a JSON-lines dataset from `path` into a new handle.
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` must be a valid
// pointer to receive the handle.
enum GkStatus gk_dataset_load(const char *path, struct GkDataset **out);

// Writes a dataset as JSON lines.
//
// # Safety
// `dataset` must be a live handle; `path` a valid NUL-terminated string.
enum GkStatus gk_dataset_save(const struct GkDataset *dataset, const char *path);

// Number of speakers in a dataset; 0 for a null handle.
//
// # Safety
// `dataset` must be a live handle or null.
uintptr_t gk_dataset_num_speakers(const struct GkDataset *dataset);

// # Safety
// `dataset` must be a handle from this library, not freed before; null is
// ignored.
void gk_dataset_free(struct GkDataset *dataset);

// Generates synthetic train/calibration/test datasets from a spec given
// as JSON (all fields optional, same schema as the CLI synth config).
//
// # Safety
// `spec_json` must be a valid NUL-terminated string; the three output
// pointers must be valid.
enum GkStatus gk_synth_generate(const char *spec_json,
                                struct GkDataset **out_train,
                                struct GkDataset **out_calibration,
                                struct GkDataset **out_test);

// Trains an ensemble of `members` heads on `dataset` with the training
// config given as JSON (same schema as the CLI training config).
//
// # Safety
// `dataset` must be a live handle; `config_json` a valid NUL-terminated
// string; `out` a valid pointer.
enum GkStatus gk_train_ensemble(const struct GkDataset *dataset,
                                const char *config_json,
                                uintptr_t members,
                                uint64_t base_seed,
                                struct GkEnsemble **out);

// # Safety
// `ensemble` must be a live handle; `dir` a valid NUL-terminated string.
enum GkStatus gk_ensemble_save(const struct GkEnsemble *ensemble, const char *dir);

// # Safety
// `dir` must be a valid NUL-terminated string; `out` a valid pointer.
enum GkStatus gk_ensemble_load(const char *dir, struct GkEnsemble **out);

// Zero-based index of the part this ensemble grades (0 = P1), or -1 for a
// null handle.
//
// # Safety
// `ensemble` must be a live handle or null.
int32_t gk_ensemble_part_index(const struct GkEnsemble *ensemble);

// Scores every speaker of `dataset` with the ensemble, writing one grade
// per speaker (dataset order) into `out_scores`. Speakers without
// responses for the ensemble's part receive NaN. `len` must equal the
// speaker count.
//
// # Safety
// `ensemble` and `dataset` must be live handles; `out_scores` must point
// to at least `len` doubles.
enum GkStatus gk_ensemble_predict(const struct GkEnsemble *ensemble,
                                  const struct GkDataset *dataset,
                                  double *out_scores,
                                  uintptr_t len);

// # Safety
// `ensemble` must be a handle from this library, not freed before; null is
// ignored.
void gk_ensemble_free(struct GkEnsemble *ensemble);

// Fits combination coefficients from prediction CSV files against the
// reference overall grades of `targets`.
//
// # Safety
// `csv_paths` must point to `n_paths` valid NUL-terminated strings;
// `targets` must be a live handle; `out` a valid pointer.
enum GkStatus gk_combination_fit(const char *const *csv_paths,
                                 uintptr_t n_paths,
                                 const struct GkDataset *targets,
                                 struct GkCombination **out);

// Applies a fitted combination to one row of scores given as parallel
// arrays of column tags (`grader:part`) and values.
//
// # Safety
// `model` must be a live handle; `tags` must point to `n` valid
// NUL-terminated strings; `values` to `n` doubles; `out` to one double.
enum GkStatus gk_combination_apply(const struct GkCombination *model,
                                   const char *const *tags,
                                   const double *values,
                                   uintptr_t n,
                                   double *out);

// # Safety
// `model` must be a live handle; `path` a valid NUL-terminated string.
enum GkStatus gk_combination_save(const struct GkCombination *model, const char *path);

// # Safety
// `path` must be a valid NUL-terminated string; `out` a valid pointer.
enum GkStatus gk_combination_load(const char *path, struct GkCombination **out);

// # Safety
// `model` must be a handle from this library, not freed before; null is
// ignored.
void gk_combination_free(struct GkCombination *model);

// Computes the five evaluation metrics over parallel prediction and
// reference arrays of length `n`.
//
// # Safety
// `pred` and `reference` must point to `n` doubles; `out` to one
// `GkMetrics`.
enum GkStatus gk_metrics_report(const double *pred,
                                const double *reference,
                                uintptr_t n,
                                struct GkMetrics *out);

// Mean of five part grades (the overall exam grade).
//
// # Safety
// `part_scores` must point to five doubles; `out` to one double.
enum GkStatus gk_overall_grade(const double *part_scores, double *out);

// Writes the CEFR label (e.g. "B2") for a score into `buf` (NUL
// terminated); `cap` must be at least 3.
//
// # Safety
// `buf` must point to at least `cap` writable bytes.
enum GkStatus gk_cefr_label(double score, char *buf, uintptr_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRADEKIT_H */
