#ifndef EMDLOT_H
#define EMDLOT_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum EmdlotStatus {
  EMDLOT_STATUS_OK = 0,
  // A required pointer was null.
  EMDLOT_STATUS_NULL_POINTER = 1,
  // Bad argument, configuration or data.
  EMDLOT_STATUS_INVALID_ARGUMENT = 2,
  // Filesystem failure.
  EMDLOT_STATUS_IO = 3,
  // Malformed input file or JSON.
  EMDLOT_STATUS_PARSE = 4,
  // Unreadable or inconsistent checkpoint.
  EMDLOT_STATUS_CHECKPOINT = 5,
  // Training or evaluation failed at run time.
  EMDLOT_STATUS_RUNTIME = 6,
  // An output buffer was too small; see the `written` out-parameter.
  EMDLOT_STATUS_BUFFER_TOO_SMALL = 7,
  // Internal panic caught at the boundary.
  EMDLOT_STATUS_PANIC = 8,
} EmdlotStatus;

// Opaque dataset handle.
typedef struct EmdlotDataset EmdlotDataset;

// Opaque trained-model handle: parameters plus the preprocessing fitted
// on the training split.
typedef struct EmdlotModel EmdlotModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on this thread.
const char *emdlot_last_error(void);

// Library version as a static string.
const char *emdlot_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void emdlot_string_free(char *s);

// Loads a dataset directory (series, text and label CSVs).
//
// # Safety
// `dir` must be a valid C string and `out` a valid pointer.
enum EmdlotStatus emdlot_dataset_load(const char *dir, struct EmdlotDataset **out);

// Generates a synthetic dataset. `config_json` may be null for defaults.
//
// # Safety
// `config_json` must be null or a valid C string; `out` must be valid.
enum EmdlotStatus emdlot_dataset_synthesize(const char *config_json,
                                            uint64_t seed,
                                            struct EmdlotDataset **out);

// Writes a dataset directory.
//
// # Safety
// `ds` must be a live handle and `dir` a valid C string.
enum EmdlotStatus emdlot_dataset_save(const struct EmdlotDataset *ds, const char *dir);

// Number of samples; 0 for a null handle.
//
// # Safety
// `ds` must be null or a live handle.
size_t emdlot_dataset_len(const struct EmdlotDataset *ds);

// # Safety
// `ds` must be null or a handle from this library, freed once.
void emdlot_dataset_free(struct EmdlotDataset *ds);

// Runs the full pipeline (split, preprocessing, training, test
// evaluation). `config_json` may be null for defaults. When `report_json`
// is non-null it receives the run summary as JSON.
//
// # Safety
// Pointers must be valid; `report_json` may be null.
enum EmdlotStatus emdlot_train(const struct EmdlotDataset *ds,
                               const char *config_json,
                               struct EmdlotModel **out,
                               char **report_json);

// # Safety
// `path` must be a valid C string and `out` a valid pointer.
enum EmdlotStatus emdlot_model_load(const char *path, struct EmdlotModel **out);

// Writes the model as a checkpoint file.
//
// # Safety
// `model` must be a live handle and `path` a valid C string.
enum EmdlotStatus emdlot_model_save(const struct EmdlotModel *model, const char *path);

// # Safety
// `model` must be null or a handle from this library, freed once.
void emdlot_model_free(struct EmdlotModel *model);

// Evaluates on raw (unprocessed) data and returns the flat metric report.
// With `test_split_only` set, the model's own train/test split is
// re-derived from `ds` and only the test part is scored.
//
// # Safety
// Handles must be live and `report_json` a valid pointer.
enum EmdlotStatus emdlot_evaluate(const struct EmdlotModel *model,
                                  const struct EmdlotDataset *ds,
                                  bool test_split_only,
                                  char **report_json);

// Writes class probabilities (performing, extended, defaulted) row-major
// into `probs`, three per sample in dataset order. `written` receives the
// number of values needed; when `capacity` is smaller nothing is written
// and the call returns `BufferTooSmall`.
//
// # Safety
// `probs` must point to `capacity` writable doubles (or be null with
// `capacity` 0); `written` must be valid.
enum EmdlotStatus emdlot_predict(const struct EmdlotModel *model,
                                 const struct EmdlotDataset *ds,
                                 double *probs,
                                 size_t capacity,
                                 size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMDLOT_H */
