/* C interface to the modrec modulation-recognition toolkit. */

#ifndef MODREC_H
#define MODREC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Feature family selector for extraction.
 */
typedef enum ModrecFamily {
  ModrecFamilyHoc = 0,
  ModrecFamilyOs = 1,
  ModrecFamilyLp = 2,
  ModrecFamilyLpHoc = 3,
} ModrecFamily;

/**
 * Status code returned by every fallible function.
 */
typedef enum ModrecStatus {
  ModrecOk = 0,
  /**
   * A pointer argument was null or a value argument was out of range.
   */
  ModrecErrInvalidArg = 1,
  /**
   * File could not be read or written.
   */
  ModrecErrIo = 2,
  /**
   * File contents were not in the expected format.
   */
  ModrecErrFormat = 3,
  /**
   * The input data was degenerate (empty, non-finite, too short).
   */
  ModrecErrData = 4,
  /**
   * An internal invariant failed.
   */
  ModrecErrInternal = 5,
} ModrecStatus;

/**
 * Opaque handle to an (amplitude, phase) dictionary pair.
 */
typedef struct ModrecDict ModrecDict;

/**
 * Opaque handle to a trained classifier.
 */
typedef struct ModrecModel ModrecModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent error on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *modrec_last_error(void);

/**
 * Load an (amplitude, phase) dictionary pair from a directory containing
 * `amplitude.json` and `phase.json`.
 */
enum ModrecStatus modrec_dict_load(const char *dir, struct ModrecDict **out);

/**
 * Release a dictionary handle. Null is a no-op.
 */
void modrec_dict_free(struct ModrecDict *dict);

/**
 * Shingle length of a loaded dictionary.
 */
size_t modrec_dict_shingle_len(const struct ModrecDict *dict);

/**
 * Component count of a loaded dictionary.
 */
size_t modrec_dict_size(const struct ModrecDict *dict);

/**
 * Load a classifier from a `model.json` file (or a directory holding one).
 */
enum ModrecStatus modrec_model_load(const char *path, struct ModrecModel **out);

/**
 * Release a model handle. Null is a no-op.
 */
void modrec_model_free(struct ModrecModel *model);

/**
 * Feature dimension the model expects.
 */
size_t modrec_model_feature_dim(const struct ModrecModel *model);

/**
 * Number of classes the model distinguishes.
 */
size_t modrec_model_num_classes(const struct ModrecModel *model);

/**
 * Name of class `index`; null if out of range. The pointer stays valid
 * for the lifetime of the model handle.
 */
const char *modrec_model_class_name(const struct ModrecModel *model, size_t index);

/**
 * Feature family the model was trained on.
 */
enum ModrecFamily modrec_model_family(const struct ModrecModel *model);

/**
 * Feature dimension produced by `family` (dictionary required for the
 * local families; pass null otherwise). Zero signals an error.
 */
size_t modrec_feature_dim(enum ModrecFamily family, const struct ModrecDict *dict);

/**
 * Extract features from `n_samples` interleaved f32 I/Q pairs. `out` must
 * hold `modrec_feature_dim(family, dict)` doubles.
 */
enum ModrecStatus modrec_extract(const float *iq,
                                 size_t n_samples,
                                 enum ModrecFamily family,
                                 const struct ModrecDict *dict,
                                 double *out,
                                 size_t out_len);

/**
 * Classify a pre-extracted feature vector; writes the winning class index
 * (see `modrec_model_class_name`). Optionally writes per-class decision
 * values into `decisions` (length `modrec_model_num_classes`, or null).
 */
enum ModrecStatus modrec_classify(const struct ModrecModel *model,
                                  const double *features,
                                  size_t len,
                                  size_t *class_index,
                                  double *decisions);

/**
 * Extract and classify raw I/Q in one call. `dict` may be null for models
 * trained on global features.
 */
enum ModrecStatus modrec_classify_iq(const struct ModrecModel *model,
                                     const struct ModrecDict *dict,
                                     const float *iq,
                                     size_t n_samples,
                                     size_t *class_index);

/**
 * Simulate one instance into `out` as interleaved f32 I/Q pairs
 * (`2 * n_samples` floats). `modulation` is e.g. "QPSK", "16QAM".
 */
enum ModrecStatus modrec_simulate(const char *modulation,
                                  double snr_db,
                                  double overlap_pct,
                                  size_t missing_symbols,
                                  double rotation_rad,
                                  size_t n_samples,
                                  uint64_t seed,
                                  float *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MODREC_H */
