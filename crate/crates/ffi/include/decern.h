/* C interface of the decern active-learning selection engine. */

#ifndef DECERN_H
#define DECERN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a C API call.
 */
typedef enum DecernStatus {
  DECERN_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  DECERN_STATUS_NULL_ARGUMENT = 1,
  /**
   * Invalid argument or malformed input value.
   */
  DECERN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Underlying I/O failure.
   */
  DECERN_STATUS_IO_ERROR = 3,
  /**
   * A data or checkpoint file does not match its binary format.
   */
  DECERN_STATUS_FORMAT_ERROR = 4,
  /**
   * The experiment cannot proceed (budget exceeds the pool).
   */
  DECERN_STATUS_INFEASIBLE = 5,
  /**
   * report.json schema or version mismatch.
   */
  DECERN_STATUS_SCHEMA_ERROR = 6,
} DecernStatus;

/**
 * Opaque dataset handle.
 */
typedef struct DecernDataset DecernDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Engine version as a static NUL-terminated string.
 */
const char *decern_version(void);

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *decern_last_error_message(void);

/**
 * Load a dataset file (.dcrn binary or .csv). A `<stem>.test.dcrn`
 * sibling becomes the evaluation split when present.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 * On `Ok` the caller owns the handle and must release it with
 * [`decern_dataset_free`].
 */
enum DecernStatus decern_dataset_load(const char *path, struct DecernDataset **out);

/**
 * Generate the synthetic benchmark dataset in memory.
 *
 * # Safety
 * `out` must be a valid pointer. On `Ok` the caller owns the handle and
 * must release it with [`decern_dataset_free`].
 */
enum DecernStatus decern_dataset_generate(uint32_t classes,
                                          uint32_t per_class,
                                          uint32_t dim,
                                          double center_spread,
                                          double noise,
                                          double overlap,
                                          uint64_t seed,
                                          struct DecernDataset **out);

/**
 * Release a dataset handle. Null is a no-op.
 *
 * # Safety
 * `ds` must be null or a handle produced by this library that has not
 * been freed already.
 */
void decern_dataset_free(struct DecernDataset *ds);

/**
 * Fetch dataset dimensions. Output pointers may be null when the caller
 * does not need a value.
 *
 * # Safety
 * `ds` must be a live handle from this library.
 */
enum DecernStatus decern_dataset_info(const struct DecernDataset *ds,
                                      uint64_t *out_samples,
                                      uint32_t *out_dim,
                                      uint32_t *out_classes);

/**
 * One-shot selection: train a fresh linear softmax head on the labeled
 * indices, then pick `budget` unlabeled samples with the named strategy
 * (`decern`, `random`, `kmeans`, `coreset`, `entropy`, `margin`).
 *
 * `mask_fraction` and `xi` parameterize the `decern` strategy (pass 0.1
 * and 0.8 for the defaults); `train_epochs` of 0 selects the default
 * epoch count. Selected indices are written ascending into
 * `out_indices`, which must hold at least `budget` entries.
 *
 * # Safety
 * `ds` must be a live handle; `strategy` a NUL-terminated string;
 * `labeled` must point to `labeled_len` readable entries; `out_indices`
 * must point to at least `budget` writable entries.
 */
enum DecernStatus decern_select(const struct DecernDataset *ds,
                                const char *strategy,
                                const uint64_t *labeled,
                                uint64_t labeled_len,
                                uint64_t budget,
                                uint64_t seed,
                                double mask_fraction,
                                double xi,
                                uint32_t train_epochs,
                                uint64_t *out_indices);

/**
 * Run a full experiment from a config file, writing report.json and
 * curves.csv exactly like `decern run`. `output_dir` overrides the
 * config's `output.dir` when non-null.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `output_dir` must be
 * null or NUL-terminated.
 */
enum DecernStatus decern_run_experiment(const char *config_path, const char *output_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DECERN_H */
