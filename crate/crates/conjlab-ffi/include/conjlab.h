/* C interface to the conjlab numerical laboratory. */

#ifndef CONJLAB_H
#define CONJLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes of every C-ABI call.
 */
typedef enum ConjlabStatus {
  CONJLAB_STATUS_OK = 0,
  CONJLAB_STATUS_NULL_ARGUMENT = 1,
  CONJLAB_STATUS_INVALID_UTF8 = 2,
  CONJLAB_STATUS_UNKNOWN_SCENARIO = 3,
  CONJLAB_STATUS_PARSE_ERROR = 4,
  CONJLAB_STATUS_NUMERICS_ERROR = 5,
  CONJLAB_STATUS_IO_ERROR = 6,
  CONJLAB_STATUS_INDEX_OUT_OF_RANGE = 7,
  CONJLAB_STATUS_PANIC = 8,
} ConjlabStatus;

/**
 * Verdict classification of the primary sign variant.
 */
typedef enum ConjlabClassification {
  CONJLAB_CLASSIFICATION_BIFURCATING = 0,
  CONJLAB_CLASSIFICATION_CERTIFIED_NON_BIFURCATING = 1,
  CONJLAB_CLASSIFICATION_UNDECIDED = 2,
} ConjlabClassification;

/**
 * Opaque handle to a completed scenario run.
 */
typedef struct ConjlabRun ConjlabRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string; do not free.
 */
const char *conjlab_version(void);

/**
 * Message of the most recent error on this thread, or NULL. Do not free;
 * the pointer stays valid until the next failing call on the same thread.
 */
const char *conjlab_last_error_message(void);

/**
 * Runs a scenario (built-in id or scenario-file path).
 *
 * `sign_variant` selects the primary typesetting: "derived", "printed", or
 * NULL for the default. `tol` maps onto the integrator tolerances when
 * positive; pass 0 or a negative value for the defaults. On success the new
 * handle is stored in `out_run`.
 *
 * # Safety
 * `id` must be a valid NUL-terminated string and `out_run` a valid pointer.
 */
enum ConjlabStatus conjlab_run_new(const char *id,
                                   const char *sign_variant,
                                   double tol,
                                   struct ConjlabRun **out_run);

/**
 * Frees a run handle. NULL is a no-op.
 *
 * # Safety
 * `run` must come from `conjlab_run_new` and not be freed twice.
 */
void conjlab_run_free(struct ConjlabRun *run);

/**
 * Copies the JSON report into a newly allocated string (free with
 * `conjlab_string_free`).
 *
 * # Safety
 * `run` must be a live handle and `out_json` a valid pointer.
 */
enum ConjlabStatus conjlab_run_report_json(const struct ConjlabRun *run, char **out_json);

/**
 * Frees a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void conjlab_string_free(char *s);

/**
 * Number of conjugate points in the run's primary picture.
 *
 * # Safety
 * `run` must be a live handle and `out_count` a valid pointer.
 */
enum ConjlabStatus conjlab_run_conjugate_count(const struct ConjlabRun *run, uintptr_t *out_count);

/**
 * Reads one conjugate point: parameter, kernel multiplicity and position.
 * Output pointers may be NULL to skip a field; `out_position` must have room
 * for three doubles.
 *
 * # Safety
 * `run` must be a live handle; non-NULL out pointers must be valid.
 */
enum ConjlabStatus conjlab_run_conjugate(const struct ConjlabRun *run,
                                         uintptr_t index,
                                         double *out_t_star,
                                         unsigned int *out_multiplicity,
                                         double *out_position);

/**
 * Classification of the `index`-th verdict item of the primary variant.
 *
 * # Safety
 * `run` must be a live handle and `out_classification` a valid pointer.
 */
enum ConjlabStatus conjlab_run_classification(const struct ConjlabRun *run,
                                              uintptr_t index,
                                              enum ConjlabClassification *out_classification);

/**
 * Writes the report files into a directory: `format` is "json" or
 * "csv-bundle".
 *
 * # Safety
 * `run`, `dir` and `format` must be valid.
 */
enum ConjlabStatus conjlab_run_emit(const struct ConjlabRun *run,
                                    const char *dir,
                                    const char *format);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONJLAB_H */
