#ifndef VISEME_DECODE_H
#define VISEME_DECODE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Decoding scenario: known or unknown word boundaries.
 */
typedef enum VdScenario {
  VD_SCENARIO_SEGMENTED = 1,
  VD_SCENARIO_UNSEGMENTED = 2,
} VdScenario;

/**
 * Result codes.
 */
typedef enum VdStatus {
  VD_STATUS_OK = 0,
  VD_STATUS_NULL_POINTER = 1,
  VD_STATUS_INVALID_UTF8 = 2,
  VD_STATUS_IO = 3,
  VD_STATUS_PARSE = 4,
  VD_STATUS_OUT_OF_VOCABULARY = 5,
  VD_STATUS_NO_SEGMENTATION = 6,
  VD_STATUS_CAP_EXCEEDED = 7,
  VD_STATUS_SCORER = 8,
  VD_STATUS_INVALID_ARGUMENT = 9,
  VD_STATUS_PANIC = 10,
} VdStatus;

/**
 * Opaque engine handle: index plus an n-gram scorer.
 */
typedef struct VdEngine VdEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Build an engine from a pronouncing dictionary, optional rank and map
 * files, and a text corpus for the trigram scorer.
 *
 * # Safety
 * Path arguments must be NUL-terminated strings or null where optional;
 * `out` must be a valid pointer.
 */
enum VdStatus vd_engine_new(const char *dict_path,
                            const char *ranks_path,
                            const char *map_path,
                            const char *lm_corpus_path,
                            struct VdEngine **out);

/**
 * Load an engine from a prebuilt index artifact.
 *
 * # Safety
 * As for [`vd_engine_new`].
 */
enum VdStatus vd_engine_from_artifact(const char *artifact_path,
                                      const char *lm_corpus_path,
                                      struct VdEngine **out);

/**
 * Release an engine. Null is ignored.
 *
 * # Safety
 * `engine` must come from this library and not be used afterwards.
 */
void vd_engine_free(struct VdEngine *engine);

/**
 * Convert text to visemes: `a b | c d` clusters for scenario 1, a flat
 * stream for scenario 2.
 *
 * # Safety
 * `engine` must be live; `text` NUL-terminated; `out` valid.
 */
enum VdStatus vd_to_visemes(const struct VdEngine *engine,
                            const char *text,
                            unsigned int scenario_code,
                            char **out);

/**
 * Decode one viseme line. `beam_width` 0 selects the default.
 *
 * # Safety
 * `engine` must be live; `visemes` NUL-terminated; out-pointers valid
 * (`out_perplexity` may be null).
 */
enum VdStatus vd_decode(const struct VdEngine *engine,
                        const char *visemes,
                        unsigned int scenario_code,
                        unsigned int beam_width,
                        char **out_sentence,
                        double *out_perplexity);

/**
 * Perplexity of a sentence under the engine's scorer.
 *
 * # Safety
 * `engine` must be live; `sentence` NUL-terminated; `out` valid.
 */
enum VdStatus vd_perplexity(const struct VdEngine *engine, const char *sentence, double *out);

/**
 * Word error rate of `hypothesis` against `reference`.
 *
 * # Safety
 * Both strings NUL-terminated; `out` valid.
 */
enum VdStatus vd_word_error_rate(const char *reference, const char *hypothesis, double *out);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void vd_string_free(char *s);

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into this library on the same thread.
 */
const char *vd_last_error_message(void);

/**
 * Library version string (static).
 */
const char *vd_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VISEME_DECODE_H */
