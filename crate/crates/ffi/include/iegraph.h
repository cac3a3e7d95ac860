#ifndef IEGRAPH_H
#define IEGRAPH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum IegStatus {
  IEG_STATUS_OK = 0,
  IEG_STATUS_NULL_POINTER = 1,
  IEG_STATUS_INVALID_UTF8 = 2,
  IEG_STATUS_IO = 3,
  IEG_STATUS_INVALID_INPUT = 4,
  IEG_STATUS_MODEL = 5,
  IEG_STATUS_PANIC = 6,
} IegStatus;

// A loaded, validated corpus.
typedef struct IegCorpus IegCorpus;

// A trained model with the embedding provider it was trained with.
typedef struct IegModel IegModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *ieg_last_error(void);

// Library version as a static string.
const char *ieg_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void ieg_string_free(char *s);

// Parses and validates a corpus JSON document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum IegStatus ieg_corpus_from_json(const char *json, struct IegCorpus **out);

// Reads a corpus file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum IegStatus ieg_corpus_load(const char *path, struct IegCorpus **out);

// # Safety
// `corpus` must come from this library and not be freed twice. Null is ignored.
void ieg_corpus_free(struct IegCorpus *corpus);

// Number of sentences.
//
// # Safety
// `corpus` must be a live handle and `out` a valid pointer.
enum IegStatus ieg_corpus_len(const struct IegCorpus *corpus, size_t *out);

// Canonical corpus JSON.
//
// # Safety
// `corpus` must be a live handle and `out` a valid pointer.
enum IegStatus ieg_corpus_to_json(const struct IegCorpus *corpus, char **out);

// The corpus as a graph document (JSON).
//
// # Safety
// `corpus` must be a live handle and `out` a valid pointer.
enum IegStatus ieg_corpus_graphs_json(const struct IegCorpus *corpus, char **out);

// Corpus statistics (JSON object).
//
// # Safety
// `corpus` must be a live handle and `out` a valid pointer.
enum IegStatus ieg_corpus_stats_json(const struct IegCorpus *corpus, char **out);

// Nesting counts (JSON object).
//
// # Safety
// `corpus` must be a live handle and `out` a valid pointer.
enum IegStatus ieg_corpus_nesting_json(const struct IegCorpus *corpus, char **out);

// Scores `pred` against `gold` (JSON report).
//
// # Safety
// Both corpora must be live handles and `out` a valid pointer.
enum IegStatus ieg_score_json(const struct IegCorpus *pred,
                              const struct IegCorpus *gold,
                              char **out);

// Loads a checkpoint directory together with its embedding provider.
//
// # Safety
// `dir` must be a NUL-terminated string and `out` a valid pointer.
enum IegStatus ieg_model_load(const char *dir, struct IegModel **out);

// # Safety
// `model` must come from this library and not be freed twice. Null is ignored.
void ieg_model_free(struct IegModel *model);

// Parses every sentence of `corpus` into a new corpus handle.
//
// # Safety
// `model` and `corpus` must be live handles and `out` a valid pointer.
enum IegStatus ieg_model_predict(const struct IegModel *model,
                                 const struct IegCorpus *corpus,
                                 struct IegCorpus **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IEGRAPH_H */
