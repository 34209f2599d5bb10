#ifndef JOINTSEG_H
#define JOINTSEG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by all entry points.
typedef enum JsegStatus {
  JSEG_STATUS_OK = 0,
  JSEG_STATUS_NULL_POINTER = 1,
  JSEG_STATUS_INVALID_UTF8 = 2,
  JSEG_STATUS_INVALID_ARGUMENT = 3,
  JSEG_STATUS_IO = 4,
  // Unreadable checkpoint, index or corpus file.
  JSEG_STATUS_FORMAT = 5,
  // Models that cannot be combined, or a checkpoint of the wrong kind.
  JSEG_STATUS_INCOMPATIBLE = 6,
  // Input the models cannot process, such as characters past their limits.
  JSEG_STATUS_INPUT = 7,
  JSEG_STATUS_PANIC = 8,
} JsegStatus;

// A knowledge corpus with its n-gram index.
typedef struct JsegKnowledge JsegKnowledge;

// Tagger, fusion model and knowledge corpus ready for prediction.
typedef struct JsegPipeline JsegPipeline;

// A loaded tagger checkpoint.
typedef struct JsegTagger JsegTagger;

// Sampling settings for [`jseg_pipeline_load`].
typedef struct JsegOptions {
  // Dropout samples per sentence.
  uint32_t samples;
  // Knowledge sentences retrieved per uncertain component.
  uint32_t top_m;
  uint64_t seed;
} JsegOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a
// successful one. The pointer stays valid until the next call on the thread.
const char *jseg_last_error(void);

// Library version as a static NUL-terminated string.
const char *jseg_version(void);

// Default sampling settings: 8 samples, 1 knowledge sentence, seed 42.
struct JsegOptions jseg_default_options(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must be null or a string obtained from this library that has not
// been freed.
void jseg_string_free(char *s);

// Loads a tagger checkpoint.
//
// # Safety
// `path` must be a valid C string and `out` a writable pointer.
enum JsegStatus jseg_tagger_load(const char *path, struct JsegTagger **out);

// Tags one sentence with the tagger alone.
//
// # Safety
// `tagger` must come from [`jseg_tagger_load`], `text` must be a valid C
// string and `out` a writable pointer.
enum JsegStatus jseg_tagger_predict(const struct JsegTagger *tagger, const char *text, char **out);

// # Safety
// `tagger` must be null or a live handle from [`jseg_tagger_load`].
void jseg_tagger_free(struct JsegTagger *tagger);

// Loads a knowledge index written by `jointseg index build`.
//
// # Safety
// `path` must be a valid C string and `out` a writable pointer.
enum JsegStatus jseg_knowledge_load_index(const char *path, struct JsegKnowledge **out);

// Builds a knowledge corpus from a text file with one sentence per line.
//
// # Safety
// `path` must be a valid C string and `out` a writable pointer.
enum JsegStatus jseg_knowledge_from_text(const char *path,
                                         size_t max_ngram,
                                         struct JsegKnowledge **out);

// Number of sentences in the corpus, or 0 for a null handle.
//
// # Safety
// `knowledge` must be null or a live knowledge handle.
size_t jseg_knowledge_len(const struct JsegKnowledge *knowledge);

// # Safety
// `knowledge` must be null or a live knowledge handle.
void jseg_knowledge_free(struct JsegKnowledge *knowledge);

// Loads both checkpoints and copies `knowledge` into a new pipeline. The
// knowledge handle may be freed afterwards. A null `options` selects
// [`jseg_default_options`].
//
// # Safety
// Paths must be valid C strings, `knowledge` a live handle, `options` null
// or readable, and `out` a writable pointer.
enum JsegStatus jseg_pipeline_load(const char *se_path,
                                   const char *kf_path,
                                   const struct JsegKnowledge *knowledge,
                                   const struct JsegOptions *options,
                                   struct JsegPipeline **out);

// Tags one sentence with the full pipeline. `index` is the sentence's
// position in the caller's run; together with the seed it fixes the
// dropout masks, so equal inputs give equal outputs.
//
// # Safety
// `pipeline` must come from [`jseg_pipeline_load`], `text` must be a valid
// C string and `out` a writable pointer.
enum JsegStatus jseg_pipeline_predict(const struct JsegPipeline *pipeline,
                                      const char *text,
                                      size_t index,
                                      char **out);

// # Safety
// `pipeline` must be null or a live handle from [`jseg_pipeline_load`].
void jseg_pipeline_free(struct JsegPipeline *pipeline);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JOINTSEG_H */
