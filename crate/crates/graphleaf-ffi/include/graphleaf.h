#ifndef GRAPHLEAF_H
#define GRAPHLEAF_H

/* This file is generated by cbindgen from graphleaf-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define GRAPHLEAF_STATUS_OK 0

#define GRAPHLEAF_STATUS_USAGE 1

#define GRAPHLEAF_STATUS_DATA 2

#define GRAPHLEAF_STATUS_NUMERIC 3

// Opaque handle to a loaded checkpoint plus its run configuration.
typedef struct GraphleafModel GraphleafModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *graphleaf_version(void);

// Message of the last failure on this thread. Never null; empty when no
// failure happened. Valid until the next failing call on this thread.
const char *graphleaf_last_error(void);

// Release a string returned by this library.
//
// # Safety
// `s` must be a pointer previously returned by a graphleaf function
// that documents this contract, or null.
void graphleaf_string_free(char *s);

// Scan `data_dir` (one subdirectory per class), segment every image and
// write `<out_prefix>.train.ragc` / `<out_prefix>.test.ragc` plus the
// split manifests. `segments` of 0 means the default (50); `split` is
// the train fraction in (0, 1).
//
// # Safety
// `data_dir` and `out_prefix` must be NUL-terminated strings.
int32_t graphleaf_preprocess(const char *data_dir,
                             const char *out_prefix,
                             uint32_t segments,
                             double split,
                             uint64_t seed);

// Train a model from a cache pair and write the run artifacts
// (config.json, final.ckpt, best.ckpt, curves.csv, report.json,
// confusion.csv) into `out_dir`. Zero-valued numeric arguments select
// the defaults: epochs 100, batch 32, hidden 512, lr 0.001. `variant`
// is "gcn", "gat" or "hybrid".
//
// # Safety
// `cache_prefix`, `variant` and `out_dir` must be NUL-terminated strings.
int32_t graphleaf_train(const char *cache_prefix,
                        const char *variant,
                        uint32_t epochs,
                        uint32_t batch,
                        double lr,
                        double edge_aug_p,
                        uint32_t hidden,
                        uint64_t seed,
                        const char *out_dir);

// Load a checkpoint. `config_path` may be null, in which case the
// sibling `config.json` of the checkpoint is used. Returns null on
// failure (see `graphleaf_last_error`).
//
// # Safety
// `checkpoint_path` must be a NUL-terminated string; `config_path` must
// be null or a NUL-terminated string.
struct GraphleafModel *graphleaf_model_load(const char *checkpoint_path, const char *config_path);

// # Safety
// `model` must be a pointer from `graphleaf_model_load`, or null.
void graphleaf_model_free(struct GraphleafModel *model);

// Number of classes the model predicts; 0 when `model` is null.
//
// # Safety
// `model` must be a pointer from `graphleaf_model_load`, or null.
uint32_t graphleaf_model_num_classes(const struct GraphleafModel *model);

// Class name at `index` as a caller-owned string (release with
// `graphleaf_string_free`), or null when out of range.
//
// # Safety
// `model` must be a pointer from `graphleaf_model_load`, or null.
char *graphleaf_model_class_name(const struct GraphleafModel *model, uint32_t index);

// Classify one image. Writes the class probabilities into
// `probabilities_out` (capacity `probabilities_len`, which must be at
// least the class count) and the winning class index into
// `class_index_out`. Either output pointer may be null to skip it.
//
// # Safety
// `model` must come from `graphleaf_model_load`; `image_path` must be a
// NUL-terminated string; `probabilities_out` must point to at least
// `probabilities_len` floats when non-null.
int32_t graphleaf_model_predict(const struct GraphleafModel *model,
                                const char *image_path,
                                float *probabilities_out,
                                size_t probabilities_len,
                                uint32_t *class_index_out);

// Evaluate the model against a `.ragc` cache. On success, stores a
// caller-owned JSON report string in `report_json_out` (release with
// `graphleaf_string_free`).
//
// # Safety
// `model` must come from `graphleaf_model_load`; `cache_path` must be a
// NUL-terminated string; `report_json_out` must be a valid pointer when
// non-null.
int32_t graphleaf_model_evaluate(const struct GraphleafModel *model,
                                 const char *cache_path,
                                 char **report_json_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRAPHLEAF_H */
