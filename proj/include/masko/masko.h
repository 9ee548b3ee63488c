/* Copyright 2026 The Masko Authors
 * SPDX-License-Identifier: Apache-2.0 */

#ifndef MASKO_MASKO_H_
#define MASKO_MASKO_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MASKO_API __declspec(dllexport)
#else
#define MASKO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes for the command-line tool. */
typedef enum masko_status {
  MASKO_OK = 0,
  MASKO_ERR_INTERNAL = 1,
  MASKO_ERR_INPUT = 2,      /* bad arguments, config or data */
  MASKO_ERR_DIVERGENCE = 3, /* non-finite training loss */
  MASKO_ERR_CORRUPT = 4     /* unreadable or inconsistent checkpoint */
} masko_status;

typedef struct masko_corpus masko_corpus;
typedef struct masko_model masko_model;

/* Strings returned through `char**` are owned by the caller. */
MASKO_API void masko_string_free(char* s);

/* Message of the last failed call on this thread; "" after a success. */
MASKO_API const char* masko_last_error(void);

MASKO_API const char* masko_version(void);

/* Non-fatal diagnostics. NULL restores printing to stderr. */
typedef void (*masko_warning_fn)(const char* message, void* user);
MASKO_API void masko_set_warning_callback(masko_warning_fn fn, void* user);

/* Run configuration: defaults, and `base` with `overrides` applied on top.
 * Either argument may be NULL. Unknown keys are rejected. */
MASKO_API masko_status masko_config_defaults(char** out_json);
MASKO_API masko_status masko_config_resolve(const char* base_json, const char* overrides_json, char** out_json);

/* Writes corpus.jsonl, catalog.json (only with references > 0) and
 * manifest.json into `out_dir`, which is created if needed. The manifest is
 * also returned. */
MASKO_API masko_status masko_synthesize(const char* synthetic_config_json, const char* out_dir,
                                        char** out_manifest_json);

/* `catalog_path` may be NULL. `t_max` bounds the encoded catalog content. */
MASKO_API masko_status masko_corpus_load(const char* corpus_path, const char* catalog_path, size_t t_max,
                                         masko_corpus** out);
MASKO_API void masko_corpus_free(masko_corpus* corpus);
MASKO_API masko_status masko_corpus_size(const masko_corpus* corpus, size_t* out_dialogues);
MASKO_API masko_status masko_corpus_stats(const masko_corpus* corpus, char** out_json);

/* Pretrains on the train split and reports held-out pretraining metrics.
 * The objective f requires a catalog on the corpus; without one the model
 * runs with knowledge off. */
MASKO_API masko_status masko_pretrain(const masko_corpus* corpus, const char* config_json, masko_model** out_model,
                                      char** out_metrics_json);

/* task is "classify" or "generate". `init` NULL means vanilla; otherwise a
 * pretraining model whose encoder (and decoder, for generate) is copied.
 * With `init`, its config is the base that config_json is applied to. */
MASKO_API masko_status masko_finetune(const masko_corpus* corpus, const char* task, const masko_model* init,
                                      const char* config_json, masko_model** out_model, char** out_report_json);

/* Report on the held-out split, or on every dialogue when `all` is nonzero.
 * The model is not modified. */
MASKO_API masko_status masko_evaluate(masko_model* model, const masko_corpus* corpus, int all, char** out_report_json);

MASKO_API masko_status masko_model_load(const char* path, masko_model** out);
MASKO_API masko_status masko_model_save(const masko_model* model, const char* path);
/* {"kind", "init", "config", "parameters", ...} */
MASKO_API masko_status masko_model_info(const masko_model* model, char** out_json);
MASKO_API void masko_model_free(masko_model* model);

#ifdef __cplusplus
}
#endif

#endif /* MASKO_MASKO_H_ */
