/* Copyright 2026 The UKTR Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the UKTR text recognizer. All functions return a status
 * code; uktr_last_error() describes the most recent failure on the calling
 * thread. Strings and arrays returned through out-parameters are allocated
 * by the library and released with uktr_free_string / uktr_free_ids.
 * Handles are opaque and freed with their matching *_free function.
 */

#ifndef UKTR_UKTR_H_
#define UKTR_UKTR_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum uktr_status {
  UKTR_OK = 0,
  UKTR_USAGE = 1,   /* invalid arguments or configuration */
  UKTR_DATA = 2,    /* missing/corrupt files, shape mismatches */
  UKTR_NUMERIC = 3, /* non-finite loss during training */
} uktr_status;

/* Message for the last failure on this thread; empty string if none. */
const char* uktr_last_error(void);

void uktr_free_string(char* s);
void uktr_free_ids(int* ids);

/* ---- batch operations driven by a run-config file ---- */

/* Generates the synthetic corpus described by the config's synth/data
 * sections (images + manifests under data.root). */
uktr_status uktr_gen_data(const char* config_path);

/* Builds the cluster vocabulary from the three training manifests and
 * writes it to data.root/<data.vocab>. */
uktr_status uktr_build_vocab(const char* config_path);

/* Runs one training phase ("general" or "adapt"), writing train_log.csv,
 * per-epoch checkpoints, latest.ckpt, and the effective config under
 * out_dir. `base_ckpt` (nullable) warm-starts the parameters only;
 * `resume_ckpt` (nullable) restores a full mid-phase training state of the
 * same phase. The adapt phase requires one of the two. */
uktr_status uktr_train(const char* config_path, const char* phase,
                       const char* base_ckpt, const char* resume_ckpt,
                       const char* out_dir);

/* Evaluates the checkpoint on every non-empty eval manifest with each
 * decoder in the comma-separated `decoders` list ("ctc,ar"); returns the
 * benchmark CSV. */
uktr_status uktr_benchmark(const char* config_path, const char* ckpt,
                           const char* decoders, int beam_width,
                           char** out_csv);

/* Trains every configured ablation variant at every configured seed and
 * returns the result CSV. Artifacts land under out_dir. */
uktr_status uktr_ablate(const char* config_path, const char* out_dir,
                        char** out_csv);

/* Per-image router weights over a manifest as CSV (path,r_1..r_n). */
uktr_status uktr_inspect_router(const char* config_path, const char* ckpt,
                                const char* manifest_path, char** out_csv);

/* Human-readable parameter and per-forward multiply-accumulate report for
 * the configured model at the given input width. */
uktr_status uktr_model_info(const char* config_path, int width,
                            char** out_text);

/* ---- vocabulary handle ---- */

typedef struct uktr_vocab uktr_vocab;

uktr_status uktr_vocab_load(const char* path, uktr_vocab** out);
void uktr_vocab_free(uktr_vocab* v);
int uktr_vocab_size(const uktr_vocab* v);

/* Cluster ids for a UTF-8 line (unknown clusters map to the unk id). */
uktr_status uktr_vocab_encode(const uktr_vocab* v, const char* text,
                              int** out_ids, size_t* out_len);
/* Inverse of encode; reserved ids render as empty strings. */
uktr_status uktr_vocab_decode(const uktr_vocab* v, const int* ids, size_t len,
                              char** out_text);

/* ---- manifest handle ---- */

typedef struct uktr_manifest uktr_manifest;

uktr_status uktr_manifest_load(const char* path, uktr_manifest** out);
void uktr_manifest_free(uktr_manifest* m);
size_t uktr_manifest_size(const uktr_manifest* m);
/* Borrowed pointers, valid until the handle is freed. */
const char* uktr_manifest_image_path(const uktr_manifest* m, size_t i);
const char* uktr_manifest_label(const uktr_manifest* m, size_t i);

/* ---- recognizer handle ---- */

typedef struct uktr_recognizer uktr_recognizer;

/* Loads the model described by the config with weights from the checkpoint.
 * The vocabulary is read from data.root/<data.vocab>. */
uktr_status uktr_recognizer_open(const char* config_path, const char* ckpt,
                                 uktr_recognizer** out);
void uktr_recognizer_free(uktr_recognizer* r);

/* Recognizes one PNG. decoder is "ctc" or "ar"; beam_width 1 is greedy.
 * Optional out_score receives the decode log-probability score and
 * out_millis the wall time of the model call. */
uktr_status uktr_recognize_png(const uktr_recognizer* r, const char* png_path,
                               const char* decoder, int beam_width,
                               char** out_text, double* out_score,
                               double* out_millis);

/* Router weights for one PNG; fails when the model runs without the
 * feature-selection block. out_weights must hold uktr_router_n() values. */
int uktr_router_n(const uktr_recognizer* r); /* 0 when disabled */
uktr_status uktr_router_weights(const uktr_recognizer* r,
                                const char* png_path, double* out_weights);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* UKTR_UKTR_H_ */
