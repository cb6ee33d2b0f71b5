// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "data.hpp"
#include "model.hpp"
#include "tokenizer.hpp"

namespace uktr {

// Levenshtein distance over Unicode codepoints (no normalization applied).
int edit_distance(const std::string& a, const std::string& b);

// Corpus-level character error rate: sum of edit distances divided by the
// total reference codepoint count. Not a mean of per-sample ratios. Empty
// reference strings and length-mismatched lists are data errors.
double corpus_cer(const std::vector<std::string>& predictions,
                  const std::vector<std::string>& references);

// One benchmark row: a (dataset, decoder) pair aggregated over a manifest.
struct CerRow {
  std::string dataset;
  std::string modality;
  std::string decoder;  // "ctc" or "ar", with ":beamN" suffix when beamed
  int samples = 0;
  int64_t total_chars = 0;
  int64_t total_dist = 0;

  double cer() const {
    return total_chars == 0 ? 0.0
                            : static_cast<double>(total_dist) / total_chars;
  }
};

// Recognizes every image in the manifest and aggregates distances against
// the manifest labels. The manifest must be non-empty.
CerRow evaluate_manifest(const Model& model, const Vocabulary& vocab,
                         const Manifest& manifest, const std::string& decoder,
                         int beam_width, const std::string& dataset_name);

// CSV with header: dataset,modality,decoder,samples,total_chars,total_dist,cer
std::string benchmark_csv(const std::vector<CerRow>& rows);

// One trained variant at one seed, evaluated per modality. A modality with
// an empty eval split reports cer = -1.
struct AblationResult {
  std::string variant;
  uint64_t seed = 0;
  double cer_document = -1.0;
  double cer_scene = -1.0;
  double cer_handwritten = -1.0;
};

// Trains every configured variant at every configured seed on the datasets
// under cfg.data (identical splits across variants) and evaluates with the
// configured ablation decoder. Artifacts (logs, checkpoints) go under
// out_dir/<variant>_s<seed>/.
std::vector<AblationResult> run_ablation(const RunConfig& cfg,
                                         const std::string& out_dir);

std::string ablation_csv(const std::vector<AblationResult>& results);

// Paired sign test helper: in how many seed pairings is `a` strictly below
// `b`? Lists must be aligned by seed.
int count_strictly_below(const std::vector<double>& a,
                         const std::vector<double>& b);

}  // namespace uktr
