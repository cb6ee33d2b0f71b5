// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "decoders.hpp"
#include "encoder.hpp"
#include "mafs.hpp"
#include "param_store.hpp"
#include "tensor.hpp"

namespace uktr {

// Everything downstream decoders consume for one image.
struct Features {
  Tensor u_seq;    // [h*w, d] sequence form; decoder cross-attention memory
  Tensor u1d_seq;  // [w, d] width sequence feeding the CTC head
  Tensor router;   // [1, n] blend weights; undefined when the block is off
  int h = 0;
  int w = 0;
};

// Per-section parameter totals for reporting and reconciliation.
struct ParamReport {
  int64_t backbone = 0;
  int64_t tr_encoder = 0;
  int64_t mafs = 0;
  int64_t ar_decoder = 0;
  int64_t ctc_head = 0;
  int64_t total = 0;
};

// Analytic multiply-accumulate counts for one forward pass (conv and matmul
// terms only; normalization and activations are ignored, as is conventional).
struct MacReport {
  double backbone = 0;
  double tr_encoder = 0;
  double mafs = 0;
  double ctc_head = 0;
  double total = 0;  // sum of the above; AR decoding cost depends on length
};

// The full recognizer: CNN+Transformer encoder, optional feature-selection
// block, CTC head and autoregressive decoder over one parameter store.
class Model {
 public:
  Model(const RunConfig& cfg, int vocab_size, ParamStore& ps);

  // Runs the encoder chain. Dropout fires only when rng != nullptr.
  Features encode(const Tensor& image, Rng* rng) const;

  Tensor ctc_log_probs(const Features& f) const;  // [w, vocab]
  // -log p(target); data error when the target cannot fit in w frames.
  Tensor ctc_loss(const Features& f, const std::vector<int>& target) const;
  // Teacher-forced cross-entropy; when mask_rng is non-null the context is
  // corrupted with mask tokens at the configured ratio.
  Tensor ar_loss(const Features& f, const std::vector<int>& target,
                 Rng* dropout_rng, Rng* mask_rng) const;

  // decoder: "ctc" or "ar"; beam_width 1 is greedy.
  DecodeResult recognize(const Tensor& image, const std::string& decoder,
                         int beam_width) const;

  // Router weights for one image in evaluation mode; undefined when off.
  Tensor router_weights(const Tensor& image) const;

  // Parameters <-> checkpoint entries named "param/<name>". Loading demands
  // an exact match of names and shapes.
  void save_params(Checkpoint& ck) const;
  void load_params(const Checkpoint& ck);

  ParamReport param_report() const;
  MacReport mac_report(int width) const;  // at the configured input height

  int vocab() const { return vocab_; }
  bool mafs_enabled() const { return mafs_.has_value(); }
  const RunConfig& config() const { return cfg_; }
  ParamStore& params() { return *ps_; }

 private:
  RunConfig cfg_;
  int vocab_ = 0;
  ParamStore* ps_;
  Encoder encoder_;
  std::optional<Mafs> mafs_;
  CtcHead ctc_;
  ArDecoder ar_;
};

}  // namespace uktr
