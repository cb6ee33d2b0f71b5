// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "config.hpp"
#include "ops.hpp"
#include "param_store.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace uktr {

// Output of any decoding path. `ids` never contain reserved ids; `score` is
// the log-probability under the producing decoder.
struct DecodeResult {
  std::vector<int> ids;
  double score = 0.0;
  std::string mode;  // ctc-greedy | ctc-beam | ar-greedy | ar-beam
};

// Non-autoregressive head: one linear projection of the width-collapsed
// feature sequence to per-frame class scores, trained with CTC.
class CtcHead {
 public:
  // Registers "ctc.w"/"ctc.b" in `ps`.
  CtcHead(int d, int vocab, ParamStore& ps);

  Tensor logits(const Tensor& u1d_seq) const;  // [w,d] -> [w,c]

  // -log p(target) under time-major log-probs, blank id 0.
  static Tensor loss(const Tensor& log_probs, const std::vector<int>& target);

  // Per-frame argmax over {blank} + content ids, merge adjacent repeats,
  // drop blanks. `reserved_count` ids at the low end (excluding blank) are
  // never emitted. Score: log-probability of the argmax frame path.
  static DecodeResult greedy(const Tensor& log_probs, int reserved_count);

  // Prefix beam search over labelings; prefixes ranked by total (unscaled)
  // log-probability, so a wide enough beam returns the exact best labeling.
  // beam_width 1 delegates to greedy.
  static DecodeResult beam(const Tensor& log_probs, int beam_width,
                           int reserved_count);

 private:
  int d_ = 0;
  int vocab_ = 0;
  ParamStore* ps_;
};

// Autoregressive Transformer decoder over the 2-D feature sequence. Pre-LN
// blocks: masked self-attention, cross-attention into the encoder memory,
// then a feed-forward layer. Teacher-forced training consumes a bos-led
// context; generation feeds the model its own output one token at a time.
class ArDecoder {
 public:
  ArDecoder(const DecoderConfig& cfg, int d, int vocab, ParamStore& ps);

  // context: token ids starting with bos; memory: [S,d] encoder sequence.
  // Returns logits [len(context), vocab]. Dropout fires only when rng != 0.
  Tensor forward(const std::vector<int>& context, const Tensor& memory,
                 Rng* rng) const;

  // Mean cross-entropy of `targets` under forward(context); positions whose
  // target is pad are excluded. Sizes must match; targets end with eos.
  Tensor loss(const std::vector<int>& context, const std::vector<int>& targets,
              const Tensor& memory, Rng* rng) const;

  // Replaces round(ratio * len(context)) of the non-bos positions (capped at
  // all of them) with the mask token. Deterministic under a fixed rng state.
  static std::vector<int> mask_context(const std::vector<int>& context,
                                       double ratio, Rng& rng);

  DecodeResult generate_greedy(const Tensor& memory, int reserved_count) const;
  // Length-normalized log-probability ranks the finished candidates.
  DecodeResult generate_beam(const Tensor& memory, int beam_width,
                             int reserved_count) const;

  const DecoderConfig& config() const { return cfg_; }

 private:
  ops::AttentionParams attn_params(const std::string& prefix) const;
  // Log-probs of the next token after `context`.
  std::vector<double> next_log_probs(const std::vector<int>& context,
                                     const Tensor& memory) const;

  DecoderConfig cfg_;
  int d_ = 0;
  int vocab_ = 0;
  ParamStore* ps_;
};

}  // namespace uktr
