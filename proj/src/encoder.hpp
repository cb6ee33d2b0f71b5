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

// Visual encoder: a residual CNN backbone that turns a normalized grayscale
// line image [1,H,W] into a feature map [d, H/f, W/f], followed by a pre-LN
// Transformer stack that contextualizes the spatial positions.
//
// Backbone unit: 1x1 conv -> GroupNorm -> ReLU -> 3x3 conv -> GroupNorm,
// added to a skip path (identity, or a strided 1x1 projection when the
// channel count or resolution changes), then ReLU. The first unit of a
// downsampling block uses stride 2 in both dimensions.
class Encoder {
 public:
  // Registers all parameters under "encoder." in `ps`. The store must
  // outlive the encoder.
  Encoder(const EncoderConfig& cfg, ParamStore& ps);

  // [1,H,W] -> [d, H/f, W/f]. W may be anything >= 1; H must match the
  // configured input height so the row count after downsampling is exact.
  Tensor cnn_forward(const Tensor& x) const;

  // [d,h,w] -> [d,h,w], adding sinusoidal positions over the h*w sequence
  // and applying the Transformer layers. Dropout fires only when `rng` is
  // non-null (training); pass nullptr for deterministic evaluation.
  Tensor tr_encode(const Tensor& g, Rng* rng) const;

  // Convenience: cnn_forward then tr_encode.
  Tensor forward(const Tensor& x, Rng* rng) const;

  // Collapse rows: [d,h,w] -> [d,w].
  static Tensor hpool(const Tensor& g);

  const EncoderConfig& config() const { return cfg_; }

 private:
  struct UnitSpec {
    std::string prefix;
    int cin = 0;
    int cout = 0;
    int stride = 1;
    bool proj = false;  // skip path needs a 1x1 projection
  };

  Tensor unit_forward(const Tensor& x, const UnitSpec& u) const;
  ops::AttentionParams attn_params(const std::string& prefix) const;

  EncoderConfig cfg_;
  ParamStore* ps_;
  std::vector<UnitSpec> units_;
};

}  // namespace uktr
