// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "config.hpp"
#include "ops.hpp"
#include "param_store.hpp"
#include "tensor.hpp"

namespace uktr {

// Modality-adaptive feature selection. A small router turns the pooled
// encoder feature into a simplex over n sources; n bottleneck adapters
// (shared between the 2-D and the width-collapsed feature forms) each
// produce a residual correction, and the outputs are blended with the
// router weights. Everything is differentiable, router included, so the
// block trains end to end without modality labels.
class Mafs {
 public:
  // Registers parameters under "mafs." in `ps`; `d` is the encoder width.
  Mafs(const MafsConfig& cfg, int d, ParamStore& ps);

  // Mean over sequence positions: [T,d] -> [1,d].
  static Tensor seq_mean(const Tensor& seq);

  // Pooled feature [1,d] -> router weights [1,n]; rows sum to 1.
  Tensor route(const Tensor& pooled) const;

  // Adapter i, position-wise with a residual connection: [T,d] -> [T,d].
  Tensor adapt(const Tensor& seq, int i) const;

  // Blend of all adapter outputs under `weights` ([1,n] or [n]).
  Tensor aggregate(const Tensor& seq, const Tensor& weights) const;

  int n() const { return cfg_.n; }

 private:
  MafsConfig cfg_;
  int d_;
  ParamStore* ps_;
};

}  // namespace uktr
