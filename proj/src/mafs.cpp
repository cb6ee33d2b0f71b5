// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "mafs.hpp"

#include "common.hpp"

namespace uktr {

namespace o = ops;

Mafs::Mafs(const MafsConfig& cfg, int d, ParamStore& ps)
    : cfg_(cfg), d_(d), ps_(&ps) {
  const int hidden = d / 4;
  ps.fan_in_uniform("mafs.router.w1", {d, hidden}, d);
  ps.zeros("mafs.router.b1", {hidden});
  ps.fan_in_uniform("mafs.router.w2", {hidden, cfg_.n}, hidden);
  ps.zeros("mafs.router.b2", {cfg_.n});
  for (int i = 0; i < cfg_.n; ++i) {
    const std::string p = "mafs.adapter" + std::to_string(i) + ".";
    ps.fan_in_uniform(p + "down.w", {d, cfg_.p}, d);
    ps.zeros(p + "down.b", {cfg_.p});
    ps.fan_in_uniform(p + "up.w", {cfg_.p, d}, cfg_.p);
    ps.zeros(p + "up.b", {d});
  }
}

Tensor Mafs::seq_mean(const Tensor& seq) {
  const int t = seq.shape()[0];
  // Mean as a matmul keeps the gradient path trivial.
  Tensor ones({1, t}, std::vector<double>(static_cast<size_t>(t), 1.0 / t));
  return o::matmul(ones, seq);
}

Tensor Mafs::route(const Tensor& pooled) const {
  const ParamStore& ps = *ps_;
  Tensor h = o::relu(o::linear(pooled, ps.get("mafs.router.w1"),
                               ps.get("mafs.router.b1")));
  Tensor logits =
      o::linear(h, ps.get("mafs.router.w2"), ps.get("mafs.router.b2"));
  return o::softmax_rows(logits);
}

Tensor Mafs::adapt(const Tensor& seq, int i) const {
  if (i < 0 || i >= cfg_.n) fail_usage("adapter index out of range");
  const std::string p = "mafs.adapter" + std::to_string(i) + ".";
  const ParamStore& ps = *ps_;
  Tensor h =
      o::relu(o::linear(seq, ps.get(p + "down.w"), ps.get(p + "down.b")));
  Tensor corr = o::linear(h, ps.get(p + "up.w"), ps.get(p + "up.b"));
  return o::add(seq, corr);
}

Tensor Mafs::aggregate(const Tensor& seq, const Tensor& weights) const {
  if (weights.numel() != cfg_.n)
    fail_usage("aggregate weights must have one entry per adapter");
  std::vector<Tensor> items;
  items.reserve(static_cast<size_t>(cfg_.n));
  for (int i = 0; i < cfg_.n; ++i) items.push_back(adapt(seq, i));
  Tensor w = weights.ndim() == 1 ? weights : o::reshape(weights, {cfg_.n});
  return o::convex_combine(items, w);
}

}  // namespace uktr
