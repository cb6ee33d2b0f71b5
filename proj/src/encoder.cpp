// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "encoder.hpp"

#include "common.hpp"

namespace uktr {

namespace o = ops;

Encoder::Encoder(const EncoderConfig& cfg, ParamStore& ps)
    : cfg_(cfg), ps_(&ps) {
  int cin = 1;  // grayscale input
  for (size_t b = 0; b < cfg_.channels.size(); ++b) {
    const int cout = cfg_.channels[b];
    for (int u = 0; u < cfg_.repeats[b]; ++u) {
      UnitSpec spec;
      spec.prefix = "encoder.cnn.b" + std::to_string(b) + ".u" +
                    std::to_string(u) + ".";
      spec.cin = cin;
      spec.cout = cout;
      spec.stride = (u == 0 && cfg_.downsample[b]) ? 2 : 1;
      spec.proj = (cin != cout) || (spec.stride != 1);
      ps.fan_in_uniform(spec.prefix + "conv1.w", {cout, cin, 1, 1}, cin);
      ps.zeros(spec.prefix + "conv1.b", {cout});
      ps.ones(spec.prefix + "gn1.g", {cout});
      ps.zeros(spec.prefix + "gn1.b", {cout});
      ps.fan_in_uniform(spec.prefix + "conv2.w", {cout, cout, 3, 3},
                        cout * 9);
      ps.zeros(spec.prefix + "conv2.b", {cout});
      ps.ones(spec.prefix + "gn2.g", {cout});
      ps.zeros(spec.prefix + "gn2.b", {cout});
      if (spec.proj) {
        ps.fan_in_uniform(spec.prefix + "skip.w", {cout, cin, 1, 1}, cin);
        ps.zeros(spec.prefix + "skip.b", {cout});
      }
      units_.push_back(std::move(spec));
      cin = cout;
    }
  }

  const int d = cfg_.d;
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "encoder.tr.l" + std::to_string(l) + ".";
    ps.ones(p + "ln1.g", {d});
    ps.zeros(p + "ln1.b", {d});
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
      ps.fan_in_uniform(p + w, {d, d}, d);
    for (const char* bn : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
      ps.zeros(p + bn, {d});
    ps.ones(p + "ln2.g", {d});
    ps.zeros(p + "ln2.b", {d});
    ps.fan_in_uniform(p + "ffn.w1", {d, cfg_.ffn}, d);
    ps.zeros(p + "ffn.b1", {cfg_.ffn});
    ps.fan_in_uniform(p + "ffn.w2", {cfg_.ffn, d}, cfg_.ffn);
    ps.zeros(p + "ffn.b2", {d});
  }
  if (cfg_.layers > 0) {
    ps.ones("encoder.tr.final_ln.g", {d});
    ps.zeros("encoder.tr.final_ln.b", {d});
  }
}

Tensor Encoder::unit_forward(const Tensor& x, const UnitSpec& u) const {
  const ParamStore& ps = *ps_;
  Tensor h = o::conv2d(x, ps.get(u.prefix + "conv1.w"),
                       ps.get(u.prefix + "conv1.b"), 1, 1, 0, 0);
  h = o::relu(o::group_norm(h, cfg_.norm_groups, ps.get(u.prefix + "gn1.g"),
                            ps.get(u.prefix + "gn1.b")));
  h = o::conv2d(h, ps.get(u.prefix + "conv2.w"), ps.get(u.prefix + "conv2.b"),
                u.stride, u.stride, 1, 1);
  h = o::group_norm(h, cfg_.norm_groups, ps.get(u.prefix + "gn2.g"),
                    ps.get(u.prefix + "gn2.b"));
  Tensor skip = u.proj ? o::conv2d(x, ps.get(u.prefix + "skip.w"),
                                   ps.get(u.prefix + "skip.b"), u.stride,
                                   u.stride, 0, 0)
                       : x;
  return o::relu(o::add(h, skip));
}

Tensor Encoder::cnn_forward(const Tensor& x) const {
  if (x.shape().size() != 3 || x.shape()[0] != 1)
    fail_usage("encoder input must be [1,H,W]");
  if (x.shape()[1] != cfg_.height)
    fail_usage("encoder input height " + std::to_string(x.shape()[1]) +
               " does not match configured height " +
               std::to_string(cfg_.height));
  Tensor h = x;
  for (const auto& u : units_) h = unit_forward(h, u);
  return h;
}

ops::AttentionParams Encoder::attn_params(const std::string& prefix) const {
  ops::AttentionParams p;
  p.wq = ps_->get(prefix + "attn.wq");
  p.bq = ps_->get(prefix + "attn.bq");
  p.wk = ps_->get(prefix + "attn.wk");
  p.bk = ps_->get(prefix + "attn.bk");
  p.wv = ps_->get(prefix + "attn.wv");
  p.bv = ps_->get(prefix + "attn.bv");
  p.wo = ps_->get(prefix + "attn.wo");
  p.bo = ps_->get(prefix + "attn.bo");
  return p;
}

Tensor Encoder::tr_encode(const Tensor& g, Rng* rng) const {
  const int h = g.shape()[1];
  const int w = g.shape()[2];
  const bool training = rng != nullptr;
  Rng unused(0);
  Rng& r = training ? *rng : unused;

  Tensor x = o::chw_to_seq(g);  // [h*w, d]
  x = o::add(x, o::sinusoidal_positions(h * w, cfg_.d));
  x = o::dropout(x, cfg_.dropout, r, training);

  const ParamStore& ps = *ps_;
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "encoder.tr.l" + std::to_string(l) + ".";
    Tensor n1 = o::layer_norm_rows(x, ps.get(p + "ln1.g"), ps.get(p + "ln1.b"));
    Tensor a = o::multi_head_attention(n1, n1, attn_params(p), cfg_.heads);
    x = o::add(x, o::dropout(a, cfg_.dropout, r, training));
    Tensor n2 = o::layer_norm_rows(x, ps.get(p + "ln2.g"), ps.get(p + "ln2.b"));
    Tensor f = o::linear(n2, ps.get(p + "ffn.w1"), ps.get(p + "ffn.b1"));
    f = o::linear(o::relu(f), ps.get(p + "ffn.w2"), ps.get(p + "ffn.b2"));
    x = o::add(x, o::dropout(f, cfg_.dropout, r, training));
  }
  if (cfg_.layers > 0)
    x = o::layer_norm_rows(x, ps.get("encoder.tr.final_ln.g"),
                           ps.get("encoder.tr.final_ln.b"));
  return o::seq_to_chw(x, h, w);
}

Tensor Encoder::forward(const Tensor& x, Rng* rng) const {
  return tr_encode(cnn_forward(x), rng);
}

Tensor Encoder::hpool(const Tensor& g) { return o::mean_over_height(g); }

}  // namespace uktr
