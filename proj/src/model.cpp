// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "model.hpp"

#include <string>

#include "common.hpp"
#include "ops.hpp"
#include "tokenizer.hpp"

namespace uktr {

namespace o = ops;

Model::Model(const RunConfig& cfg, int vocab_size, ParamStore& ps)
    : cfg_(cfg),
      vocab_(vocab_size),
      ps_(&ps),
      encoder_(cfg.encoder, ps),
      ctc_(cfg.encoder.d, vocab_size, ps),
      ar_(cfg.decoder, cfg.encoder.d, vocab_size, ps) {
  if (vocab_size <= kNumReserved)
    fail_usage("vocabulary must contain at least one content entry");
  if (cfg.mafs.enabled) mafs_.emplace(cfg.mafs, cfg.encoder.d, ps);
}

Features Model::encode(const Tensor& image, Rng* rng) const {
  Tensor gc = encoder_.tr_encode(encoder_.cnn_forward(image), rng);
  Features f;
  f.h = gc.shape()[1];
  f.w = gc.shape()[2];
  Tensor g_seq = o::chw_to_seq(gc);                       // [h*w, d]
  Tensor g1d_seq = o::transpose2d(Encoder::hpool(gc));    // [w, d]
  if (mafs_) {
    f.router = mafs_->route(Mafs::seq_mean(g_seq));
    f.u_seq = mafs_->aggregate(g_seq, f.router);
    f.u1d_seq = mafs_->aggregate(g1d_seq, f.router);
  } else {
    f.u_seq = g_seq;
    f.u1d_seq = g1d_seq;
  }
  return f;
}

Tensor Model::ctc_log_probs(const Features& f) const {
  return o::log_softmax_rows(ctc_.logits(f.u1d_seq));
}

Tensor Model::ctc_loss(const Features& f,
                       const std::vector<int>& target) const {
  return CtcHead::loss(ctc_log_probs(f), target);
}

Tensor Model::ar_loss(const Features& f, const std::vector<int>& target,
                      Rng* dropout_rng, Rng* mask_rng) const {
  std::vector<int> context = {kBosId};
  context.insert(context.end(), target.begin(), target.end());
  if (mask_rng)
    context = ArDecoder::mask_context(context, cfg_.decoder.mask_ratio,
                                      *mask_rng);
  std::vector<int> targets = target;
  targets.push_back(kEosId);
  return ar_.loss(context, targets, f.u_seq, dropout_rng);
}

DecodeResult Model::recognize(const Tensor& image, const std::string& decoder,
                              int beam_width) const {
  if (beam_width < 1) fail_usage("beam width must be >= 1");
  Features f = encode(image, nullptr);
  if (decoder == "ctc") {
    Tensor lp = ctc_log_probs(f);
    return beam_width == 1 ? CtcHead::greedy(lp, kNumReserved)
                           : CtcHead::beam(lp, beam_width, kNumReserved);
  }
  if (decoder == "ar") {
    return beam_width == 1 ? ar_.generate_greedy(f.u_seq, kNumReserved)
                           : ar_.generate_beam(f.u_seq, beam_width,
                                               kNumReserved);
  }
  fail_usage("decoder must be ctc or ar, got '" + decoder + "'");
}

Tensor Model::router_weights(const Tensor& image) const {
  return encode(image, nullptr).router;
}

void Model::save_params(Checkpoint& ck) const {
  for (const auto& name : ps_->names()) {
    Tensor t = ps_->get(name);
    ck.put_f64("param/" + name, t.shape(), t.values());
  }
}

void Model::load_params(const Checkpoint& ck) {
  size_t stored = 0;
  for (const auto& name : ck.names())
    if (name.rfind("param/", 0) == 0) ++stored;
  if (stored != ps_->size())
    fail_data("checkpoint holds " + std::to_string(stored) +
              " parameter tensors, model expects " +
              std::to_string(ps_->size()));
  for (const auto& name : ps_->names()) {
    const CkptEntry& e = ck.require("param/" + name);
    Tensor t = ps_->get(name);
    if (e.kind != 0 || e.dims != t.shape())
      fail_data("checkpoint entry param/" + name + " has shape " +
                shape_str(e.dims) + ", expected " + shape_str(t.shape()));
    t.values() = e.f64;
  }
}

ParamReport Model::param_report() const {
  ParamReport r;
  r.backbone = ps_->count_params("encoder.cnn.");
  r.tr_encoder = ps_->count_params("encoder.tr.");
  r.mafs = ps_->count_params("mafs.");
  r.ar_decoder = ps_->count_params("decoder.");
  r.ctc_head = ps_->count_params("ctc.");
  r.total = ps_->count_params();
  return r;
}

MacReport Model::mac_report(int width) const {
  const EncoderConfig& e = cfg_.encoder;
  MacReport r;
  int h = e.height, w = width, cin = 1;
  for (size_t b = 0; b < e.channels.size(); ++b) {
    const int cout = e.channels[b];
    for (int u = 0; u < e.repeats[b]; ++u) {
      const int stride = (u == 0 && e.downsample[b]) ? 2 : 1;
      const int ho = o::conv_out_dim(h, 3, stride, 1);
      const int wo = o::conv_out_dim(w, 3, stride, 1);
      r.backbone += 1.0 * h * w * cout * cin;          // 1x1 conv
      r.backbone += 9.0 * ho * wo * cout * cout;       // 3x3 conv
      const bool proj = (cin != cout) || (stride != 1);
      if (proj) r.backbone += 1.0 * ho * wo * cout * cin;
      h = ho;
      w = wo;
      cin = cout;
    }
  }
  const double T = static_cast<double>(h) * w;
  const double d = e.d;
  r.tr_encoder =
      e.layers * (4.0 * T * d * d + 2.0 * T * T * d + 2.0 * T * d * e.ffn);
  if (mafs_) {
    const MafsConfig& m = cfg_.mafs;
    const double hidden = d / 4;
    r.mafs = d * hidden + hidden * m.n;                       // router
    r.mafs += m.n * 2.0 * d * m.p * (T + w);                  // adapters
  }
  r.ctc_head = static_cast<double>(w) * d * vocab_;
  r.total = r.backbone + r.tr_encoder + r.mafs + r.ctc_head;
  return r;
}

}  // namespace uktr
