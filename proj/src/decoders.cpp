// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "decoders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "common.hpp"
#include "tokenizer.hpp"

namespace uktr {

namespace o = ops;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

void check_reserved(int reserved_count, int vocab) {
  if (reserved_count < 1 || reserved_count > vocab)
    fail_usage("reserved_count must be in [1, vocab]");
}

}  // namespace

// ---- CTC head ----

CtcHead::CtcHead(int d, int vocab, ParamStore& ps)
    : d_(d), vocab_(vocab), ps_(&ps) {
  ps.fan_in_uniform("ctc.w", {d, vocab}, d);
  ps.zeros("ctc.b", {vocab});
}

Tensor CtcHead::logits(const Tensor& u1d_seq) const {
  return o::linear(u1d_seq, ps_->get("ctc.w"), ps_->get("ctc.b"));
}

Tensor CtcHead::loss(const Tensor& log_probs, const std::vector<int>& target) {
  return o::ctc_loss_logprobs(log_probs, target, kBlankId);
}

DecodeResult CtcHead::greedy(const Tensor& log_probs, int reserved_count) {
  const int T = log_probs.shape()[0];
  const int c = log_probs.shape()[1];
  check_reserved(reserved_count, c);
  DecodeResult res;
  res.mode = "ctc-greedy";
  int prev = kBlankId;
  for (int t = 0; t < T; ++t) {
    const double* row = log_probs.data() + static_cast<size_t>(t) * c;
    int best = kBlankId;
    for (int k = reserved_count; k < c; ++k)
      if (row[k] > row[best]) best = k;
    res.score += row[best];
    if (best != kBlankId && best != prev) res.ids.push_back(best);
    prev = best;
  }
  return res;
}

DecodeResult CtcHead::beam(const Tensor& log_probs, int beam_width,
                           int reserved_count) {
  if (beam_width < 1) fail_usage("beam_width must be >= 1");
  if (beam_width == 1) {
    DecodeResult res = greedy(log_probs, reserved_count);
    res.mode = "ctc-beam";
    return res;
  }
  const int T = log_probs.shape()[0];
  const int c = log_probs.shape()[1];
  check_reserved(reserved_count, c);

  // Per prefix: log mass of paths ending in blank / in the last symbol.
  struct Mass {
    double lb = kNegInf;
    double lnb = kNegInf;
    double total() const { return logaddexp(lb, lnb); }
  };
  std::map<std::vector<int>, Mass> beams;
  beams[{}].lb = 0.0;

  for (int t = 0; t < T; ++t) {
    const double* row = log_probs.data() + static_cast<size_t>(t) * c;
    std::map<std::vector<int>, Mass> next;
    for (const auto& [prefix, m] : beams) {
      const double total = m.total();
      Mass& same = next[prefix];
      same.lb = logaddexp(same.lb, total + row[kBlankId]);
      for (int k = reserved_count; k < c; ++k) {
        if (!prefix.empty() && prefix.back() == k) {
          // Repeated symbol: without a blank it merges into the current run;
          // extending the labeling needs the previous path to end in blank.
          same.lnb = logaddexp(same.lnb, m.lnb + row[k]);
          std::vector<int> ext = prefix;
          ext.push_back(k);
          Mass& e = next[ext];
          e.lnb = logaddexp(e.lnb, m.lb + row[k]);
        } else {
          std::vector<int> ext = prefix;
          ext.push_back(k);
          Mass& e = next[ext];
          e.lnb = logaddexp(e.lnb, total + row[k]);
        }
      }
    }
    if (static_cast<int>(next.size()) > beam_width) {
      std::vector<std::pair<double, const std::vector<int>*>> ranked;
      ranked.reserve(next.size());
      for (const auto& [prefix, m] : next)
        ranked.emplace_back(m.total(), &prefix);
      std::partial_sort(ranked.begin(), ranked.begin() + beam_width,
                        ranked.end(), [](const auto& a, const auto& b) {
                          return a.first > b.first ||
                                 (a.first == b.first && *a.second < *b.second);
                        });
      std::map<std::vector<int>, Mass> kept;
      for (int i = 0; i < beam_width; ++i)
        kept.emplace(*ranked[i].second, next[*ranked[i].second]);
      next = std::move(kept);
    }
    beams = std::move(next);
  }

  DecodeResult res;
  res.mode = "ctc-beam";
  double best = kNegInf;
  for (const auto& [prefix, m] : beams) {
    const double total = m.total();
    if (total > best) {
      best = total;
      res.ids = prefix;
    }
  }
  res.score = best;
  return res;
}

// ---- autoregressive decoder ----

ArDecoder::ArDecoder(const DecoderConfig& cfg, int d, int vocab,
                     ParamStore& ps)
    : cfg_(cfg), d_(d), vocab_(vocab), ps_(&ps) {
  ps.normal_init("decoder.embed", {vocab, d}, 0.02);
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "decoder.l" + std::to_string(l) + ".";
    ps.ones(p + "ln1.g", {d});
    ps.zeros(p + "ln1.b", {d});
    for (const char* block : {"self.", "cross."}) {
      for (const char* w : {"wq", "wk", "wv", "wo"})
        ps.fan_in_uniform(p + block + w, {d, d}, d);
      for (const char* b : {"bq", "bk", "bv", "bo"})
        ps.zeros(p + block + b, {d});
    }
    ps.ones(p + "ln2.g", {d});
    ps.zeros(p + "ln2.b", {d});
    ps.ones(p + "ln3.g", {d});
    ps.zeros(p + "ln3.b", {d});
    ps.fan_in_uniform(p + "ffn.w1", {d, cfg_.ffn}, d);
    ps.zeros(p + "ffn.b1", {cfg_.ffn});
    ps.fan_in_uniform(p + "ffn.w2", {cfg_.ffn, d}, cfg_.ffn);
    ps.zeros(p + "ffn.b2", {d});
  }
  if (cfg_.layers > 0) {
    ps.ones("decoder.final_ln.g", {d});
    ps.zeros("decoder.final_ln.b", {d});
  }
  ps.fan_in_uniform("decoder.out.w", {d, vocab}, d);
  ps.zeros("decoder.out.b", {vocab});
}

ops::AttentionParams ArDecoder::attn_params(const std::string& prefix) const {
  ops::AttentionParams p;
  p.wq = ps_->get(prefix + "wq");
  p.bq = ps_->get(prefix + "bq");
  p.wk = ps_->get(prefix + "wk");
  p.bk = ps_->get(prefix + "bk");
  p.wv = ps_->get(prefix + "wv");
  p.bv = ps_->get(prefix + "bv");
  p.wo = ps_->get(prefix + "wo");
  p.bo = ps_->get(prefix + "bo");
  return p;
}

Tensor ArDecoder::forward(const std::vector<int>& context,
                          const Tensor& memory, Rng* rng) const {
  if (context.empty() || context.front() != kBosId)
    fail_usage("decoder context must start with bos");
  const int L = static_cast<int>(context.size());
  if (L > cfg_.max_len + 1)
    fail_usage("decoder context longer than max_len + 1");
  for (int id : context)
    if (id < 0 || id >= vocab_) fail_usage("context id out of vocabulary");
  const bool training = rng != nullptr;
  Rng unused(0);
  Rng& r = training ? *rng : unused;
  const ParamStore& ps = *ps_;

  Tensor x = o::embedding(ps.get("decoder.embed"), context);
  x = o::scale(x, std::sqrt(static_cast<double>(d_)));
  x = o::add(x, o::sinusoidal_positions(L, d_));
  x = o::dropout(x, cfg_.dropout, r, training);

  std::vector<uint8_t> causal(static_cast<size_t>(L) * L, 0);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j <= i; ++j) causal[static_cast<size_t>(i) * L + j] = 1;

  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "decoder.l" + std::to_string(l) + ".";
    Tensor n1 = o::layer_norm_rows(x, ps.get(p + "ln1.g"), ps.get(p + "ln1.b"));
    Tensor a = o::multi_head_attention(n1, n1, attn_params(p + "self."),
                                       cfg_.heads, &causal);
    x = o::add(x, o::dropout(a, cfg_.dropout, r, training));
    Tensor n2 = o::layer_norm_rows(x, ps.get(p + "ln2.g"), ps.get(p + "ln2.b"));
    Tensor cr = o::multi_head_attention(n2, memory, attn_params(p + "cross."),
                                        cfg_.heads);
    x = o::add(x, o::dropout(cr, cfg_.dropout, r, training));
    Tensor n3 = o::layer_norm_rows(x, ps.get(p + "ln3.g"), ps.get(p + "ln3.b"));
    Tensor f = o::linear(n3, ps.get(p + "ffn.w1"), ps.get(p + "ffn.b1"));
    f = o::linear(o::relu(f), ps.get(p + "ffn.w2"), ps.get(p + "ffn.b2"));
    x = o::add(x, o::dropout(f, cfg_.dropout, r, training));
  }
  if (cfg_.layers > 0)
    x = o::layer_norm_rows(x, ps.get("decoder.final_ln.g"),
                           ps.get("decoder.final_ln.b"));
  return o::linear(x, ps.get("decoder.out.w"), ps.get("decoder.out.b"));
}

Tensor ArDecoder::loss(const std::vector<int>& context,
                       const std::vector<int>& targets, const Tensor& memory,
                       Rng* rng) const {
  if (context.size() != targets.size())
    fail_usage("decoder context and targets must have equal length");
  Tensor lp = o::log_softmax_rows(forward(context, memory, rng));
  return o::nll_rows(lp, targets, kPadId);
}

std::vector<int> ArDecoder::mask_context(const std::vector<int>& context,
                                         double ratio, Rng& rng) {
  const int len = static_cast<int>(context.size());
  if (len <= 1 || ratio <= 0.0) return context;
  int k = static_cast<int>(std::lround(ratio * len));
  k = std::min(k, len - 1);  // bos is never masked
  if (k <= 0) return context;
  std::vector<int> out = context;
  for (size_t pos : rng.sample_indices(static_cast<size_t>(len - 1),
                                       static_cast<size_t>(k)))
    out[pos + 1] = kMaskId;
  return out;
}

std::vector<double> ArDecoder::next_log_probs(const std::vector<int>& context,
                                              const Tensor& memory) const {
  Tensor logits = forward(context, memory, nullptr);
  const int L = logits.shape()[0];
  const double* row = logits.data() + static_cast<size_t>(L - 1) * vocab_;
  double m = row[0];
  for (int k = 1; k < vocab_; ++k) m = std::max(m, row[k]);
  double z = 0.0;
  for (int k = 0; k < vocab_; ++k) z += std::exp(row[k] - m);
  const double lz = m + std::log(z);
  std::vector<double> lp(static_cast<size_t>(vocab_));
  for (int k = 0; k < vocab_; ++k) lp[static_cast<size_t>(k)] = row[k] - lz;
  return lp;
}

DecodeResult ArDecoder::generate_greedy(const Tensor& memory,
                                        int reserved_count) const {
  check_reserved(reserved_count, vocab_);
  DecodeResult res;
  res.mode = "ar-greedy";
  std::vector<int> ctx = {kBosId};
  for (int step = 0; step < cfg_.max_len; ++step) {
    const std::vector<double> lp = next_log_probs(ctx, memory);
    int best = kEosId;
    for (int k = reserved_count; k < vocab_; ++k)
      if (lp[static_cast<size_t>(k)] > lp[static_cast<size_t>(best)]) best = k;
    res.score += lp[static_cast<size_t>(best)];
    if (best == kEosId) break;
    res.ids.push_back(best);
    ctx.push_back(best);
  }
  return res;
}

DecodeResult ArDecoder::generate_beam(const Tensor& memory, int beam_width,
                                      int reserved_count) const {
  if (beam_width < 1) fail_usage("beam_width must be >= 1");
  check_reserved(reserved_count, vocab_);
  struct Cand {
    std::vector<int> ctx;  // bos-led
    double lp_sum = 0.0;
    int steps = 0;  // emission count, eos included
    double norm() const { return lp_sum / std::max(1, steps); }
  };
  std::vector<Cand> live = {Cand{{kBosId}, 0.0, 0}};
  std::vector<Cand> done;

  for (int step = 0; step < cfg_.max_len && !live.empty(); ++step) {
    std::vector<Cand> expanded;
    for (const Cand& cand : live) {
      const std::vector<double> lp = next_log_probs(cand.ctx, memory);
      auto push = [&](int k) {
        Cand n = cand;
        n.lp_sum += lp[static_cast<size_t>(k)];
        ++n.steps;
        if (k == kEosId) {
          done.push_back(std::move(n));
        } else {
          n.ctx.push_back(k);
          expanded.push_back(std::move(n));
        }
      };
      push(kEosId);
      for (int k = reserved_count; k < vocab_; ++k) push(k);
    }
    const size_t keep = std::min<size_t>(expanded.size(),
                                         static_cast<size_t>(beam_width));
    std::partial_sort(expanded.begin(), expanded.begin() + keep,
                      expanded.end(), [](const Cand& a, const Cand& b) {
                        return a.lp_sum > b.lp_sum ||
                               (a.lp_sum == b.lp_sum && a.ctx < b.ctx);
                      });
    expanded.resize(keep);
    live = std::move(expanded);
  }
  // Paths that hit max_len without eos still compete.
  for (Cand& c : live) done.push_back(std::move(c));

  const Cand* best = nullptr;
  for (const Cand& c : done)
    if (!best || c.norm() > best->norm()) best = &c;
  DecodeResult res;
  res.mode = "ar-beam";
  res.score = best->lp_sum;
  res.ids.assign(best->ctx.begin() + 1, best->ctx.end());
  return res;
}

}  // namespace uktr
