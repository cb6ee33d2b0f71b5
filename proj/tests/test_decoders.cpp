// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "common.hpp"
#include "decoders.hpp"
#include "fd_check.hpp"
#include "oracles.hpp"
#include "param_store.hpp"
#include "rng.hpp"
#include "tokenizer.hpp"

using namespace uktr;
using uktr::test::fd_max_rel_err;

namespace {

// Time-major log-probs from random logits; c classes, blank = 0.
Tensor rand_log_probs(Rng& rng, int T, int c) {
  std::vector<double> v(static_cast<size_t>(T) * c);
  for (auto& x : v) x = rng.normal(0.0, 2.0);
  Tensor logits({T, c}, std::move(v));
  return ops::log_softmax_rows(logits);
}

// Independent collapse implementation for the greedy oracle.
std::vector<int> greedy_oracle(const Tensor& lp, int reserved) {
  const int T = lp.shape()[0], c = lp.shape()[1];
  std::vector<int> frames;
  for (int t = 0; t < T; ++t) {
    int best = 0;
    for (int k = reserved; k < c; ++k)
      if (lp.at({t, k}) > lp.at({t, best})) best = k;
    frames.push_back(best);
  }
  return test::collapse_path(frames, 0);
}

DecoderConfig toy_decoder_config() {
  DecoderConfig d;
  d.layers = 1;
  d.heads = 2;
  d.ffn = 16;
  d.dropout = 0.0;
  d.mask_ratio = 0.30;
  d.max_len = 8;
  return d;
}

Tensor rand_memory(Rng& rng, int s, int d, bool rg = false) {
  std::vector<double> v(static_cast<size_t>(s) * d);
  for (auto& x : v) x = rng.normal(0.0, 1.0);
  return Tensor({s, d}, std::move(v), rg);
}

}  // namespace

TEST_CASE("ctc loss named examples") {
  // Single frame: loss is -ln q of the target class.
  {
    Tensor logits({1, 3}, {0.3, 1.7, -0.2});
    Tensor lp = ops::log_softmax_rows(logits);
    Tensor l = CtcHead::loss(lp, {1});
    CHECK(l.item() == doctest::Approx(-lp.at({0, 1})).epsilon(1e-12));
  }
  // Two frames, uniform over {blank, a}: alignments (a,-),(-,a),(a,a).
  {
    const double h = std::log(0.5);
    Tensor lp({2, 2}, {h, h, h, h});
    Tensor l = CtcHead::loss(lp, {1});
    CHECK(l.item() == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  }
}

TEST_CASE("ctc greedy collapse basics and oracle") {
  // Both frames blank -> empty.
  {
    Tensor lp = ops::log_softmax_rows(Tensor({2, 2}, {5.0, 0.0, 5.0, 0.0}));
    DecodeResult r = CtcHead::greedy(lp, 1);
    CHECK(r.ids.empty());
    CHECK(r.score ==
          doctest::Approx(lp.at({0, 0}) + lp.at({1, 0})).epsilon(1e-12));
  }
  // argmax frames [a, a, blank, a] -> [a, a].
  {
    Tensor lp = ops::log_softmax_rows(
        Tensor({4, 2}, {0.0, 3.0, 0.0, 3.0, 3.0, 0.0, 0.0, 3.0}));
    CHECK(CtcHead::greedy(lp, 1).ids == std::vector<int>({1, 1}));
  }
  Rng rng(2);
  for (int rep = 0; rep < 200; ++rep) {
    const int T = 1 + static_cast<int>(rng.uniform_int(0, 5));
    const int c = 2 + static_cast<int>(rng.uniform_int(0, 3));
    Tensor lp = rand_log_probs(rng, T, c);
    CHECK(CtcHead::greedy(lp, 1).ids == greedy_oracle(lp, 1));
  }
}

TEST_CASE("ctc decode never emits reserved ids") {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    // Make the reserved band (1..5) maximally attractive.
    const int c = kNumReserved + 2;
    const int T = 4;
    std::vector<double> v(static_cast<size_t>(T) * c, 0.0);
    for (int t = 0; t < T; ++t)
      for (int k = 1; k < kNumReserved; ++k)
        v[static_cast<size_t>(t) * c + k] = 6.0 + rng.uniform(0.0, 1.0);
    Tensor lp = ops::log_softmax_rows(Tensor({T, c}, v));
    for (const auto& r : {CtcHead::greedy(lp, kNumReserved),
                          CtcHead::beam(lp, 8, kNumReserved)})
      for (int id : r.ids) CHECK(id >= kNumReserved);
  }
}

TEST_CASE("ctc beam width 1 equals greedy") {
  Rng rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor lp = rand_log_probs(rng, 5, 4);
    DecodeResult g = CtcHead::greedy(lp, 1);
    DecodeResult b = CtcHead::beam(lp, 1, 1);
    CHECK(b.ids == g.ids);
    CHECK(b.mode == "ctc-beam");
  }
}

TEST_CASE("wide ctc beam finds the exact best labeling") {
  Rng rng(5);
  for (int rep = 0; rep < 60; ++rep) {
    const int T = 1 + static_cast<int>(rng.uniform_int(0, 3));
    const int c = 2 + static_cast<int>(rng.uniform_int(0, 1));
    Tensor lp = rand_log_probs(rng, T, c);
    std::vector<int> want =
        test::ctc_best_labeling_enumerated(lp.values(), T, c, 0);
    DecodeResult got = CtcHead::beam(lp, 256, 1);
    CHECK(got.ids == want);
    // Score equals the labeling's total path mass.
    const double nll = test::ctc_nll_enumerated(lp.values(), T, c, want, 0);
    CHECK(got.score == doctest::Approx(-nll).epsilon(1e-9));
  }
}

TEST_CASE("empty-favoring logits give an empty beam result") {
  Rng rng(6);
  std::vector<double> v(static_cast<size_t>(5) * 3, 0.0);
  for (int t = 0; t < 5; ++t) v[static_cast<size_t>(t) * 3] = 8.0;
  Tensor lp = ops::log_softmax_rows(Tensor({5, 3}, v));
  DecodeResult r = CtcHead::beam(lp, 16, 1);
  CHECK(r.ids.empty());
  double blank_sum = 0;
  for (int t = 0; t < 5; ++t) blank_sum += lp.at({t, 0});
  CHECK(r.score == doctest::Approx(blank_sum).epsilon(1e-6));
}

TEST_CASE("ctc head projects features and its loss is differentiable") {
  const int d = 6, vocab = 8, w = 5;
  ParamStore ps(7);
  CtcHead head(d, vocab, ps);
  CHECK(ps.count_params("ctc.") == d * vocab + vocab);
  Rng rng(8);
  Tensor u = rand_memory(rng, w, d, /*rg=*/true);
  const std::vector<int> target = {6, 7};
  auto fwd = [&] {
    Tensor lp = ops::log_softmax_rows(head.logits(u));
    return CtcHead::loss(lp, target);
  };
  CHECK(fd_max_rel_err(ps.get("ctc.w"), fwd) < 1e-4);
  CHECK(fd_max_rel_err(u, fwd) < 1e-4);
}

TEST_CASE("zero-layer decoder is the projected embedding") {
  DecoderConfig cfg = toy_decoder_config();
  cfg.layers = 0;
  const int d = 8, vocab = 10;
  ParamStore ps(9);
  ArDecoder dec(cfg, d, vocab, ps);
  CHECK_FALSE(ps.has("decoder.final_ln.g"));
  Rng rng(10);
  Tensor mem = rand_memory(rng, 4, d);
  const std::vector<int> ctx = {kBosId, 6, 7, 8};
  Tensor got = dec.forward(ctx, mem, nullptr);
  Tensor x = ops::embedding(ps.get("decoder.embed"), ctx);
  x = ops::scale(x, std::sqrt(8.0));
  x = ops::add(x, ops::sinusoidal_positions(4, d));
  Tensor want = ops::linear(x, ps.get("decoder.out.w"), ps.get("decoder.out.b"));
  CHECK(got.values() == want.values());
}

TEST_CASE("causal: later context cannot move earlier logits") {
  ParamStore ps(11);
  const int d = 8, vocab = 12;
  ArDecoder dec(toy_decoder_config(), d, vocab, ps);
  Rng rng(12);
  Tensor mem = rand_memory(rng, 5, d);
  std::vector<int> ctx = {kBosId, 7, 8, 9, 10};
  Tensor base = dec.forward(ctx, mem, nullptr);
  for (size_t t = 1; t < ctx.size(); ++t) {
    std::vector<int> mut = ctx;
    mut[t] = 11;
    Tensor out = dec.forward(mut, mem, nullptr);
    for (size_t p = 0; p < t; ++p)
      for (int k = 0; k < vocab; ++k)
        CHECK(out.at({static_cast<int>(p), k}) ==
              base.at({static_cast<int>(p), k}));
  }
}

TEST_CASE("ar loss: uniform gives ln c, confident gives ~0, oracle agrees") {
  DecoderConfig cfg = toy_decoder_config();
  cfg.layers = 0;
  const int d = 8, vocab = 9;
  ParamStore ps(13);
  ArDecoder dec(cfg, d, vocab, ps);
  Rng rng(14);
  Tensor mem = rand_memory(rng, 3, d);
  const std::vector<int> ctx = {kBosId, 6, 7};
  const std::vector<int> tgt = {6, 7, kEosId};

  // Zero the projection: logits vanish, predictions are uniform.
  auto& w = ps.get("decoder.out.w").values();
  std::vector<double> w_saved = w;
  std::fill(w.begin(), w.end(), 0.0);
  CHECK(dec.loss(ctx, tgt, mem, nullptr).item() ==
        doctest::Approx(std::log(9.0)).epsilon(1e-12));

  // A large bias on one class makes that class near-certain.
  auto& b = ps.get("decoder.out.b").values();
  b[6] = 40.0;
  CHECK(dec.loss(ctx, {6, 6, 6}, mem, nullptr).item() ==
        doctest::Approx(0.0).epsilon(1e-9));
  b[6] = 0.0;
  w = w_saved;

  // Direct evaluation of the mean token NLL, pad positions skipped.
  const std::vector<int> tgt2 = {6, kPadId, kEosId};
  Tensor lp = ops::log_softmax_rows(dec.forward(ctx, mem, nullptr));
  double want = -(lp.at({0, 6}) + lp.at({2, kEosId})) / 2.0;
  CHECK(dec.loss(ctx, tgt2, mem, nullptr).item() ==
        doctest::Approx(want).epsilon(1e-10));
  CHECK(dec.loss(ctx, tgt, mem, nullptr).item() >= 0.0);
}

TEST_CASE("context masking counts and determinism") {
  Rng rng(15);
  const std::vector<int> ctx = {kBosId, 6, 7, 8, 9, 10, 11, 12, 13, 14};
  REQUIRE(ctx.size() == 10);

  CHECK(ArDecoder::mask_context(ctx, 0.0, rng) == ctx);

  std::vector<int> all = ArDecoder::mask_context(ctx, 1.0, rng);
  CHECK(all[0] == kBosId);
  for (size_t i = 1; i < all.size(); ++i) CHECK(all[i] == kMaskId);

  Rng r1(77), r2(77);
  std::vector<int> a = ArDecoder::mask_context(ctx, 0.3, r1);
  std::vector<int> b = ArDecoder::mask_context(ctx, 0.3, r2);
  CHECK(a == b);
  CHECK(a[0] == kBosId);
  int masked = 0;
  for (size_t i = 1; i < a.size(); ++i)
    if (a[i] == kMaskId) ++masked;
  CHECK(masked == 3);  // round(0.3 * 10)
}

TEST_CASE("ar loss gradients match finite differences") {
  ParamStore ps(16);
  const int d = 8, vocab = 10;
  ArDecoder dec(toy_decoder_config(), d, vocab, ps);
  Rng rng(17);
  Tensor mem = rand_memory(rng, 4, d, /*rg=*/true);
  const std::vector<int> ctx = {kBosId, 6, 7, 8};
  const std::vector<int> tgt = {6, 7, 8, kEosId};
  auto fwd = [&] { return dec.loss(ctx, tgt, mem, nullptr); };
  for (const char* name :
       {"decoder.l0.self.wq", "decoder.l0.cross.wv", "decoder.l0.ffn.w1",
        "decoder.out.w", "decoder.final_ln.g", "decoder.embed"}) {
    CAPTURE(name);
    CHECK(fd_max_rel_err(ps.get(name), fwd) < 1e-4);
  }
  CHECK(fd_max_rel_err(mem, fwd) < 1e-4);
}

TEST_CASE("generation: eos-first rig, determinism, self-consistency") {
  DecoderConfig cfg = toy_decoder_config();
  cfg.layers = 0;
  const int d = 8, vocab = 10;
  {
    ParamStore ps(18);
    ArDecoder dec(cfg, d, vocab, ps);
    auto& b = ps.get("decoder.out.b").values();
    b[kEosId] = 30.0;  // eos dominates immediately
    Rng rng(19);
    DecodeResult r = dec.generate_greedy(rand_memory(rng, 3, d), kNumReserved);
    CHECK(r.ids.empty());
  }
  ParamStore ps(20);
  ArDecoder dec(toy_decoder_config(), d, vocab, ps);
  Rng rng(21);
  Tensor mem = rand_memory(rng, 4, d);
  DecodeResult a = dec.generate_greedy(mem, kNumReserved);
  DecodeResult b = dec.generate_greedy(mem, kNumReserved);
  CHECK(a.ids == b.ids);
  CHECK(a.score == b.score);
  for (int id : a.ids) CHECK(id >= kNumReserved);

  // Teacher forcing the generated sequence reproduces it step by step.
  std::vector<int> ctx = {kBosId};
  ctx.insert(ctx.end(), a.ids.begin(), a.ids.end());
  Tensor lp = ops::log_softmax_rows(dec.forward(ctx, mem, nullptr));
  auto argmax_at = [&](size_t t) {
    int best = kEosId;
    for (int k = kNumReserved; k < vocab; ++k)
      if (lp.at({static_cast<int>(t), k}) >
          lp.at({static_cast<int>(t), best}))
        best = k;
    return best;
  };
  for (size_t t = 0; t < a.ids.size(); ++t) CHECK(argmax_at(t) == a.ids[t]);
  // The eos step only exists when generation stopped before the cap.
  if (a.ids.size() < static_cast<size_t>(dec.config().max_len))
    CHECK(argmax_at(a.ids.size()) == kEosId);
}

TEST_CASE("beam generation is exact on a fully enumerable toy") {
  DecoderConfig cfg = toy_decoder_config();
  cfg.max_len = 3;
  const int d = 8, vocab = kNumReserved + 2;  // two content tokens
  ParamStore ps(22);
  ArDecoder dec(cfg, d, vocab, ps);
  Rng rng(23);
  Tensor mem = rand_memory(rng, 4, d);

  // Enumerate every sequence of <= 3 content tokens (eos-terminated or cut
  // off at max_len) and score it length-normalized, exactly as the beam does.
  std::vector<int> best_ids;
  double best_norm = -1e300;
  double best_sum = 0;
  auto consider = [&](const std::vector<int>& ids, double lp_sum, int steps) {
    const double norm = lp_sum / std::max(1, steps);
    if (norm > best_norm) {
      best_norm = norm;
      best_ids = ids;
      best_sum = lp_sum;
    }
  };
  std::function<void(std::vector<int>&, double)> walk =
      [&](std::vector<int>& ids, double lp_sum) {
        std::vector<int> ctx = {kBosId};
        ctx.insert(ctx.end(), ids.begin(), ids.end());
        Tensor lp = ops::log_softmax_rows(dec.forward(ctx, mem, nullptr));
        const int last = static_cast<int>(ctx.size()) - 1;
        consider(ids, lp_sum + lp.at({last, kEosId}),
                 static_cast<int>(ids.size()) + 1);
        if (static_cast<int>(ids.size()) == cfg.max_len) {
          if (!ids.empty()) consider(ids, lp_sum, static_cast<int>(ids.size()));
          return;
        }
        for (int k = kNumReserved; k < vocab; ++k) {
          ids.push_back(k);
          walk(ids, lp_sum + lp.at({last, k}));
          ids.pop_back();
        }
      };
  std::vector<int> ids;
  walk(ids, 0.0);

  DecodeResult got = dec.generate_beam(mem, 64, kNumReserved);
  CHECK(got.ids == best_ids);
  CHECK(got.score == doctest::Approx(best_sum).epsilon(1e-9));

  // Wide beam can only improve the normalized objective over greedy.
  DecodeResult g = dec.generate_greedy(mem, kNumReserved);
  const double gnorm =
      g.score / std::max<int>(1, static_cast<int>(g.ids.size()) + 1);
  CHECK(best_norm >= gnorm - 1e-12);
}
