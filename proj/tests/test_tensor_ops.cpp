// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "common.hpp"
#include "fd_check.hpp"
#include "fd_suite.hpp"
#include "ops.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace uktr;
namespace o = uktr::ops;

TEST_CASE("backward for a simple chain: d/dw of sum(w*w)/2 is w") {
  Tensor w({4}, {1.0, -2.0, 3.0, 0.5}, true);
  Tensor loss = o::scale(o::sum_all(o::mul(w, w)), 0.5);
  backward(loss);
  for (int i = 0; i < 4; ++i)
    CHECK(w.grad()[i] == doctest::Approx(w.data()[i]).epsilon(1e-12));
}

TEST_CASE("gradients accumulate when a tensor is reused") {
  Tensor w({2}, {3.0, 4.0}, true);
  Tensor loss = o::sum_all(o::add(w, w));
  backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(2.0));
  CHECK(w.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("matmul matches nested loops") {
  Rng rng(1);
  const int m = 7, k = 5, n = 3;
  std::vector<double> av(m * k), bv(k * n);
  for (auto& x : av) x = rng.normal();
  for (auto& x : bv) x = rng.normal();
  Tensor a({m, k}, av), b({k, n}, bv);
  Tensor c = o::matmul(a, b);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += av[i * k + t] * bv[t * n + j];
      CHECK(c.at({i, j}) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("softmax matches hand-computed values") {
  Tensor x({1, 3}, {1.0, 2.0, 3.0});
  Tensor y = o::softmax_rows(x);
  CHECK(y.at({0, 0}) == doctest::Approx(0.09003057).epsilon(1e-6));
  CHECK(y.at({0, 1}) == doctest::Approx(0.24472847).epsilon(1e-6));
  CHECK(y.at({0, 2}) == doctest::Approx(0.66524096).epsilon(1e-6));
  double s = y.at({0, 0}) + y.at({0, 1}) + y.at({0, 2});
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax is shift-invariant and handles large logits") {
  Tensor x({1, 3}, {1000.0, 1001.0, 1002.0});
  Tensor y = o::softmax_rows(x);
  CHECK(y.at({0, 2}) == doctest::Approx(0.66524096).epsilon(1e-6));
  CHECK(std::isfinite(y.at({0, 0})));
}

TEST_CASE("masked softmax puts exact zeros on masked entries") {
  Tensor x({2, 4}, {0.3, -1.0, 2.0, 0.7, 5.0, 5.0, 5.0, 5.0});
  std::vector<uint8_t> allow = {1, 0, 1, 0, 0, 1, 0, 0};
  Tensor y = o::softmax_rows_masked(x, allow);
  CHECK(y.at({0, 1}) == 0.0);
  CHECK(y.at({0, 3}) == 0.0);
  CHECK(y.at({0, 0}) + y.at({0, 2}) == doctest::Approx(1.0).epsilon(1e-12));
  // equivalent to softmax over the allowed pair
  const double z = std::exp(0.3) + std::exp(2.0);
  CHECK(y.at({0, 0}) == doctest::Approx(std::exp(0.3) / z).epsilon(1e-12));
  // single allowed entry gets exactly 1
  CHECK(y.at({1, 1}) == 1.0);
  CHECK(y.at({1, 0}) == 0.0);
}

TEST_CASE("masked softmax rejects fully masked rows") {
  Tensor x({1, 2}, {0.0, 0.0});
  std::vector<uint8_t> allow = {0, 0};
  CHECK_THROWS_AS(o::softmax_rows_masked(x, allow), Error);
}

TEST_CASE("log_softmax agrees with log of softmax") {
  Rng rng(2);
  std::vector<double> v(12);
  for (auto& x : v) x = rng.normal();
  Tensor x({3, 4}, v);
  Tensor a = o::log_softmax_rows(x);
  Tensor b = o::softmax_rows(x);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c)
      CHECK(std::exp(a.at({r, c})) == doctest::Approx(b.at({r, c})).epsilon(1e-12));
}

TEST_CASE("layer_norm maps a constant row to beta") {
  Tensor x({1, 5}, {3.0, 3.0, 3.0, 3.0, 3.0});
  Tensor gamma = Tensor::full({5}, 2.0);
  Tensor beta({5}, {0.1, 0.2, 0.3, 0.4, 0.5});
  Tensor y = o::layer_norm_rows(x, gamma, beta);
  for (int c = 0; c < 5; ++c)
    CHECK(y.at({0, c}) == doctest::Approx(beta.data()[c]).epsilon(1e-12));
}

TEST_CASE("layer_norm output has zero mean and unit variance per row") {
  Rng rng(3);
  std::vector<double> v(2 * 64);
  for (auto& x : v) x = rng.normal(2.0, 3.0);
  Tensor x({2, 64}, v);
  Tensor y = o::layer_norm_rows(x, Tensor::full({64}, 1.0), Tensor::zeros({64}));
  for (int r = 0; r < 2; ++r) {
    double m = 0.0, m2 = 0.0;
    for (int c = 0; c < 64; ++c) {
      m += y.at({r, c});
      m2 += y.at({r, c}) * y.at({r, c});
    }
    m /= 64;
    m2 /= 64;
    CHECK(m == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(m2 - m * m == doctest::Approx(1.0).epsilon(1e-4));  // eps shifts var
  }
}

TEST_CASE("group_norm with one group matches whole-tensor normalization") {
  Rng rng(4);
  std::vector<double> v(3 * 4 * 4);
  for (auto& x : v) x = rng.normal(1.0, 2.0);
  Tensor x({3, 4, 4}, v);
  Tensor y = o::group_norm(x, 1, Tensor::full({3}, 1.0), Tensor::zeros({3}));
  double mean = 0.0;
  for (double t : v) mean += t;
  mean /= v.size();
  double var = 0.0;
  for (double t : v) var += (t - mean) * (t - mean);
  var /= v.size();
  const double isd = 1.0 / std::sqrt(var + 1e-5);
  for (size_t i = 0; i < v.size(); ++i)
    CHECK(y.values()[i] == doctest::Approx((v[i] - mean) * isd).epsilon(1e-10));
}

TEST_CASE("group_norm per-group statistics are normalized") {
  Rng rng(5);
  std::vector<double> v(4 * 3 * 3);
  for (auto& x : v) x = rng.normal(0.0, 5.0);
  Tensor x({4, 3, 3}, v);
  Tensor y = o::group_norm(x, 2, Tensor::full({4}, 1.0), Tensor::zeros({4}));
  for (int g = 0; g < 2; ++g) {
    double m = 0.0, m2 = 0.0;
    for (int c = g * 2; c < g * 2 + 2; ++c)
      for (int i = 0; i < 9; ++i) {
        double t = y.values()[c * 9 + i];
        m += t;
        m2 += t * t;
      }
    m /= 18;
    m2 /= 18;
    CHECK(m == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(m2 - m * m == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("conv2d 1x1 identity kernel copies the input") {
  Rng rng(6);
  std::vector<double> v(2 * 3 * 4);
  for (auto& x : v) x = rng.normal();
  Tensor x({2, 3, 4}, v);
  // w[co][ci] = 1 if co==ci else 0
  Tensor w = Tensor::zeros({2, 2, 1, 1});
  w.values()[0] = 1.0;
  w.values()[3] = 1.0;
  Tensor y = o::conv2d(x, w, Tensor(), 1, 1, 0, 0);
  REQUIRE(y.shape() == std::vector<int>({2, 3, 4}));
  for (size_t i = 0; i < v.size(); ++i)
    CHECK(y.values()[i] == doctest::Approx(v[i]).epsilon(1e-12));
}

TEST_CASE("conv2d all-ones 3x3 on all-ones input counts the window") {
  Tensor x = Tensor::full({1, 5, 5}, 1.0);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor y = o::conv2d(x, w, Tensor(), 1, 1, 1, 1);
  REQUIRE(y.shape() == std::vector<int>({1, 5, 5}));
  CHECK(y.at({0, 2, 2}) == doctest::Approx(9.0));   // interior
  CHECK(y.at({0, 0, 0}) == doctest::Approx(4.0));   // corner
  CHECK(y.at({0, 0, 2}) == doctest::Approx(6.0));   // edge
}

TEST_CASE("conv2d matches the nested-loop reference on random cases") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const int Cin = 1 + static_cast<int>(rng.uniform_int(0, 2));
    const int Cout = 1 + static_cast<int>(rng.uniform_int(0, 2));
    const int H = 3 + static_cast<int>(rng.uniform_int(0, 4));
    const int W = 3 + static_cast<int>(rng.uniform_int(0, 4));
    const int kh = 1 + 2 * static_cast<int>(rng.uniform_int(0, 1));
    const int kw = 1 + 2 * static_cast<int>(rng.uniform_int(0, 1));
    const int sh = 1 + static_cast<int>(rng.uniform_int(0, 1));
    const int sw = 1 + static_cast<int>(rng.uniform_int(0, 1));
    const int ph = kh / 2, pw = kw / 2;
    std::vector<double> xv(static_cast<size_t>(Cin) * H * W);
    std::vector<double> wv(static_cast<size_t>(Cout) * Cin * kh * kw);
    std::vector<double> bv(Cout);
    for (auto& t : xv) t = rng.normal();
    for (auto& t : wv) t = rng.normal();
    for (auto& t : bv) t = rng.normal();
    Tensor y = o::conv2d(Tensor({Cin, H, W}, xv), Tensor({Cout, Cin, kh, kw}, wv),
                         Tensor({Cout}, bv), sh, sw, ph, pw);
    auto ref = test::conv2d_reference(xv, Cin, H, W, wv, Cout, kh, kw, bv, sh,
                                      sw, ph, pw);
    REQUIRE(y.values().size() == ref.size());
    for (size_t i = 0; i < ref.size(); ++i)
      CHECK(y.values()[i] == doctest::Approx(ref[i]).epsilon(1e-10));
  }
}

TEST_CASE("chw_to_seq and seq_to_chw are inverses") {
  Rng rng(8);
  std::vector<double> v(3 * 2 * 5);
  for (auto& x : v) x = rng.normal();
  Tensor x({3, 2, 5}, v);
  Tensor seq = o::chw_to_seq(x);
  REQUIRE(seq.shape() == std::vector<int>({10, 3}));
  // position (h=1, w=2) holds channel vector x[:, 1, 2]
  for (int c = 0; c < 3; ++c)
    CHECK(seq.at({1 * 5 + 2, c}) == doctest::Approx(x.at({c, 1, 2})));
  Tensor back = o::seq_to_chw(seq, 2, 5);
  for (size_t i = 0; i < v.size(); ++i)
    CHECK(back.values()[i] == doctest::Approx(v[i]));
}

TEST_CASE("mean_over_height averages columns of each channel") {
  Tensor x({1, 2, 3}, {1, 2, 3, 5, 6, 7});
  Tensor y = o::mean_over_height(x);
  REQUIRE(y.shape() == std::vector<int>({1, 3}));
  CHECK(y.at({0, 0}) == doctest::Approx(3.0));
  CHECK(y.at({0, 1}) == doctest::Approx(4.0));
  CHECK(y.at({0, 2}) == doctest::Approx(5.0));
}

TEST_CASE("embedding copies rows and accumulates repeated ids in backward") {
  Tensor table({3, 2}, {0.0, 1.0, 10.0, 11.0, 20.0, 21.0}, true);
  Tensor e = o::embedding(table, {2, 0, 2});
  CHECK(e.at({0, 1}) == doctest::Approx(21.0));
  CHECK(e.at({1, 0}) == doctest::Approx(0.0));
  Tensor loss = o::sum_all(e);
  backward(loss);
  CHECK(table.grad()[4] == doctest::Approx(2.0));  // id 2 used twice
  CHECK(table.grad()[0] == doctest::Approx(1.0));
  CHECK(table.grad()[2] == doctest::Approx(0.0));
}

TEST_CASE("nll_rows averages over non-ignored rows") {
  Tensor lp({3, 2}, {std::log(0.25), std::log(0.75), std::log(0.5),
                     std::log(0.5), std::log(0.9), std::log(0.1)});
  Tensor l = o::nll_rows(lp, {1, -1, 0}, -1);
  CHECK(l.item() == doctest::Approx(-(std::log(0.75) + std::log(0.9)) / 2));
}

TEST_CASE("ctc matches the hand-computed two-frame case") {
  // T=2, c=2, uniform probs. Paths collapsing to [1]: (1,1), (0,1), (1,0).
  Tensor lp = Tensor::full({2, 2}, std::log(0.5));
  Tensor l = o::ctc_loss_logprobs(lp, {1}, 0);
  CHECK(l.item() == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
}

TEST_CASE("ctc matches full path enumeration on random instances") {
  Rng rng(9);
  int done = 0;
  while (done < 60) {
    const int T = 1 + static_cast<int>(rng.uniform_int(0, 5));
    const int c = 2 + static_cast<int>(rng.uniform_int(0, 2));
    const int L = static_cast<int>(rng.uniform_int(0, 3));
    std::vector<int> target(L);
    for (auto& t : target) t = 1 + static_cast<int>(rng.uniform_int(0, c - 2));
    int repeats = 0;
    for (int i = 1; i < L; ++i)
      if (target[i] == target[i - 1]) ++repeats;
    if (T < L + repeats) continue;  // infeasible; covered separately
    std::vector<double> logits(static_cast<size_t>(T) * c);
    for (auto& x : logits) x = rng.normal(0.0, 2.0);
    Tensor lp = o::log_softmax_rows(Tensor({T, c}, logits));
    const double got = o::ctc_loss_logprobs(lp, target, 0).item();
    const double want = test::ctc_nll_enumerated(lp.values(), T, c, target, 0);
    CHECK(std::abs(got - want) <= 1e-9);
    ++done;
  }
}

TEST_CASE("ctc rejects infeasible targets with a data error") {
  Tensor lp = Tensor::full({2, 3}, std::log(1.0 / 3));
  CHECK_THROWS_AS(o::ctc_loss_logprobs(lp, {1, 2, 1}, 0), Error);
  // repeat needs a separating blank: [1,1] requires T >= 3
  CHECK_THROWS_AS(o::ctc_loss_logprobs(lp, {1, 1}, 0), Error);
  try {
    o::ctc_loss_logprobs(lp, {1, 1}, 0);
  } catch (const Error& e) {
    CHECK(e.code() == ErrCode::kData);
  }
  // T == L + repeats is exactly feasible
  Tensor lp3 = Tensor::full({3, 3}, std::log(1.0 / 3));
  CHECK_NOTHROW(o::ctc_loss_logprobs(lp3, {1, 1}, 0));
}

TEST_CASE("ctc stays finite on long inputs") {
  // 256 frames of sharply peaked log-probs; naive prob-space math underflows
  Rng rng(10);
  const int T = 256, c = 8;
  std::vector<double> logits(static_cast<size_t>(T) * c);
  for (auto& x : logits) x = rng.normal(0.0, 4.0);
  Tensor lp = o::log_softmax_rows(Tensor({T, c}, logits));
  std::vector<int> target;
  for (int i = 0; i < 40; ++i)
    target.push_back(1 + static_cast<int>(rng.uniform_int(0, c - 2)));
  Tensor l = o::ctc_loss_logprobs(lp, target, 0);
  CHECK(std::isfinite(l.item()));
  CHECK(l.item() > 0.0);
}

TEST_CASE("dropout is identity in eval mode and at rate zero") {
  Rng rng(11);
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor a = o::dropout(x, 0.5, rng, false);
  CHECK(a.node().get() == x.node().get());
  Tensor b = o::dropout(x, 0.0, rng, true);
  CHECK(b.node().get() == x.node().get());
}

TEST_CASE("dropout zeroes roughly `rate` of entries and rescales the rest") {
  Rng rng(12);
  Tensor x = Tensor::full({100, 100}, 1.0);
  Tensor y = o::dropout(x, 0.3, rng, true);
  int zeros = 0;
  for (double v : y.values()) {
    if (v == 0.0)
      ++zeros;
    else
      CHECK(v == doctest::Approx(1.0 / 0.7).epsilon(1e-12));
  }
  CHECK(zeros / 10000.0 == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("attention output shape and causal mask independence") {
  Rng rng(13);
  const int d = 8, t = 5;
  auto rt = [&](std::vector<int> shape) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.normal(0.0, 0.5);
    return Tensor(std::move(shape), std::move(v));
  };
  o::AttentionParams ap{rt({d, d}), rt({d}), rt({d, d}), rt({d}),
                        rt({d, d}), rt({d}), rt({d, d}), rt({d})};
  std::vector<uint8_t> causal(t * t, 0);
  for (int r = 0; r < t; ++r)
    for (int c = 0; c <= r; ++c) causal[static_cast<size_t>(r) * t + c] = 1;
  Tensor x = rt({t, d});
  Tensor y1 = o::multi_head_attention(x, x, ap, 2, &causal);
  REQUIRE(y1.shape() == std::vector<int>({t, d}));
  // Perturb the last position; earlier outputs must not move.
  Tensor x2 = x.clone_detached();
  for (int c = 0; c < d; ++c) x2.values()[(t - 1) * d + c] += 1.0;
  Tensor y2 = o::multi_head_attention(x2, x2, ap, 2, &causal);
  for (int r = 0; r < t - 1; ++r)
    for (int c = 0; c < d; ++c)
      CHECK(y1.at({r, c}) == doctest::Approx(y2.at({r, c})).epsilon(1e-12));
}

TEST_CASE("sinusoidal positions match the closed form") {
  Tensor pe = o::sinusoidal_positions(10, 6);
  REQUIRE(pe.shape() == std::vector<int>({10, 6}));
  CHECK(pe.at({0, 0}) == doctest::Approx(0.0));
  CHECK(pe.at({0, 1}) == doctest::Approx(1.0));
  CHECK(pe.at({3, 0}) == doctest::Approx(std::sin(3.0)));
  CHECK(pe.at({3, 1}) == doctest::Approx(std::cos(3.0)));
  const double f = std::pow(10000.0, -2.0 / 6.0);
  CHECK(pe.at({7, 2}) == doctest::Approx(std::sin(7.0 * f)));
  CHECK(pe.at({7, 3}) == doctest::Approx(std::cos(7.0 * f)));
  CHECK_FALSE(pe.requires_grad());
}

TEST_CASE("finite differences validate every differentiable op") {
  for (const auto& check : uktr::test::differentiable_op_checks()) {
    for (uint64_t rep = 0; rep < 3; ++rep) {
      const double err = check.run(1000 + rep * 17);
      INFO(check.name << " rep " << rep);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("finite differences validate a small composite network") {
  // conv -> group_norm -> relu -> seq -> linear -> layer_norm -> attention
  // -> log_softmax -> nll, all in one graph.
  Rng rng(14);
  auto rt = [&](std::vector<int> shape, double sc) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.normal(0.0, sc);
    return Tensor(std::move(shape), std::move(v), true);
  };
  Tensor img = rt({1, 6, 8}, 1.0);
  Tensor cw = rt({4, 1, 3, 3}, 0.5);
  Tensor cb = rt({4}, 0.1);
  Tensor gg = Tensor::full({4}, 1.0, true);
  Tensor gb = Tensor::zeros({4}, true);
  Tensor lw = rt({4, 6}, 0.5);
  Tensor lb = rt({6}, 0.1);
  Tensor lg = Tensor::full({6}, 1.0, true);
  Tensor lbeta = Tensor::zeros({6}, true);
  o::AttentionParams ap{rt({6, 6}, 0.4), rt({6}, 0.1), rt({6, 6}, 0.4),
                        rt({6}, 0.1),    rt({6, 6}, 0.4), rt({6}, 0.1),
                        rt({6, 6}, 0.4), rt({6}, 0.1)};
  std::vector<int> targets = {1, 4, 2, 0, 3, 5, 1, 2, 4, 0, 1, 3};
  auto fwd = [&] {
    Tensor h = o::conv2d(img, cw, cb, 2, 2, 1, 1);  // [4,3,4]
    h = o::relu(o::group_norm(h, 2, gg, gb));
    Tensor s = o::chw_to_seq(h);                    // [12,4]
    s = o::layer_norm_rows(o::linear(s, lw, lb), lg, lbeta);
    s = o::multi_head_attention(s, s, ap, 2);
    return o::nll_rows(o::log_softmax_rows(s), targets, -1);
  };
  for (Tensor* p : {&img, &cw, &cb, &gg, &gb, &lw, &lb, &lg, &lbeta, &ap.wq,
                    &ap.wv, &ap.wo}) {
    CHECK(test::fd_max_rel_err(*p, fwd) < 1e-4);
  }
}
