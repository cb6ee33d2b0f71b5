// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Registry of finite-difference gradient checks, one per differentiable op.
// Unit tests run each a few times; the acceptance suite runs each 20 times.

#include <functional>
#include <string>
#include <vector>

#include "fd_check.hpp"
#include "ops.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace uktr::test {

struct OpCheck {
  std::string name;
  // Builds one random instance from `seed`, returns the worst FD rel error.
  std::function<double(uint64_t)> run;
};

namespace detail {

inline Tensor rand_tensor(Rng& rng, std::vector<int> shape, bool rg = true,
                          double scale = 1.0) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.normal(0.0, scale);
  return Tensor(std::move(shape), std::move(v), rg);
}

// Fixed random projection to a scalar; plain sums would hide index bugs
// because their gradient is constant.
inline Tensor project(const Tensor& out, Rng& rng) {
  Tensor w = rand_tensor(rng, out.shape(), /*rg=*/false);
  return ops::sum_all(ops::mul(out, w));
}

}  // namespace detail

inline std::vector<OpCheck> differentiable_op_checks() {
  using detail::project;
  using detail::rand_tensor;
  namespace o = uktr::ops;
  std::vector<OpCheck> checks;
  auto add_check = [&](std::string name, std::function<double(uint64_t)> f) {
    checks.push_back({std::move(name), std::move(f)});
  };

  add_check("add", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {3, 4});
    Tensor b = rand_tensor(rng, {3, 4});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::add(a, b), p); };
    return std::max(fd_max_rel_err(a, fwd), fd_max_rel_err(b, fwd));
  });
  add_check("sub", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {3, 4});
    Tensor b = rand_tensor(rng, {3, 4});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::sub(a, b), p); };
    return std::max(fd_max_rel_err(a, fwd), fd_max_rel_err(b, fwd));
  });
  add_check("mul", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {3, 4});
    Tensor b = rand_tensor(rng, {3, 4});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::mul(a, b), p); };
    return std::max(fd_max_rel_err(a, fwd), fd_max_rel_err(b, fwd));
  });
  add_check("scale", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {2, 5});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::scale(a, -1.7), p); };
    return fd_max_rel_err(a, fwd);
  });
  add_check("add_scalar", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {2, 5});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::add_scalar(a, 0.3), p); };
    return fd_max_rel_err(a, fwd);
  });
  add_check("relu", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {4, 4});
    // keep values away from the kink, where FD is ill-defined
    for (auto& x : a.values())
      if (std::abs(x) < 1e-3) x = 0.5;
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::relu(a), p); };
    return fd_max_rel_err(a, fwd);
  });
  add_check("reshape", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {2, 6});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::reshape(a, {3, 4}), p); };
    return fd_max_rel_err(a, fwd);
  });
  add_check("transpose2d", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {3, 5});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::transpose2d(a), p); };
    return fd_max_rel_err(a, fwd);
  });
  add_check("slice_cols", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {3, 7});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::slice_cols(a, 2, 4), p); };
    return fd_max_rel_err(a, fwd);
  });
  add_check("concat_cols", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {3, 2});
    Tensor b = rand_tensor(rng, {3, 4});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::concat_cols({a, b}), p); };
    return std::max(fd_max_rel_err(a, fwd), fd_max_rel_err(b, fwd));
  });
  add_check("chw_to_seq", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {3, 2, 4});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::chw_to_seq(a), p); };
    return fd_max_rel_err(a, fwd);
  });
  add_check("seq_to_chw", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {8, 3});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::seq_to_chw(a, 2, 4), p); };
    return fd_max_rel_err(a, fwd);
  });
  add_check("sum_all", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {3, 3});
    auto fwd = [&] { return o::sum_all(a); };
    return fd_max_rel_err(a, fwd);
  });
  add_check("mean_all", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {3, 3});
    auto fwd = [&] { return o::mean_all(a); };
    return fd_max_rel_err(a, fwd);
  });
  add_check("mean_over_height", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {3, 4, 5});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::mean_over_height(a), p); };
    return fd_max_rel_err(a, fwd);
  });
  add_check("mean_spatial", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {3, 4, 5});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::mean_spatial(a), p); };
    return fd_max_rel_err(a, fwd);
  });
  add_check("matmul", [](uint64_t seed) {
    Rng rng(seed);
    Tensor a = rand_tensor(rng, {4, 3});
    Tensor b = rand_tensor(rng, {3, 5});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::matmul(a, b), p); };
    return std::max(fd_max_rel_err(a, fwd), fd_max_rel_err(b, fwd));
  });
  add_check("linear", [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = rand_tensor(rng, {4, 3});
    Tensor w = rand_tensor(rng, {3, 5});
    Tensor b = rand_tensor(rng, {5});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::linear(x, w, b), p); };
    double e = std::max(fd_max_rel_err(x, fwd), fd_max_rel_err(w, fwd));
    return std::max(e, fd_max_rel_err(b, fwd));
  });
  add_check("softmax_rows", [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = rand_tensor(rng, {3, 6});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::softmax_rows(x), p); };
    return fd_max_rel_err(x, fwd);
  });
  add_check("softmax_rows_masked", [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = rand_tensor(rng, {3, 6});
    std::vector<uint8_t> allow(18, 0);
    for (int r = 0; r < 3; ++r) {
      int on = 0;
      for (int c = 0; c < 6; ++c)
        if (rng.uniform() < 0.6) {
          allow[static_cast<size_t>(r) * 6 + c] = 1;
          ++on;
        }
      if (on == 0) allow[static_cast<size_t>(r) * 6] = 1;
    }
    auto fwd = [&] {
      Rng p(seed ^ 1);
      return project(o::softmax_rows_masked(x, allow), p);
    };
    return fd_max_rel_err(x, fwd);
  });
  add_check("log_softmax_rows", [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = rand_tensor(rng, {3, 6});
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::log_softmax_rows(x), p); };
    return fd_max_rel_err(x, fwd);
  });
  add_check("layer_norm_rows", [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = rand_tensor(rng, {4, 6});
    Tensor g = rand_tensor(rng, {6}, true, 0.5);
    for (auto& v : g.values()) v += 1.0;
    Tensor b = rand_tensor(rng, {6}, true, 0.5);
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::layer_norm_rows(x, g, b), p); };
    double e = std::max(fd_max_rel_err(x, fwd), fd_max_rel_err(g, fwd));
    return std::max(e, fd_max_rel_err(b, fwd));
  });
  add_check("group_norm", [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = rand_tensor(rng, {4, 3, 5});
    Tensor g = rand_tensor(rng, {4}, true, 0.5);
    for (auto& v : g.values()) v += 1.0;
    Tensor b = rand_tensor(rng, {4}, true, 0.5);
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::group_norm(x, 2, g, b), p); };
    double e = std::max(fd_max_rel_err(x, fwd), fd_max_rel_err(g, fwd));
    return std::max(e, fd_max_rel_err(b, fwd));
  });
  add_check("conv2d", [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = rand_tensor(rng, {2, 5, 6});
    Tensor w = rand_tensor(rng, {3, 2, 3, 3}, true, 0.5);
    Tensor b = rand_tensor(rng, {3}, true, 0.5);
    auto fwd = [&] {
      Rng p(seed ^ 1);
      return project(o::conv2d(x, w, b, 2, 1, 1, 1), p);
    };
    double e = std::max(fd_max_rel_err(x, fwd), fd_max_rel_err(w, fwd));
    return std::max(e, fd_max_rel_err(b, fwd));
  });
  add_check("embedding", [](uint64_t seed) {
    Rng rng(seed);
    Tensor table = rand_tensor(rng, {7, 4});
    std::vector<int> ids = {2, 5, 2, 0};  // repeated id exercises accumulation
    auto fwd = [&] { Rng p(seed ^ 1); return project(o::embedding(table, ids), p); };
    return fd_max_rel_err(table, fwd);
  });
  add_check("nll_rows", [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = rand_tensor(rng, {5, 6});
    std::vector<int> tgt = {1, 3, -1, 0, 5};
    auto fwd = [&] { return o::nll_rows(o::log_softmax_rows(x), tgt, -1); };
    return fd_max_rel_err(x, fwd);
  });
  add_check("ctc_loss_logprobs", [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = rand_tensor(rng, {6, 4});
    std::vector<int> tgt = {1, 2, 1};
    auto fwd = [&] {
      return o::ctc_loss_logprobs(o::log_softmax_rows(x), tgt, 0);
    };
    return fd_max_rel_err(x, fwd);
  });
  add_check("convex_combine", [](uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> items;
    for (int i = 0; i < 3; ++i) items.push_back(rand_tensor(rng, {2, 4}));
    Tensor w = rand_tensor(rng, {3}, true, 0.5);
    auto fwd = [&] {
      Rng p(seed ^ 1);
      return project(o::convex_combine(items, w), p);
    };
    double e = fd_max_rel_err(w, fwd);
    for (auto& it : items) e = std::max(e, fd_max_rel_err(it, fwd));
    return e;
  });
  add_check("dropout", [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = rand_tensor(rng, {4, 5});
    auto fwd = [&] {
      Rng drop(seed ^ 2);  // same mask on every call
      Rng p(seed ^ 1);
      return project(o::dropout(x, 0.3, drop, true), p);
    };
    return fd_max_rel_err(x, fwd);
  });
  add_check("multi_head_attention", [](uint64_t seed) {
    Rng rng(seed);
    const int d = 8, tq = 3, tk = 4;
    Tensor q = rand_tensor(rng, {tq, d});
    Tensor kv = rand_tensor(rng, {tk, d});
    o::AttentionParams ap;
    ap.wq = rand_tensor(rng, {d, d}, true, 0.4);
    ap.bq = rand_tensor(rng, {d}, true, 0.2);
    ap.wk = rand_tensor(rng, {d, d}, true, 0.4);
    ap.bk = rand_tensor(rng, {d}, true, 0.2);
    ap.wv = rand_tensor(rng, {d, d}, true, 0.4);
    ap.bv = rand_tensor(rng, {d}, true, 0.2);
    ap.wo = rand_tensor(rng, {d, d}, true, 0.4);
    ap.bo = rand_tensor(rng, {d}, true, 0.2);
    auto fwd = [&] {
      Rng p(seed ^ 1);
      return project(o::multi_head_attention(q, kv, ap, 2), p);
    };
    double e = std::max(fd_max_rel_err(q, fwd), fd_max_rel_err(kv, fwd));
    e = std::max(e, fd_max_rel_err(ap.wq, fwd));
    e = std::max(e, fd_max_rel_err(ap.wk, fwd));
    e = std::max(e, fd_max_rel_err(ap.wv, fwd));
    e = std::max(e, fd_max_rel_err(ap.wo, fwd));
    e = std::max(e, fd_max_rel_err(ap.bo, fwd));
    return e;
  });
  add_check("multi_head_attention_masked", [](uint64_t seed) {
    Rng rng(seed);
    const int d = 8, t = 4;
    Tensor x = rand_tensor(rng, {t, d});
    o::AttentionParams ap;
    ap.wq = rand_tensor(rng, {d, d}, true, 0.4);
    ap.bq = rand_tensor(rng, {d}, true, 0.2);
    ap.wk = rand_tensor(rng, {d, d}, true, 0.4);
    ap.bk = rand_tensor(rng, {d}, true, 0.2);
    ap.wv = rand_tensor(rng, {d, d}, true, 0.4);
    ap.bv = rand_tensor(rng, {d}, true, 0.2);
    ap.wo = rand_tensor(rng, {d, d}, true, 0.4);
    ap.bo = rand_tensor(rng, {d}, true, 0.2);
    std::vector<uint8_t> causal(t * t, 0);
    for (int r = 0; r < t; ++r)
      for (int c = 0; c <= r; ++c) causal[static_cast<size_t>(r) * t + c] = 1;
    auto fwd = [&] {
      Rng p(seed ^ 1);
      return project(o::multi_head_attention(x, x, ap, 2, &causal), p);
    };
    return fd_max_rel_err(x, fwd);
  });

  return checks;
}

}  // namespace uktr::test
