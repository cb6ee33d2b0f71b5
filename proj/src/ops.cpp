// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#include "ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>

#include "common.hpp"

namespace uktr::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = a > b ? a : b;
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// Wires up a graph node: output requires grad iff any input does.
Tensor make_op(std::vector<int> shape, std::vector<double> value,
               const std::vector<Tensor>& inputs,
               std::function<void(TensorNode&)> bp) {
  Tensor out(std::move(shape), std::move(value));
  bool rg = false;
  for (const auto& t : inputs)
    if (t.defined() && t.requires_grad()) rg = true;
  if (rg) {
    out.node()->requires_grad = true;
    for (const auto& t : inputs)
      if (t.defined()) out.node()->parents.push_back(t.node());
    out.node()->backprop = std::move(bp);
  }
  return out;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail_usage(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
               " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> v(a.values());
  for (size_t i = 0; i < v.size(); ++i) v[i] += b.data()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(v), {a, b}, [an, bn](TensorNode& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> v(a.values());
  for (size_t i = 0; i < v.size(); ++i) v[i] -= b.data()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(v), {a, b}, [an, bn](TensorNode& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] -= n.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> v(a.values());
  for (size_t i = 0; i < v.size(); ++i) v[i] *= b.data()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(v), {a, b}, [an, bn](TensorNode& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i)
        an->grad[i] += n.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i)
        bn->grad[i] += n.grad[i] * an->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> v(a.values());
  for (auto& x : v) x *= s;
  auto an = a.node();
  return make_op(a.shape(), std::move(v), {a}, [an, s](TensorNode& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * s;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> v(a.values());
  for (auto& x : v) x += s;
  auto an = a.node();
  return make_op(a.shape(), std::move(v), {a}, [an](TensorNode& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> v(a.values());
  for (auto& x : v)
    if (x < 0.0) x = 0.0;
  auto an = a.node();
  return make_op(a.shape(), std::move(v), {a}, [an](TensorNode& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      if (an->value[i] > 0.0) an->grad[i] += n.grad[i];
  });
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  if (shape_numel(shape) != a.numel())
    fail_usage("reshape: numel mismatch " + shape_str(a.shape()) + " -> " +
               shape_str(shape));
  auto an = a.node();
  return make_op(std::move(shape), a.values(), {a}, [an](TensorNode& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
  });
}

Tensor transpose2d(const Tensor& a) {
  if (a.ndim() != 2) fail_usage("transpose2d: rank-2 tensor required");
  const int m = a.dim(0), k = a.dim(1);
  std::vector<double> v(static_cast<size_t>(m) * k);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) v[static_cast<size_t>(j) * m + i] = a.data()[static_cast<size_t>(i) * k + j];
  auto an = a.node();
  return make_op({k, m}, std::move(v), {a}, [an, m, k](TensorNode& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j)
        an->grad[static_cast<size_t>(i) * k + j] +=
            n.grad[static_cast<size_t>(j) * m + i];
  });
}

Tensor slice_cols(const Tensor& a, int start, int len) {
  if (a.ndim() != 2) fail_usage("slice_cols: rank-2 tensor required");
  const int rows = a.dim(0), cols = a.dim(1);
  if (start < 0 || len <= 0 || start + len > cols)
    fail_usage("slice_cols: range out of bounds");
  std::vector<double> v(static_cast<size_t>(rows) * len);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < len; ++c)
      v[static_cast<size_t>(r) * len + c] =
          a.data()[static_cast<size_t>(r) * cols + start + c];
  auto an = a.node();
  return make_op({rows, len}, std::move(v), {a},
                 [an, rows, cols, start, len](TensorNode& n) {
                   if (!an->requires_grad) return;
                   an->ensure_grad();
                   for (int r = 0; r < rows; ++r)
                     for (int c = 0; c < len; ++c)
                       an->grad[static_cast<size_t>(r) * cols + start + c] +=
                           n.grad[static_cast<size_t>(r) * len + c];
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail_usage("concat_cols: empty input");
  const int rows = parts[0].dim(0);
  int total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(0) != rows)
      fail_usage("concat_cols: row count mismatch");
    total += p.dim(1);
  }
  std::vector<double> v(static_cast<size_t>(rows) * total);
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.dim(1);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < w; ++c)
        v[static_cast<size_t>(r) * total + off + c] =
            p.data()[static_cast<size_t>(r) * w + c];
    off += w;
  }
  std::vector<std::shared_ptr<TensorNode>> nodes;
  std::vector<int> widths;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    widths.push_back(p.dim(1));
  }
  return make_op({rows, total}, std::move(v), parts,
                 [nodes, widths, rows, total](TensorNode& n) {
                   int off2 = 0;
                   for (size_t pi = 0; pi < nodes.size(); ++pi) {
                     const int w = widths[pi];
                     if (nodes[pi]->requires_grad) {
                       nodes[pi]->ensure_grad();
                       for (int r = 0; r < rows; ++r)
                         for (int c = 0; c < w; ++c)
                           nodes[pi]->grad[static_cast<size_t>(r) * w + c] +=
                               n.grad[static_cast<size_t>(r) * total + off2 + c];
                     }
                     off2 += w;
                   }
                 });
}

Tensor chw_to_seq(const Tensor& a) {
  if (a.ndim() != 3) fail_usage("chw_to_seq: rank-3 tensor required");
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  std::vector<double> v(static_cast<size_t>(C) * H * W);
  for (int c = 0; c < C; ++c)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w)
        v[(static_cast<size_t>(h) * W + w) * C + c] =
            a.data()[(static_cast<size_t>(c) * H + h) * W + w];
  auto an = a.node();
  return make_op({H * W, C}, std::move(v), {a}, [an, C, H, W](TensorNode& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          an->grad[(static_cast<size_t>(c) * H + h) * W + w] +=
              n.grad[(static_cast<size_t>(h) * W + w) * C + c];
  });
}

Tensor seq_to_chw(const Tensor& a, int h, int w) {
  if (a.ndim() != 2 || a.dim(0) != h * w)
    fail_usage("seq_to_chw: sequence length must equal h*w");
  const int C = a.dim(1);
  std::vector<double> v(static_cast<size_t>(C) * h * w);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        v[(static_cast<size_t>(c) * h + y) * w + x] =
            a.data()[(static_cast<size_t>(y) * w + x) * C + c];
  auto an = a.node();
  return make_op({C, h, w}, std::move(v), {a}, [an, C, h, w](TensorNode& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          an->grad[(static_cast<size_t>(y) * w + x) * C + c] +=
              n.grad[(static_cast<size_t>(c) * h + y) * w + x];
  });
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  auto an = a.node();
  return make_op({1}, {s}, {a}, [an](TensorNode& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (auto& g : an->grad) g += n.grad[0];
  });
}

Tensor mean_all(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  double s = 0.0;
  for (double x : a.values()) s += x;
  auto an = a.node();
  return make_op({1}, {s * inv}, {a}, [an, inv](TensorNode& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (auto& g : an->grad) g += n.grad[0] * inv;
  });
}

Tensor mean_over_height(const Tensor& a) {
  if (a.ndim() != 3) fail_usage("mean_over_height: rank-3 tensor required");
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  std::vector<double> v(static_cast<size_t>(C) * W, 0.0);
  for (int c = 0; c < C; ++c)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w)
        v[static_cast<size_t>(c) * W + w] +=
            a.data()[(static_cast<size_t>(c) * H + h) * W + w];
  const double inv = 1.0 / H;
  for (auto& x : v) x *= inv;
  auto an = a.node();
  return make_op({C, W}, std::move(v), {a}, [an, C, H, W, inv](TensorNode& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          an->grad[(static_cast<size_t>(c) * H + h) * W + w] +=
              n.grad[static_cast<size_t>(c) * W + w] * inv;
  });
}

Tensor mean_spatial(const Tensor& a) {
  if (a.ndim() != 3) fail_usage("mean_spatial: rank-3 tensor required");
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  const size_t hw = static_cast<size_t>(H) * W;
  std::vector<double> v(C, 0.0);
  for (int c = 0; c < C; ++c) {
    double s = 0.0;
    for (size_t i = 0; i < hw; ++i) s += a.data()[c * hw + i];
    v[c] = s / static_cast<double>(hw);
  }
  auto an = a.node();
  return make_op({C}, std::move(v), {a}, [an, C, hw](TensorNode& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const double inv = 1.0 / static_cast<double>(hw);
    for (int c = 0; c < C; ++c)
      for (size_t i = 0; i < hw; ++i)
        an->grad[c * hw + i] += n.grad[c] * inv;
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    fail_usage("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
               shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), nn = b.dim(1);
  std::vector<double> v(static_cast<size_t>(m) * nn);
  {
    ConstMap A(a.data(), m, k), B(b.data(), k, nn);
    MutMap C(v.data(), m, nn);
    C.noalias() = A * B;
  }
  auto an = a.node();
  auto bn = b.node();
  return make_op({m, nn}, std::move(v), {a, b}, [an, bn, m, k, nn](TensorNode& n) {
    ConstMap G(n.grad.data(), m, nn);
    if (an->requires_grad) {
      an->ensure_grad();
      ConstMap B(bn->value.data(), k, nn);
      MutMap dA(an->grad.data(), m, k);
      dA.noalias() += G * B.transpose();
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      ConstMap A(an->value.data(), m, k);
      MutMap dB(bn->grad.data(), k, nn);
      dB.noalias() += A.transpose() * G;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(0))
    fail_usage("linear: incompatible shapes " + shape_str(x.shape()) + " x " +
               shape_str(w.shape()));
  const int n = x.dim(0), din = x.dim(1), dout = w.dim(1);
  if (b.defined() && (b.ndim() != 1 || b.dim(0) != dout))
    fail_usage("linear: bias shape mismatch");
  std::vector<double> v(static_cast<size_t>(n) * dout);
  {
    ConstMap X(x.data(), n, din), W(w.data(), din, dout);
    MutMap Y(v.data(), n, dout);
    Y.noalias() = X * W;
  }
  if (b.defined()) {
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < dout; ++c) v[static_cast<size_t>(r) * dout + c] += b.data()[c];
  }
  auto xn = x.node();
  auto wn = w.node();
  auto bneck = b.defined() ? b.node() : nullptr;
  return make_op({n, dout}, std::move(v), {x, w, b},
                 [xn, wn, bneck, n, din, dout](TensorNode& nd) {
                   ConstMap G(nd.grad.data(), n, dout);
                   if (xn->requires_grad) {
                     xn->ensure_grad();
                     ConstMap W(wn->value.data(), din, dout);
                     MutMap dX(xn->grad.data(), n, din);
                     dX.noalias() += G * W.transpose();
                   }
                   if (wn->requires_grad) {
                     wn->ensure_grad();
                     ConstMap X(xn->value.data(), n, din);
                     MutMap dW(wn->grad.data(), din, dout);
                     dW.noalias() += X.transpose() * G;
                   }
                   if (bneck && bneck->requires_grad) {
                     bneck->ensure_grad();
                     for (int r = 0; r < n; ++r)
                       for (int c = 0; c < dout; ++c)
                         bneck->grad[c] += nd.grad[static_cast<size_t>(r) * dout + c];
                   }
                 });
}

namespace {

Tensor softmax_impl(const Tensor& x, const std::vector<uint8_t>* allow) {
  if (x.ndim() != 2) fail_usage("softmax: rank-2 tensor required");
  const int rows = x.dim(0), cols = x.dim(1);
  if (cols == 0) fail_usage("softmax: empty axis");
  if (allow && allow->size() != static_cast<size_t>(rows) * cols)
    fail_usage("softmax: mask size mismatch");
  std::vector<double> v(static_cast<size_t>(rows) * cols, 0.0);
  for (int r = 0; r < rows; ++r) {
    const double* xr = x.data() + static_cast<size_t>(r) * cols;
    double* vr = v.data() + static_cast<size_t>(r) * cols;
    double mx = kNegInf;
    for (int c = 0; c < cols; ++c)
      if ((!allow || (*allow)[static_cast<size_t>(r) * cols + c]) && xr[c] > mx)
        mx = xr[c];
    if (mx == kNegInf) fail_usage("softmax: fully masked row");
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      if (!allow || (*allow)[static_cast<size_t>(r) * cols + c]) {
        vr[c] = std::exp(xr[c] - mx);
        z += vr[c];
      }
    }
    for (int c = 0; c < cols; ++c) vr[c] /= z;
  }
  auto xn = x.node();
  // Backward needs no mask: masked outputs are exactly 0, so they drop out of
  // the softmax jacobian on their own.
  return make_op({rows, cols}, std::move(v), {x},
                 [xn, rows, cols](TensorNode& n) {
                   if (!xn->requires_grad) return;
                   xn->ensure_grad();
                   // dx = y * (g - sum(g*y)) per row; masked entries have y=0.
                   for (int r = 0; r < rows; ++r) {
                     const double* y = n.value.data() + static_cast<size_t>(r) * cols;
                     const double* g = n.grad.data() + static_cast<size_t>(r) * cols;
                     double dot = 0.0;
                     for (int c = 0; c < cols; ++c) dot += g[c] * y[c];
                     double* dx = xn->grad.data() + static_cast<size_t>(r) * cols;
                     for (int c = 0; c < cols; ++c) dx[c] += y[c] * (g[c] - dot);
                   }
                 });
}

}  // namespace

Tensor softmax_rows(const Tensor& x) { return softmax_impl(x, nullptr); }

Tensor softmax_rows_masked(const Tensor& x, const std::vector<uint8_t>& allow) {
  return softmax_impl(x, &allow);
}

Tensor log_softmax_rows(const Tensor& x) {
  if (x.ndim() != 2) fail_usage("log_softmax: rank-2 tensor required");
  const int rows = x.dim(0), cols = x.dim(1);
  if (cols == 0) fail_usage("log_softmax: empty axis");
  std::vector<double> v(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    const double* xr = x.data() + static_cast<size_t>(r) * cols;
    double* vr = v.data() + static_cast<size_t>(r) * cols;
    double mx = xr[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) z += std::exp(xr[c] - mx);
    const double lz = mx + std::log(z);
    for (int c = 0; c < cols; ++c) vr[c] = xr[c] - lz;
  }
  auto xn = x.node();
  return make_op({rows, cols}, std::move(v), {x},
                 [xn, rows, cols](TensorNode& n) {
                   if (!xn->requires_grad) return;
                   xn->ensure_grad();
                   // dx = g - softmax * sum(g) per row.
                   for (int r = 0; r < rows; ++r) {
                     const double* lp = n.value.data() + static_cast<size_t>(r) * cols;
                     const double* g = n.grad.data() + static_cast<size_t>(r) * cols;
                     double gsum = 0.0;
                     for (int c = 0; c < cols; ++c) gsum += g[c];
                     double* dx = xn->grad.data() + static_cast<size_t>(r) * cols;
                     for (int c = 0; c < cols; ++c)
                       dx[c] += g[c] - std::exp(lp[c]) * gsum;
                   }
                 });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps) {
  if (x.ndim() != 2) fail_usage("layer_norm: rank-2 tensor required");
  const int rows = x.dim(0), cols = x.dim(1);
  if (cols == 0) fail_usage("layer_norm: empty axis");
  if (gamma.numel() != cols || beta.numel() != cols)
    fail_usage("layer_norm: affine shape mismatch");
  std::vector<double> v(static_cast<size_t>(rows) * cols);
  std::vector<double> xhat(static_cast<size_t>(rows) * cols);
  std::vector<double> inv_sd(rows);
  for (int r = 0; r < rows; ++r) {
    const double* xr = x.data() + static_cast<size_t>(r) * cols;
    double mean = 0.0;
    for (int c = 0; c < cols; ++c) mean += xr[c];
    mean /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= cols;
    const double isd = 1.0 / std::sqrt(var + eps);
    inv_sd[r] = isd;
    for (int c = 0; c < cols; ++c) {
      const double h = (xr[c] - mean) * isd;
      xhat[static_cast<size_t>(r) * cols + c] = h;
      v[static_cast<size_t>(r) * cols + c] = gamma.data()[c] * h + beta.data()[c];
    }
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
  auto isdv = std::make_shared<std::vector<double>>(std::move(inv_sd));
  return make_op(
      {rows, cols}, std::move(v), {x, gamma, beta},
      [xn, gn, bn, xh, isdv, rows, cols](TensorNode& n) {
        for (int r = 0; r < rows; ++r) {
          const double* g = n.grad.data() + static_cast<size_t>(r) * cols;
          const double* h = xh->data() + static_cast<size_t>(r) * cols;
          if (gn->requires_grad) {
            gn->ensure_grad();
            for (int c = 0; c < cols; ++c) gn->grad[c] += g[c] * h[c];
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (int c = 0; c < cols; ++c) bn->grad[c] += g[c];
          }
          if (xn->requires_grad) {
            xn->ensure_grad();
            double m1 = 0.0, m2 = 0.0;  // mean(dh), mean(dh*h)
            for (int c = 0; c < cols; ++c) {
              const double dh = g[c] * gn->value[c];
              m1 += dh;
              m2 += dh * h[c];
            }
            m1 /= cols;
            m2 /= cols;
            double* dx = xn->grad.data() + static_cast<size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) {
              const double dh = g[c] * gn->value[c];
              dx[c] += (*isdv)[r] * (dh - m1 - h[c] * m2);
            }
          }
        }
      });
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma,
                  const Tensor& beta, double eps) {
  if (x.ndim() != 3) fail_usage("group_norm: rank-3 tensor required");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (groups < 1 || C % groups != 0)
    fail_usage("group_norm: channels must divide evenly into groups");
  if (gamma.numel() != C || beta.numel() != C)
    fail_usage("group_norm: affine shape mismatch");
  const int cpg = C / groups;
  const size_t hw = static_cast<size_t>(H) * W;
  const size_t gsz = cpg * hw;
  std::vector<double> v(x.values().size());
  std::vector<double> xhat(x.values().size());
  std::vector<double> inv_sd(groups);
  for (int g = 0; g < groups; ++g) {
    const double* xg = x.data() + g * gsz;
    double mean = 0.0;
    for (size_t i = 0; i < gsz; ++i) mean += xg[i];
    mean /= static_cast<double>(gsz);
    double var = 0.0;
    for (size_t i = 0; i < gsz; ++i) var += (xg[i] - mean) * (xg[i] - mean);
    var /= static_cast<double>(gsz);
    const double isd = 1.0 / std::sqrt(var + eps);
    inv_sd[g] = isd;
    for (int cc = 0; cc < cpg; ++cc) {
      const int c = g * cpg + cc;
      for (size_t i = 0; i < hw; ++i) {
        const size_t idx = c * hw + i;
        const double h = (x.data()[idx] - mean) * isd;
        xhat[idx] = h;
        v[idx] = gamma.data()[c] * h + beta.data()[c];
      }
    }
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
  auto isdv = std::make_shared<std::vector<double>>(std::move(inv_sd));
  return make_op(
      x.shape(), std::move(v), {x, gamma, beta},
      [xn, gn, bn, xh, isdv, C, groups, cpg, hw, gsz](TensorNode& n) {
        if (gn->requires_grad) {
          gn->ensure_grad();
          for (int c = 0; c < C; ++c)
            for (size_t i = 0; i < hw; ++i)
              gn->grad[c] += n.grad[c * hw + i] * (*xh)[c * hw + i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int c = 0; c < C; ++c)
            for (size_t i = 0; i < hw; ++i) bn->grad[c] += n.grad[c * hw + i];
        }
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int g = 0; g < groups; ++g) {
          double m1 = 0.0, m2 = 0.0;
          for (int cc = 0; cc < cpg; ++cc) {
            const int c = g * cpg + cc;
            for (size_t i = 0; i < hw; ++i) {
              const size_t idx = c * hw + i;
              const double dh = n.grad[idx] * gn->value[c];
              m1 += dh;
              m2 += dh * (*xh)[idx];
            }
          }
          m1 /= static_cast<double>(gsz);
          m2 /= static_cast<double>(gsz);
          for (int cc = 0; cc < cpg; ++cc) {
            const int c = g * cpg + cc;
            for (size_t i = 0; i < hw; ++i) {
              const size_t idx = c * hw + i;
              const double dh = n.grad[idx] * gn->value[c];
              xn->grad[idx] += (*isdv)[g] * (dh - m1 - (*xh)[idx] * m2);
            }
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride_h,
              int stride_w, int pad_h, int pad_w) {
  if (x.ndim() != 3 || w.ndim() != 4)
    fail_usage("conv2d: x must be [C,H,W] and w [Cout,Cin,kh,kw]");
  const int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != Cin)
    fail_usage("conv2d: input channels " + std::to_string(Cin) +
               " != kernel channels " + std::to_string(w.dim(1)));
  if (b.defined() && b.numel() != Cout) fail_usage("conv2d: bias shape mismatch");
  const int Hout = conv_out_dim(H, kh, stride_h, pad_h);
  const int Wout = conv_out_dim(W, kw, stride_w, pad_w);
  if (Hout < 1 || Wout < 1)
    fail_usage("conv2d: input " + std::to_string(H) + "x" + std::to_string(W) +
               " too small for kernel/stride");
  const int patch = Cin * kh * kw;
  const size_t npos = static_cast<size_t>(Hout) * Wout;
  // im2col; zero-padding handled by leaving absent taps at 0.
  auto col = std::make_shared<std::vector<double>>(npos * patch, 0.0);
  for (int oy = 0; oy < Hout; ++oy) {
    for (int ox = 0; ox < Wout; ++ox) {
      double* crow = col->data() + (static_cast<size_t>(oy) * Wout + ox) * patch;
      for (int ci = 0; ci < Cin; ++ci) {
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * stride_h - pad_h + ky;
          if (iy < 0 || iy >= H) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox * stride_w - pad_w + kx;
            if (ix < 0 || ix >= W) continue;
            crow[(static_cast<size_t>(ci) * kh + ky) * kw + kx] =
                x.data()[(static_cast<size_t>(ci) * H + iy) * W + ix];
          }
        }
      }
    }
  }
  // out[npos, Cout] = col x w^T, then rearrange to [Cout,Hout,Wout].
  std::vector<double> outmat(npos * Cout);
  {
    ConstMap Col(col->data(), static_cast<int>(npos), patch);
    ConstMap Wm(w.data(), Cout, patch);
    MutMap O(outmat.data(), static_cast<int>(npos), Cout);
    O.noalias() = Col * Wm.transpose();
  }
  std::vector<double> v(static_cast<size_t>(Cout) * npos);
  for (size_t p = 0; p < npos; ++p)
    for (int co = 0; co < Cout; ++co)
      v[co * npos + p] = outmat[p * Cout + co] + (b.defined() ? b.data()[co] : 0.0);
  auto xn = x.node();
  auto wn = w.node();
  auto bnode = b.defined() ? b.node() : nullptr;
  return make_op(
      {Cout, Hout, Wout}, std::move(v), {x, w, b},
      [xn, wn, bnode, col, Cin, H, W, Cout, kh, kw, Hout, Wout, stride_h,
       stride_w, pad_h, pad_w, patch, npos](TensorNode& n) {
        // dOut as [npos, Cout]
        std::vector<double> gmat(npos * Cout);
        for (size_t p = 0; p < npos; ++p)
          for (int co = 0; co < Cout; ++co)
            gmat[p * Cout + co] = n.grad[co * npos + p];
        if (bnode && bnode->requires_grad) {
          bnode->ensure_grad();
          for (size_t p = 0; p < npos; ++p)
            for (int co = 0; co < Cout; ++co)
              bnode->grad[co] += gmat[p * Cout + co];
        }
        if (wn->requires_grad) {
          wn->ensure_grad();
          ConstMap G(gmat.data(), static_cast<int>(npos), Cout);
          ConstMap Col(col->data(), static_cast<int>(npos), patch);
          MutMap dW(wn->grad.data(), Cout, patch);
          dW.noalias() += G.transpose() * Col;
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          std::vector<double> dcol(npos * patch);
          {
            ConstMap G(gmat.data(), static_cast<int>(npos), Cout);
            ConstMap Wm(wn->value.data(), Cout, patch);
            MutMap dC(dcol.data(), static_cast<int>(npos), patch);
            dC.noalias() = G * Wm;
          }
          for (int oy = 0; oy < Hout; ++oy) {
            for (int ox = 0; ox < Wout; ++ox) {
              const double* crow =
                  dcol.data() + (static_cast<size_t>(oy) * Wout + ox) * patch;
              for (int ci = 0; ci < Cin; ++ci) {
                for (int ky = 0; ky < kh; ++ky) {
                  const int iy = oy * stride_h - pad_h + ky;
                  if (iy < 0 || iy >= H) continue;
                  for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox * stride_w - pad_w + kx;
                    if (ix < 0 || ix >= W) continue;
                    xn->grad[(static_cast<size_t>(ci) * H + iy) * W + ix] +=
                        crow[(static_cast<size_t>(ci) * kh + ky) * kw + kx];
                  }
                }
              }
            }
          }
        }
      });
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  if (table.ndim() != 2) fail_usage("embedding: table must be [c,d]");
  const int c = table.dim(0), d = table.dim(1);
  const int L = static_cast<int>(ids.size());
  std::vector<double> v(static_cast<size_t>(L) * d);
  for (int i = 0; i < L; ++i) {
    if (ids[i] < 0 || ids[i] >= c)
      fail_usage("embedding: id " + std::to_string(ids[i]) + " out of range");
    std::copy_n(table.data() + static_cast<size_t>(ids[i]) * d, d,
                v.data() + static_cast<size_t>(i) * d);
  }
  auto tn = table.node();
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  return make_op({L, d}, std::move(v), {table}, [tn, ids_copy, d](TensorNode& n) {
    if (!tn->requires_grad) return;
    tn->ensure_grad();
    for (size_t i = 0; i < ids_copy->size(); ++i)
      for (int j = 0; j < d; ++j)
        tn->grad[static_cast<size_t>((*ids_copy)[i]) * d + j] +=
            n.grad[i * d + j];
  });
}

Tensor nll_rows(const Tensor& log_probs, const std::vector<int>& targets,
                int ignore_id) {
  if (log_probs.ndim() != 2) fail_usage("nll_rows: rank-2 tensor required");
  const int rows = log_probs.dim(0), cols = log_probs.dim(1);
  if (static_cast<int>(targets.size()) != rows)
    fail_usage("nll_rows: target length " + std::to_string(targets.size()) +
               " != logits length " + std::to_string(rows));
  double s = 0.0;
  int count = 0;
  for (int r = 0; r < rows; ++r) {
    if (targets[r] == ignore_id) continue;
    if (targets[r] < 0 || targets[r] >= cols)
      fail_usage("nll_rows: target id out of range");
    s -= log_probs.data()[static_cast<size_t>(r) * cols + targets[r]];
    ++count;
  }
  if (count == 0) fail_usage("nll_rows: no scored positions");
  auto ln = log_probs.node();
  auto tg = std::make_shared<std::vector<int>>(targets);
  const double inv = 1.0 / count;
  return make_op({1}, {s * inv}, {log_probs},
                 [ln, tg, cols, ignore_id, inv](TensorNode& n) {
                   if (!ln->requires_grad) return;
                   ln->ensure_grad();
                   for (size_t r = 0; r < tg->size(); ++r) {
                     if ((*tg)[r] == ignore_id) continue;
                     ln->grad[r * cols + (*tg)[r]] -= n.grad[0] * inv;
                   }
                 });
}

Tensor ctc_loss_logprobs(const Tensor& log_probs, const std::vector<int>& target,
                         int blank_id) {
  if (log_probs.ndim() != 2) fail_usage("ctc_loss: rank-2 tensor required");
  const int T = log_probs.dim(0), c = log_probs.dim(1);
  const int L = static_cast<int>(target.size());
  for (int id : target) {
    if (id < 0 || id >= c) fail_usage("ctc_loss: target id out of range");
    if (id == blank_id) fail_usage("ctc_loss: target may not contain blank");
  }
  int repeats = 0;
  for (int i = 1; i < L; ++i)
    if (target[i] == target[i - 1]) ++repeats;
  if (T < L + repeats)
    fail_data("ctc_loss: target of length " + std::to_string(L) + " (" +
              std::to_string(repeats) + " repeats) infeasible for " +
              std::to_string(T) + " frames");
  // Blank-augmented label sequence: blank, l1, blank, l2, ..., lL, blank.
  const int S = 2 * L + 1;
  std::vector<int> lab(S, blank_id);
  for (int i = 0; i < L; ++i) lab[2 * i + 1] = target[i];
  const double* lp = log_probs.data();
  auto at = [&](int t, int k) { return lp[static_cast<size_t>(t) * c + k]; };

  auto alpha = std::make_shared<std::vector<double>>(
      static_cast<size_t>(T) * S, kNegInf);
  auto A = [&](int t, int s) -> double& {
    return (*alpha)[static_cast<size_t>(t) * S + s];
  };
  A(0, 0) = at(0, lab[0]);
  if (S > 1) A(0, 1) = at(0, lab[1]);
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double acc = A(t - 1, s);
      if (s >= 1) acc = logaddexp(acc, A(t - 1, s - 1));
      if (s >= 2 && lab[s] != blank_id && lab[s] != lab[s - 2])
        acc = logaddexp(acc, A(t - 1, s - 2));
      A(t, s) = acc == kNegInf ? kNegInf : acc + at(t, lab[s]);
    }
  }
  double log_p = A(T - 1, S - 1);
  if (S > 1) log_p = logaddexp(log_p, A(T - 1, S - 2));
  if (log_p == kNegInf) fail_numeric("ctc_loss: zero-probability target");

  auto ln = log_probs.node();
  auto lab_sh = std::make_shared<std::vector<int>>(std::move(lab));
  return make_op(
      {1}, {-log_p}, {log_probs},
      [ln, alpha, lab_sh, T, c, S, blank_id, log_p](TensorNode& n) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const auto& lab2 = *lab_sh;
        const double* lp2 = ln->value.data();
        auto at2 = [&](int t, int k) { return lp2[static_cast<size_t>(t) * c + k]; };
        // beta recursion (suffix sums, emission included).
        std::vector<double> beta(static_cast<size_t>(T) * S, kNegInf);
        auto B = [&](int t, int s) -> double& {
          return beta[static_cast<size_t>(t) * S + s];
        };
        B(T - 1, S - 1) = at2(T - 1, lab2[S - 1]);
        if (S > 1) B(T - 1, S - 2) = at2(T - 1, lab2[S - 2]);
        for (int t = T - 2; t >= 0; --t) {
          for (int s = S - 1; s >= 0; --s) {
            double acc = B(t + 1, s);
            if (s + 1 < S) acc = logaddexp(acc, B(t + 1, s + 1));
            if (s + 2 < S && lab2[s + 2] != blank_id && lab2[s + 2] != lab2[s])
              acc = logaddexp(acc, B(t + 1, s + 2));
            B(t, s) = acc == kNegInf ? kNegInf : acc + at2(t, lab2[s]);
          }
        }
        // d(-logP)/d lp[t,k] = -exp(logsum_{s: lab[s]=k} (alpha+beta) - logP - lp[t,k])
        const double g0 = n.grad[0];
        auto A2 = [&](int t, int s) { return (*alpha)[static_cast<size_t>(t) * S + s]; };
        for (int t = 0; t < T; ++t) {
          std::vector<double> per_class(c, kNegInf);
          for (int s = 0; s < S; ++s) {
            const double ab = A2(t, s) + B(t, s);
            if (ab == kNegInf) continue;
            per_class[lab2[s]] = logaddexp(per_class[lab2[s]], ab);
          }
          for (int k = 0; k < c; ++k) {
            if (per_class[k] == kNegInf) continue;
            const double g = -std::exp(per_class[k] - log_p - at2(t, k));
            ln->grad[static_cast<size_t>(t) * c + k] += g0 * g;
          }
        }
      });
}

Tensor convex_combine(const std::vector<Tensor>& items, const Tensor& weights) {
  if (items.empty()) fail_usage("convex_combine: empty item list");
  if (weights.numel() != static_cast<int64_t>(items.size()))
    fail_usage("convex_combine: weight count " + std::to_string(weights.numel()) +
               " != item count " + std::to_string(items.size()));
  const auto& shape = items[0].shape();
  for (const auto& it : items)
    if (it.shape() != shape) fail_usage("convex_combine: item shape mismatch");
  const size_t numel = items[0].values().size();
  std::vector<double> v(numel, 0.0);
  for (size_t i = 0; i < items.size(); ++i) {
    const double w = weights.data()[i];
    const double* src = items[i].data();
    for (size_t e = 0; e < numel; ++e) v[e] += w * src[e];
  }
  std::vector<Tensor> inputs = items;
  inputs.push_back(weights);
  std::vector<std::shared_ptr<TensorNode>> item_nodes;
  for (const auto& it : items) item_nodes.push_back(it.node());
  auto wn = weights.node();
  return make_op(shape, std::move(v), inputs,
                 [item_nodes, wn, numel](TensorNode& n) {
                   for (size_t i = 0; i < item_nodes.size(); ++i) {
                     const auto& in = item_nodes[i];
                     if (in->requires_grad) {
                       in->ensure_grad();
                       const double w = wn->value[i];
                       for (size_t e = 0; e < numel; ++e)
                         in->grad[e] += w * n.grad[e];
                     }
                     if (wn->requires_grad) {
                       wn->ensure_grad();
                       double dot = 0.0;
                       for (size_t e = 0; e < numel; ++e)
                         dot += in->value[e] * n.grad[e];
                       wn->grad[i] += dot;
                     }
                   }
                 });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) fail_usage("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(x.values().size());
  std::vector<double> v(x.values().size());
  for (size_t i = 0; i < v.size(); ++i) {
    const double m = rng.uniform() < rate ? 0.0 : 1.0 / keep;
    (*mask)[i] = m;
    v[i] = x.data()[i] * m;
  }
  auto xn = x.node();
  return make_op(x.shape(), std::move(v), {x}, [xn, mask](TensorNode& n) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      xn->grad[i] += n.grad[i] * (*mask)[i];
  });
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in,
                            const AttentionParams& p, int heads,
                            const std::vector<uint8_t>* allow) {
  const int d = q_in.dim(1);
  if (d % heads != 0)
    fail_usage("attention: model dim " + std::to_string(d) +
               " not divisible by " + std::to_string(heads) + " heads");
  const int dh = d / heads;
  Tensor q = linear(q_in, p.wq, p.bq);
  Tensor k = linear(kv_in, p.wk, p.bk);
  Tensor v = linear(kv_in, p.wv, p.bv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> ctx;
  ctx.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose2d(kh)), inv_sqrt);
    Tensor probs = allow ? softmax_rows_masked(scores, *allow)
                         : softmax_rows(scores);
    ctx.push_back(matmul(probs, vh));
  }
  return linear(concat_cols(ctx), p.wo, p.bo);
}

Tensor sinusoidal_positions(int len, int d) {
  std::vector<double> v(static_cast<size_t>(len) * d, 0.0);
  for (int pos = 0; pos < len; ++pos) {
    for (int i = 0; i * 2 < d; ++i) {
      const double freq = std::pow(10000.0, -2.0 * i / d);
      v[static_cast<size_t>(pos) * d + 2 * i] = std::sin(pos * freq);
      if (2 * i + 1 < d)
        v[static_cast<size_t>(pos) * d + 2 * i + 1] = std::cos(pos * freq);
    }
  }
  return Tensor({len, d}, std::move(v));
}

}  // namespace uktr::ops
