// Copyright 2026 The UKTR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace uktr::ops {

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);

// ---- shape ----
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor transpose2d(const Tensor& a);                       // [m,n] -> [n,m]
Tensor slice_cols(const Tensor& a, int start, int len);    // [n,m] -> [n,len]
Tensor concat_cols(const std::vector<Tensor>& parts);      // [n,mi] -> [n,sum]
// [C,H,W] -> [H*W, C] sequence of spatial positions (row-major over h, w).
Tensor chw_to_seq(const Tensor& a);
// [T, C] -> [C, 1, T] or given h: [T*?]... inverse of chw_to_seq:
Tensor seq_to_chw(const Tensor& a, int h, int w);          // [h*w,C] -> [C,h,w]

// ---- reductions ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor mean_over_height(const Tensor& a);   // [C,H,W] -> [C,W]
Tensor mean_spatial(const Tensor& a);       // [C,H,W] -> [C]

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);           // [m,k]x[k,n]
// x:[n,din] w:[din,dout] b:[dout] -> [n,dout]; pass undefined b to skip bias.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- normalization / softmax ----
Tensor softmax_rows(const Tensor& x);
// Masked softmax: weight is exactly 0 where allow[r*cols+c]==0; each row must
// have at least one allowed entry.
Tensor softmax_rows_masked(const Tensor& x, const std::vector<uint8_t>& allow);
Tensor log_softmax_rows(const Tensor& x);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);
// Group normalization over [C,H,W]; channels must divide evenly into groups.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma,
                  const Tensor& beta, double eps = 1e-5);

// ---- convolution ----
// x:[Cin,H,W] w:[Cout,Cin,kh,kw] b:[Cout] (optional, undefined to skip).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride_h,
              int stride_w, int pad_h, int pad_w);
inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// ---- embedding / losses ----
Tensor embedding(const Tensor& table, const std::vector<int>& ids);  // [L,d]
// Mean negative log-likelihood of targets under row-wise log-probs,
// skipping positions where targets[i] == ignore_id (pass -1 to disable).
Tensor nll_rows(const Tensor& log_probs, const std::vector<int>& targets,
                int ignore_id);
// CTC negative log-likelihood of `target` under time-major log-probs [T,c],
// computed with the log-space forward algorithm over the blank-augmented
// sequence. Throws Error(kData) if the target is infeasible for T.
Tensor ctc_loss_logprobs(const Tensor& log_probs,
                         const std::vector<int>& target, int blank_id);

// ---- weighted aggregation ----
// Sum_i weights[i] * items[i] over equally-shaped tensors; weights has numel
// = items.size(). Gradients flow to both the items and the weights. A one-hot
// weight vector reproduces the selected item bit-exactly.
Tensor convex_combine(const std::vector<Tensor>& items, const Tensor& weights);

// ---- dropout ----
// Inverted dropout; identity when training == false or rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);

// ---- attention ----
struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // each w: [d,d], b: [d]
};
// q_in:[Tq,d], kv_in:[Tk,d]. allow (optional) is a Tq*Tk mask; unmasked rows
// of each head's attention sum to 1 and masked positions get exactly 0.
Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in,
                            const AttentionParams& p, int heads,
                            const std::vector<uint8_t>* allow = nullptr);

// Fixed sinusoidal positional encoding table, shape [len,d], no parameters.
Tensor sinusoidal_positions(int len, int d);

}  // namespace uktr::ops
