// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "htc/rng.hpp"

namespace htc {

using Mat = Eigen::MatrixXd;

/// Handle to a tape node.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Eager forward tape with reverse-mode backward. Values are computed at op
/// creation, so intermediate results can be inspected while the graph is
/// still being built (the positive-sample hard mask depends on that).
/// Nodes created after the loss node are ignored by backward; gradients of
/// constant subtrees are never materialized.
class Tape {
 public:
  Var leaf(Mat value, bool needs_grad);
  Var constant(Mat value) { return leaf(std::move(value), false); }

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  /// Gradient of the last backward() target w.r.t. v; zeros if untouched.
  Mat grad(Var v) const;

  // ---- arithmetic ----
  Var matmul(Var a, Var b);     // A B
  Var matmul_nt(Var a, Var b);  // A B^T
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_rowvec(Var a, Var row);  // row is 1 x cols, broadcast over rows
  Var hadamard(Var a, Var b);
  Var scale(Var a, double c);
  Var add_const(Var a, const Mat& c);
  Var emax(Var a, Var b);  // elementwise max; ties route gradient to a

  // ---- nonlinearities ----
  Var relu(Var a);
  Var gelu(Var a);  // exact erf form
  Var sigmoid(Var a);
  Var row_softmax(Var a);

  // ---- structure ----
  Var gather_rows(Var x, std::vector<int> idx);
  Var block_rows(Var x, int r0, int n);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var row_scale(Var x, Var s);  // s is n x 1; scales row i of x by s(i)
  /// bias(i,j) = table(idx[i][j], 0); backward scatter-adds into the table.
  Var gather_scalar_table(Var table, std::vector<std::vector<int>> idx);

  // ---- normalization / regularization ----
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var row_l2_normalize(Var x);  // throws ZeroNormVector
  Var dropout(Var x, double rate, Rng& rng);

  /// Multi-head scaled-dot attention over one sequence. q,k,v are n x d
  /// (already projected); heads are contiguous column blocks. Key positions
  /// with key_keep_mask == 0 receive no attention mass. logit_bias (n x n),
  /// when valid, is added to every head's logits and receives gradient.
  /// attn_out, when given, collects the per-head softmax rows.
  Var mha(Var q, Var k, Var v, int n_heads, const Mat* key_keep_mask,
          Var logit_bias, std::vector<Mat>* attn_out = nullptr);

  /// Forward value = hard; backward passes d(out) * grad_mask into soft.
  Var straight_through(Var soft, const Mat& hard, const Mat& grad_mask);

  // ---- losses (scalar 1x1 nodes) ----
  /// Per-cell binary cross entropy, probabilities clamped to [eps, 1-eps],
  /// summed over cells and divided by the number of rows.
  Var bce_mean_sum(Var probs, const Mat& targets, double clamp_eps = 1e-7);
  /// NT-Xent from a 2N x 2N similarity-logit matrix (already divided by
  /// tau); pair of row m is (m + N) mod 2N; diagonal excluded.
  Var nt_xent_from_sim(Var sim_over_tau);
  Var weighted_sum(const std::vector<Var>& scalars,
                   const std::vector<double>& weights);

  void backward(Var loss);
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;  // empty until touched by backward
    bool needs_grad = false;
    std::function<void(Tape&)> back;
  };

  int push(Mat value, bool needs_grad, std::function<void(Tape&)> back);
  Mat& grad_acc(int id);  // allocates zeros on first touch
  void add_grad(int id, const Mat& g);

  std::vector<Node> nodes_;
};

}  // namespace htc
