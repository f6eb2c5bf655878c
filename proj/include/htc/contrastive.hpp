// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "htc/corpus.hpp"
#include "htc/params.hpp"
#include "htc/tape.hpp"
#include "htc/taxonomy.hpp"

namespace htc {

/// A masked copy of an input sequence: positions whose summed ground-truth
/// keep probability fell at or below gamma are replaced by [ZERO] (whose
/// embedding row is pinned to zeros), so kept tokens stay at their
/// positions. [CLS], [SEP] and [PAD] are never replaced.
struct PositiveSample {
  std::vector<int> token_ids;
  std::vector<double> keep_prob;
  std::vector<uint8_t> keep_mask;
};

bool is_special_token(int id);

// ---- graph builders ----

/// A_ij = (e_i W_Q)(l_j W_K)^T / sqrt(d_h); e is n x d_h, labels |C| x d_h.
Var build_token_label_attention(Tape& t, const ParamVars& pv, Var e_rows,
                                Var label_features);

/// Row-wise softmax((scores + g)/temperature); g is Gumbel(0,1) noise when
/// given, zeros otherwise (which reduces to a plain row softmax).
Var build_gumbel_softmax_rows(Tape& t, Var scores, double temperature,
                              const Mat* noise);

/// P_i = sum over ground-truth labels j of P_ij. Empty label sets yield an
/// all-zero column (warning path, not an error).
Var build_keep_probability(Tape& t, Var p_rows, const LabelSet& y);

/// c = W_2 ReLU(W_1 p), no biases; pooled is N x d_h.
Var build_projection(Tape& t, const ParamVars& pv, Var pooled);

/// NT-Xent over the 2N rows of [c; c_hat]; pair of row m is m +- N.
Var build_nt_xent(Tape& t, Var c, Var c_hat, double tau);

// ---- pure operations ----

Mat gumbel_noise(int rows, int cols, Rng& rng);

Mat token_label_attention(const Mat& e, const Mat& labels, const Mat& wq,
                          const Mat& wk);

Mat gumbel_softmax_rows(const Mat& scores, double temperature, uint64_t seed,
                        bool noise_enabled);

Eigen::VectorXd keep_probability(const Mat& p_rows, const LabelSet& y);

PositiveSample build_positive(const std::vector<int>& token_ids,
                              const Eigen::VectorXd& keep_prob, double gamma);

Eigen::VectorXd project(const Mat& w1, const Mat& w2,
                        const Eigen::VectorXd& p);

/// c and c_hat are N x d_h row-stacked pair halves.
double nt_xent(const Mat& c, const Mat& c_hat, double tau);

double cosine_sim(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

}  // namespace htc
