// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#include "htc/contrastive.hpp"

#include <cmath>

namespace htc {

bool is_special_token(int id) {
  return id == kPadId || id == kClsId || id == kSepId;
}

Var build_token_label_attention(Tape& t, const ParamVars& pv, Var e_rows,
                                Var label_features) {
  const auto d_h = t.value(e_rows).cols();
  if (t.value(label_features).cols() != d_h) {
    throw input_error("ShapeMismatch", "token/label feature width mismatch");
  }
  Var q = t.matmul(e_rows, pv.at("sampler.wq"));
  Var k = t.matmul(label_features, pv.at("sampler.wk"));
  return t.scale(t.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d_h)));
}

Var build_gumbel_softmax_rows(Tape& t, Var scores, double temperature,
                              const Mat* noise) {
  if (temperature <= 0.0) {
    throw input_error("InvalidTemperature",
                      "gumbel-softmax temperature must be > 0");
  }
  Var z = scores;
  if (noise) z = t.add_const(z, *noise);
  return t.row_softmax(t.scale(z, 1.0 / temperature));
}

Var build_keep_probability(Tape& t, Var p_rows, const LabelSet& y) {
  const auto cols = t.value(p_rows).cols();
  Mat picks = Mat::Zero(cols, 1);
  for (int j : y) {
    if (j < 0 || j >= cols) {
      throw input_error("InvalidIndex", "label index out of range");
    }
    picks(j, 0) = 1.0;
  }
  return t.matmul(p_rows, t.constant(std::move(picks)));
}

Var build_projection(Tape& t, const ParamVars& pv, Var pooled) {
  Var hidden = t.relu(t.matmul_nt(pooled, pv.at("proj.w1")));
  return t.matmul_nt(hidden, pv.at("proj.w2"));
}

Var build_nt_xent(Tape& t, Var c, Var c_hat, double tau) {
  if (tau <= 0.0) {
    throw input_error("InvalidTemperature", "contrastive tau must be > 0");
  }
  Var z = t.concat_rows({c, c_hat});
  Var zn = t.row_l2_normalize(z);
  Var sim = t.matmul_nt(zn, zn);
  return t.nt_xent_from_sim(t.scale(sim, 1.0 / tau));
}

Mat gumbel_noise(int rows, int cols, Rng& rng) {
  Mat g(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) g(r, c) = rng.gumbel();
  }
  return g;
}

Mat token_label_attention(const Mat& e, const Mat& labels, const Mat& wq,
                          const Mat& wk) {
  Tape t;
  ParamVars pv;
  pv.vars["sampler.wq"] = t.constant(wq);
  pv.vars["sampler.wk"] = t.constant(wk);
  return t.value(build_token_label_attention(t, pv, t.constant(e),
                                             t.constant(labels)));
}

Mat gumbel_softmax_rows(const Mat& scores, double temperature, uint64_t seed,
                        bool noise_enabled) {
  Tape t;
  Mat noise;
  if (noise_enabled) {
    Rng rng(seed);
    noise = gumbel_noise(static_cast<int>(scores.rows()),
                         static_cast<int>(scores.cols()), rng);
  }
  return t.value(build_gumbel_softmax_rows(t, t.constant(scores), temperature,
                                           noise_enabled ? &noise : nullptr));
}

Eigen::VectorXd keep_probability(const Mat& p_rows, const LabelSet& y) {
  Tape t;
  return t.value(build_keep_probability(t, t.constant(p_rows), y)).col(0);
}

PositiveSample build_positive(const std::vector<int>& token_ids,
                              const Eigen::VectorXd& keep_prob, double gamma) {
  if (static_cast<Eigen::Index>(token_ids.size()) != keep_prob.size()) {
    throw input_error("ShapeMismatch", "keep_prob length mismatch");
  }
  PositiveSample out;
  const size_t n = token_ids.size();
  out.token_ids.resize(n);
  out.keep_prob.resize(n);
  out.keep_mask.resize(n);
  for (size_t i = 0; i < n; ++i) {
    out.keep_prob[i] = keep_prob(static_cast<Eigen::Index>(i));
    const bool keep =
        is_special_token(token_ids[i]) || out.keep_prob[i] > gamma;
    out.keep_mask[i] = keep ? 1 : 0;
    out.token_ids[i] = keep ? token_ids[i] : kZeroId;
  }
  return out;
}

Eigen::VectorXd project(const Mat& w1, const Mat& w2,
                        const Eigen::VectorXd& p) {
  if (w1.cols() != p.size() || w2.cols() != w1.rows()) {
    throw input_error("ShapeMismatch", "projection shapes");
  }
  Tape t;
  ParamVars pv;
  pv.vars["proj.w1"] = t.constant(w1);
  pv.vars["proj.w2"] = t.constant(w2);
  return t.value(build_projection(t, pv, t.constant(p.transpose())))
      .row(0)
      .transpose();
}

double nt_xent(const Mat& c, const Mat& c_hat, double tau) {
  if (c.rows() != c_hat.rows() || c.cols() != c_hat.cols()) {
    throw input_error("ShapeMismatch", "nt_xent pair halves differ");
  }
  if (c.rows() < 1) throw input_error("ShapeMismatch", "nt_xent needs N >= 1");
  Tape t;
  return t.value(build_nt_xent(t, t.constant(c), t.constant(c_hat), tau))(0, 0);
}

double cosine_sim(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size()) {
    throw input_error("ShapeMismatch", "cosine_sim length mismatch");
  }
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu <= 0.0 || nv <= 0.0) {
    throw numeric_error("ZeroNormVector", "cosine_sim of zero vector");
  }
  return u.dot(v) / (nu * nv);
}

}  // namespace htc
