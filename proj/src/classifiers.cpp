// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#include "htc/classifiers.hpp"

namespace htc {

void HeadConfig::validate() const {
  if (k < 1) throw input_error("InvalidConfig", "hierarchy hidden width k must be >= 1");
}

Var build_linear_head(Tape& t, const ParamVars& pv, Var pooled) {
  Var z = t.add_rowvec(t.matmul_nt(pooled, pv.at("lin.w")), pv.at("lin.b"));
  return t.sigmoid(z);
}

Var build_path_hierarchy_head(Tape& t, const ParamVars& pv,
                              const LabelHierarchy& h, const HeadConfig& cfg,
                              Var pooled) {
  if (h.depth < 1) throw input_error("HierarchyMismatch", "empty hierarchy");
  std::vector<Var> level_acts;   // combined activation per level
  std::vector<Var> pooled_acts;  // pooled-path terms, chain-literal variant
  level_acts.reserve(h.depth);
  for (int level = 1; level <= h.depth; ++level) {
    const std::string p = "hier.l" + std::to_string(level);
    Var a_pool = t.add_rowvec(t.matmul_nt(pooled, pv.at(p + ".wp")),
                              pv.at(p + ".bp"));
    if (cfg.relu_final) a_pool = t.relu(a_pool);
    Var a_level = a_pool;
    if (level >= 2 && cfg.chain_enabled) {
      Var chain_in = cfg.chain_from_combined ? level_acts[level - 2]
                                             : pooled_acts[level - 2];
      Var hidden = t.relu(t.add_rowvec(
          t.matmul_nt(chain_in, pv.at(p + ".win")), pv.at(p + ".bin")));
      Var a_chain = t.add_rowvec(t.matmul_nt(hidden, pv.at(p + ".wout")),
                                 pv.at(p + ".bout"));
      if (cfg.relu_final) a_chain = t.relu(a_chain);
      a_level = t.add(a_pool, a_chain);
    }
    pooled_acts.push_back(a_pool);
    level_acts.push_back(a_level);
  }
  return t.sigmoid(t.concat_cols(level_acts));
}

Eigen::VectorXd linear_head(const Mat& w, const Eigen::VectorXd& b,
                            const Eigen::VectorXd& p) {
  if (w.cols() != p.size() || w.rows() != b.size()) {
    throw input_error("ShapeMismatch", "linear head shapes");
  }
  Tape t;
  ParamVars pv;
  pv.vars["lin.w"] = t.constant(w);
  pv.vars["lin.b"] = t.constant(b.transpose());
  Var pooled = t.constant(p.transpose());
  return t.value(build_linear_head(t, pv, pooled)).row(0).transpose();
}

Eigen::VectorXd path_hierarchy_head(const ParamStore& params,
                                    const LabelHierarchy& h,
                                    const HeadConfig& cfg,
                                    const Eigen::VectorXd& p) {
  Tape t;
  ParamVars pv = make_param_leaves(t, params, /*needs_grad=*/false);
  Var pooled = t.constant(p.transpose());
  return t.value(build_path_hierarchy_head(t, pv, h, cfg, pooled))
      .row(0)
      .transpose();
}

Eigen::VectorXd pooled_inference(const Eigen::VectorXd& p_linear,
                                 const Eigen::VectorXd& p_hier) {
  if (p_linear.size() != p_hier.size()) {
    throw input_error("ShapeMismatch", "pooled_inference length mismatch");
  }
  return p_linear.cwiseMax(p_hier);
}

long long linear_head_param_count(int num_labels, int d_h) {
  return static_cast<long long>(num_labels) * d_h + num_labels;
}

long long hierarchy_head_param_count(const std::vector<int>& level_sizes,
                                     int d_h, int k) {
  long long total = 0;
  for (size_t i = 0; i < level_sizes.size(); ++i) {
    const long long c_h = level_sizes[i];
    total += c_h * d_h + c_h;  // pooled-path affine
    if (i > 0) {
      const long long c_prev = level_sizes[i - 1];
      total += static_cast<long long>(k) * c_prev + k;  // chain in
      total += c_h * k + c_h;                           // chain out
    }
  }
  return total;
}

}  // namespace htc
