// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "htc/params.hpp"
#include "htc/tape.hpp"
#include "htc/taxonomy.hpp"

namespace htc {

struct HeadConfig {
  int k = 128;  // chain hidden width between adjacent levels

  // The per-level activation that feeds the final sigmoid. Identity by
  // default: wrapping the pre-sigmoid sums in ReLU forces every
  // probability to at least 0.5, which makes a 0.5 decision threshold
  // predict everything. The ReLU-everywhere variant stays available as a
  // switch for fidelity experiments.
  bool relu_final = false;

  // Chain input at level h: the previous level's combined activation
  // (default) or its pooled-path term only.
  bool chain_from_combined = true;

  // Ablation switch: drop the chain hidden layers entirely.
  bool chain_enabled = true;

  void validate() const;  // throws InvalidConfig
};

/// sigmoid(W_L p + b_L) over a batch of pooled states (N x d_h) -> N x |C|.
Var build_linear_head(Tape& t, const ParamVars& pv, Var pooled);

/// Per-level classifier chain: level h sums a pooled-path affine term with
/// a hidden-layer chain driven by the previous level's activation, then the
/// per-level blocks are concatenated in global index order and squashed.
Var build_path_hierarchy_head(Tape& t, const ParamVars& pv,
                              const LabelHierarchy& h, const HeadConfig& cfg,
                              Var pooled);

// ---- pure wrappers ----

/// w is |C| x d_h, b length |C|, p length d_h; returns |C| probabilities.
Eigen::VectorXd linear_head(const Mat& w, const Eigen::VectorXd& b,
                            const Eigen::VectorXd& p);

/// params must hold the hier.l{h}.* matrices consistent with `h`.
Eigen::VectorXd path_hierarchy_head(const ParamStore& params,
                                    const LabelHierarchy& h,
                                    const HeadConfig& cfg,
                                    const Eigen::VectorXd& p);

/// Elementwise maximum of the two heads' probabilities.
Eigen::VectorXd pooled_inference(const Eigen::VectorXd& p_linear,
                                 const Eigen::VectorXd& p_hier);

// ---- parameter accounting ----

struct ParameterCounts {
  std::map<std::string, long long> by_component;
  long long total = 0;
};

long long linear_head_param_count(int num_labels, int d_h);
long long hierarchy_head_param_count(const std::vector<int>& level_sizes,
                                     int d_h, int k);

}  // namespace htc
