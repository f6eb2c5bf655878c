// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "htc/errors.hpp"
#include "htc/tape.hpp"

namespace htc {

/// Declared shape of one named parameter matrix.
struct ParamSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
};

/// All trainable matrices, keyed by name. std::map keeps iteration order
/// deterministic, which serialization and the optimizer rely on.
struct ParamStore {
  std::map<std::string, Mat> mats;

  Mat& at(const std::string& name) {
    auto it = mats.find(name);
    if (it == mats.end()) {
      throw input_error("ShapeMismatch", "unknown parameter: " + name);
    }
    return it->second;
  }
  const Mat& at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
  }
  bool has(const std::string& name) const { return mats.count(name) > 0; }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& [_, m] : mats) n += static_cast<size_t>(m.size());
    return n;
  }
};

/// Leaf nodes for every parameter, created once per tape so the original
/// and positive passes share them (gradients accumulate across both).
struct ParamVars {
  std::map<std::string, Var> vars;

  Var at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) {
      throw input_error("ShapeMismatch", "unknown parameter leaf: " + name);
    }
    return it->second;
  }
};

inline ParamVars make_param_leaves(Tape& t, const ParamStore& params,
                                   bool needs_grad) {
  ParamVars pv;
  for (const auto& [name, mat] : params.mats) {
    pv.vars[name] = t.leaf(mat, needs_grad);
  }
  return pv;
}

}  // namespace htc
