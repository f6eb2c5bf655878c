// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "htc/classifiers.hpp"
#include "htc/corpus.hpp"
#include "htc/encoder.hpp"
#include "htc/params.hpp"
#include "htc/taxonomy.hpp"

namespace htc {

/// Everything a checkpoint carries: structure plus weights.
struct Model {
  EncoderConfig enc;
  HeadConfig head;
  LabelHierarchy hierarchy;
  Vocabulary vocab;
  ParamStore params;
};

/// Declared shapes of every parameter matrix, in name order. init_params
/// and count_parameters both derive from this list, so the two can never
/// disagree.
std::vector<ParamSpec> param_specs(const EncoderConfig& enc,
                                   const HeadConfig& head,
                                   const LabelHierarchy& h);

/// Weights ~ N(0, 0.02), biases zero, layer-norm gains one, distance-bias
/// table zero, [ZERO] embedding row zeroed. Each matrix gets its own seed
/// derived from (seed, name), so the draw is order-independent.
ParamStore init_params(const EncoderConfig& enc, const HeadConfig& head,
                       const LabelHierarchy& h, uint64_t seed);

Model make_model(const EncoderConfig& enc, const HeadConfig& head,
                 LabelHierarchy hierarchy, Vocabulary vocab, uint64_t seed);

ParameterCounts count_parameters(const EncoderConfig& enc,
                                 const HeadConfig& head,
                                 const LabelHierarchy& h);
ParameterCounts count_parameters(const std::vector<ParamSpec>& specs);

/// Both heads' probabilities for a single already-trimmed batch, eval mode.
struct HeadProbs {
  Mat linear;  // N x |C|
  Mat hier;    // N x |C|
};

HeadProbs predict_probs(const Model& m,
                        const std::vector<std::vector<int>>& token_rows);

}  // namespace htc
