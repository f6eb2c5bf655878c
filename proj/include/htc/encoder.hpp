// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "htc/params.hpp"
#include "htc/tape.hpp"
#include "htc/taxonomy.hpp"

namespace htc {

struct EncoderConfig {
  int d_h = 64;
  int n_layers = 2;
  int n_heads = 4;
  int max_len = 32;
  int vocab_size = 0;
  int feedforward_dim = 128;
  double dropout_rate = 0.1;
  int graph_layers = 1;        // label-graph attention rounds
  int max_distance_bucket = 4; // tree distances clip into this many buckets

  void validate() const;  // throws InvalidConfig
};

/// Per-sample encoder result.
struct EncoderOutput {
  Mat token_states;     // n x d_h (P)
  Eigen::RowVectorXd pooled;  // d_h, first-token state (p)
  Mat embedded;         // n x d_h raw token+position embeddings (e)
};

/// Options for one encoder pass over a stacked batch.
struct EncodeOptions {
  bool train_mode = false;
  Rng* rng = nullptr;        // dropout stream; required when training
  Var token_scale;           // optional (N*width) x 1 row scale on token
                             // embeddings (positive-sample pass)
  std::vector<Mat>* attn_out = nullptr;  // per (sample, layer, head) rows
};

/// Graph handles from one batched encoder pass. All Vars live on the tape
/// that built them.
struct EncodeGraph {
  Var states;    // (N*width) x d_h
  Var pooled;    // N x d_h, row s is sample s's first-token state
  Var embedded;  // (N*width) x d_h raw embeddings, pre-dropout
  int width = 0;
  int batch = 0;
};

/// Transformer encoder over a batch of equal-length token rows. [PAD]
/// positions are masked out of attention as keys. Embeddings stack the
/// samples row-wise; per-sample attention runs on row blocks.
EncodeGraph build_encode(Tape& t, const ParamVars& pv,
                         const EncoderConfig& cfg,
                         const std::vector<std::vector<int>>& token_rows,
                         const EncodeOptions& opt);

/// Label-graph encoder: graph_layers rounds of full self-attention over the
/// |C| label embeddings with a learned additive logit bias indexed by the
/// bucketed tree distance between the two labels.
Var build_label_graph(Tape& t, const ParamVars& pv, const EncoderConfig& cfg,
                      const LabelHierarchy& h,
                      std::vector<Mat>* attn_out = nullptr);

// ---- pure wrappers (single code path: each builds a small tape) ----

std::vector<EncoderOutput> encode(const ParamStore& params,
                                  const EncoderConfig& cfg,
                                  const std::vector<std::vector<int>>& token_rows,
                                  bool train_mode, uint64_t noise_seed = 0);

/// Raw token + position embeddings for one sequence (no transformer layers).
Mat embed_tokens(const ParamStore& params, const EncoderConfig& cfg,
                 const std::vector<int>& token_ids);

/// Final |C| x d_h label feature matrix.
Mat label_graph_encode(const ParamStore& params, const EncoderConfig& cfg,
                       const LabelHierarchy& h,
                       std::vector<Mat>* attn_out = nullptr);

}  // namespace htc
