// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "htc/contrastive.hpp"
#include "htc/evaluation.hpp"
#include "htc/model.hpp"

namespace htc {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  double lambda = 0.05;   // contrastive loss weight
  double gamma = 0.02;    // token keep threshold
  double tau = 1.0;       // contrastive temperature
  int k = 8;              // hierarchy chain hidden width
  int max_epochs = 20;
  int patience = 6;       // epochs without val Macro-F1 gain before stopping
  uint64_t seed = 7;
  double decision_threshold = 0.5;
  double gumbel_temperature = 1.0;

  void validate() const;
};

/// Ablation switches. The defaults are the full model; removals mirror the
/// harness rows (drop a positive-BCE term, drop a head, drop the chain,
/// or pool the two heads already during training).
struct TrainVariant {
  bool use_linear = true;
  bool use_hier = true;
  bool pos_bce_linear = true;
  bool pos_bce_hier = true;
  bool contrastive = true;
  bool chain_enabled = true;
  enum class TrainPool { None, Avg, Max } train_pool = TrainPool::None;

  bool needs_positive(const TrainConfig& cfg, int batch_n) const;
  void validate() const;
};

struct LossReport {
  double cls_linear = 0;   // BCE of the linear head on the original text
  double cls_hier = 0;     // BCE of the hierarchy head on the original text
  double pos_linear = 0;   // BCE of the linear head on the positive sample
  double pos_hier = 0;     // BCE of the hierarchy head on the positive sample
  double contrastive = 0;  // NT-Xent
  double lambda = 0;
  double total = 0;

  double total_from_parts() const {
    return cls_linear + cls_hier + pos_linear + pos_hier +
           lambda * contrastive;
  }
};

/// Sum of the four classification terms plus lambda times the contrastive
/// term. Throws NonFiniteLoss when any input or the result is not finite.
double total_loss(double cls_linear, double cls_hier, double pos_linear,
                  double pos_hier, double l_con, double lambda);

/// Per-cell BCE with probabilities clamped to [1e-7, 1-1e-7], summed over
/// all cells and divided by the number of rows.
double bce_multilabel(const Mat& probs, const Mat& targets);

// ---- batch graph assembly ----

struct ForwardOptions {
  bool train_mode = true;
  uint64_t noise_seed = 0;
  bool gumbel_noise = true;

  // HardStraightThrough: forward uses the hard 0/1 keep mask, gradients
  // flow into the keep probabilities unscaled. FrozenSoft: forward scales
  // kept embeddings by the live keep probability under a frozen mask, so
  // central differences of the same function match the analytic gradient
  // (used by the gradient checker).
  enum class SamplerMode { HardStraightThrough, FrozenSoft } sampler_mode =
      SamplerMode::HardStraightThrough;
  const std::vector<std::vector<uint8_t>>* frozen_masks = nullptr;
};

struct BatchGraph {
  Var total, cls_linear, cls_hier, pos_linear, pos_hier, contrastive;
  Var probs_linear, probs_hier;  // original-pass head outputs, when built
  ParamVars leaves;
  std::vector<PositiveSample> positives;  // one per sample when built
  int width = 0;
  double lambda = 0;

  LossReport report(const Tape& t) const;
};

BatchGraph build_batch_graph(Tape& t, const Model& m, const Dataset& data,
                             const Batch& batch, const TrainConfig& cfg,
                             const TrainVariant& variant,
                             const ForwardOptions& opt);

// ---- optimizer ----

class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& params, const std::map<std::string, Mat>& grads);
  int steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::map<std::string, std::pair<Mat, Mat>> state_;  // name -> (m, v)
};

// ---- training loop ----

struct EpochRecord {
  int epoch = 0;
  LossReport mean_loss;
  double val_micro_f1 = 0;
  double val_macro_f1 = 0;
  bool best = false;
};

struct TrainResult {
  ParamStore best_params;
  int best_epoch = 0;
  double best_val_macro = 0;
  std::vector<EpochRecord> history;
  long long sampler_batches_validated = 0;
};

/// Full optimization loop with early stopping on validation Macro-F1.
/// Mutates model.params in place; best_params holds the winning snapshot.
TrainResult train(Model& model, const Dataset& train_data,
                  const Dataset& val_data, const TrainConfig& cfg,
                  const TrainVariant& variant = {});

/// The inference signal a given variant trains toward: max pooling for the
/// full model, the surviving head when one was removed, avg pooling for the
/// avg-pool-in-training variant.
InferenceMode inference_mode_for(const TrainVariant& variant);

// ---- gradient checking ----

/// Evaluates the scalar loss; when grads is non-null also reports the
/// analytic gradient of every parameter.
using GradLossFn =
    std::function<double(const ParamStore&, std::map<std::string, Mat>* grads)>;

struct GradCheckResult {
  double max_rel_error = 0;
  int n_checked = 0;
  std::string worst_param;
  double worst_analytic = 0;
  double worst_numeric = 0;
};

/// Central-difference check over >= min_coords sampled scalar parameters,
/// at least two per matrix. Relative error uses denominator
/// max(|analytic|, |numeric|, 1e-8). Throws InvalidEpsilon, NonFiniteGradient.
GradCheckResult grad_check(const GradLossFn& f, const ParamStore& params,
                           double eps, int min_coords, uint64_t seed);

/// grad_check over the full training objective on one batch, with frozen
/// dropout/Gumbel streams and a frozen keep mask.
GradCheckResult model_grad_check(const Model& model, const Dataset& data,
                                 const Batch& batch, const TrainConfig& cfg,
                                 double eps, int min_coords);

}  // namespace htc
