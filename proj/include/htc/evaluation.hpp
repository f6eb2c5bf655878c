// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "htc/model.hpp"

namespace htc {

/// Which probability signal drives the reported decisions.
enum class InferenceMode { Pooled, LinearOnly, HierOnly, AvgPooled };

struct PerLabelStats {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  long long support = 0;  // gold positives
};

struct MetricsReport {
  double micro_f1 = 0;  // headline metrics for the chosen inference mode
  double macro_f1 = 0;
  std::vector<PerLabelStats> per_label;
  std::vector<double> per_level_macro;
  // Same test set scored through each head alone and both pools.
  double linear_micro = 0, linear_macro = 0;
  double hier_micro = 0, hier_macro = 0;
  double pooled_micro = 0, pooled_macro = 0;
  size_t n_samples = 0;
  double decision_threshold = 0.5;
  InferenceMode mode = InferenceMode::Pooled;
};

/// pred and gold are N x |C| 0/1 matrices. TP/FP/FN pool over all cells;
/// F1 = 0 when precision + recall = 0.
double micro_f1(const Mat& pred, const Mat& gold);

/// Unweighted mean of per-label F1 over all |C| labels, F1 = 0 for labels
/// where precision + recall = 0.
double macro_f1(const Mat& pred, const Mat& gold);

Mat threshold_probs(const Mat& probs, double threshold);  // strict >

/// Runs the encoder plus both heads over the dataset, pools per `mode`,
/// thresholds, and fills the full report. Deterministic.
/// Throws IncompatibleCheckpoint when the dataset's target width does not
/// match the model's hierarchy.
MetricsReport evaluate(const Model& m, const Dataset& data, double threshold,
                       InferenceMode mode = InferenceMode::Pooled);

std::string metrics_to_kv(const MetricsReport& r);
std::string metrics_to_table(const MetricsReport& r, const LabelHierarchy& h);

}  // namespace htc
