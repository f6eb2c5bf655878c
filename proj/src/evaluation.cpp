// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#include "htc/evaluation.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace htc {

namespace {

constexpr int kEvalBatch = 64;

struct Counts {
  long long tp = 0, fp = 0, fn = 0;
};

double f1_from_counts(const Counts& c) {
  const double denom = 2.0 * c.tp + c.fp + c.fn;
  if (denom == 0.0) return 0.0;  // precision + recall = 0 convention
  return 2.0 * c.tp / denom;
}

void check_shapes(const Mat& pred, const Mat& gold) {
  if (pred.rows() != gold.rows() || pred.cols() != gold.cols()) {
    throw input_error("ShapeMismatch", "pred/gold shape mismatch");
  }
}

std::pair<double, double> micro_macro(const Mat& pred, const Mat& gold) {
  check_shapes(pred, gold);
  Counts all;
  double macro_sum = 0.0;
  for (Eigen::Index j = 0; j < pred.cols(); ++j) {
    Counts lab;
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const bool p = pred(i, j) > 0.5;
      const bool g = gold(i, j) > 0.5;
      lab.tp += (p && g);
      lab.fp += (p && !g);
      lab.fn += (!p && g);
    }
    all.tp += lab.tp;
    all.fp += lab.fp;
    all.fn += lab.fn;
    macro_sum += f1_from_counts(lab);
  }
  const double micro = f1_from_counts(all);
  const double macro =
      pred.cols() > 0 ? macro_sum / static_cast<double>(pred.cols()) : 0.0;
  return {micro, macro};
}

}  // namespace

double micro_f1(const Mat& pred, const Mat& gold) {
  return micro_macro(pred, gold).first;
}

double macro_f1(const Mat& pred, const Mat& gold) {
  return micro_macro(pred, gold).second;
}

Mat threshold_probs(const Mat& probs, double threshold) {
  return (probs.array() > threshold).cast<double>();
}

MetricsReport evaluate(const Model& m, const Dataset& data, double threshold,
                       InferenceMode mode) {
  const int num_labels = m.hierarchy.num_labels();
  if (data.samples.empty()) {
    throw input_error("EmptyDataset", "cannot evaluate an empty dataset");
  }
  for (const auto& s : data.samples) {
    if (static_cast<int>(s.target.size()) != num_labels) {
      throw incompatible_error("IncompatibleCheckpoint",
                               "dataset targets do not match model labels");
    }
  }

  const Eigen::Index n = static_cast<Eigen::Index>(data.samples.size());
  Mat probs_linear(n, num_labels);
  Mat probs_hier(n, num_labels);
  Mat gold(n, num_labels);
  auto batches = make_batches(data, kEvalBatch, 0, /*shuffle=*/false);
  Eigen::Index row = 0;
  for (const auto& b : batches) {
    std::vector<std::vector<int>> token_rows;
    token_rows.reserve(b.indices.size());
    for (int idx : b.indices) {
      const auto& ids = data.samples[idx].token_ids;
      token_rows.emplace_back(ids.begin(), ids.begin() + b.width);
    }
    HeadProbs hp = predict_probs(m, token_rows);
    for (int i = 0; i < b.size(); ++i) {
      probs_linear.row(row) = hp.linear.row(i);
      probs_hier.row(row) = hp.hier.row(i);
      const auto& tgt = data.samples[b.indices[i]].target;
      for (int j = 0; j < num_labels; ++j) gold(row, j) = tgt[j];
      ++row;
    }
  }

  Mat pooled_max = probs_linear.cwiseMax(probs_hier);
  Mat pooled_avg = 0.5 * (probs_linear + probs_hier);
  const Mat* headline = nullptr;
  switch (mode) {
    case InferenceMode::Pooled: headline = &pooled_max; break;
    case InferenceMode::LinearOnly: headline = &probs_linear; break;
    case InferenceMode::HierOnly: headline = &probs_hier; break;
    case InferenceMode::AvgPooled: headline = &pooled_avg; break;
  }

  MetricsReport r;
  r.n_samples = data.samples.size();
  r.decision_threshold = threshold;
  r.mode = mode;
  const Mat decisions = threshold_probs(*headline, threshold);
  auto [mi, ma] = micro_macro(decisions, gold);
  r.micro_f1 = mi;
  r.macro_f1 = ma;
  std::tie(r.linear_micro, r.linear_macro) =
      micro_macro(threshold_probs(probs_linear, threshold), gold);
  std::tie(r.hier_micro, r.hier_macro) =
      micro_macro(threshold_probs(probs_hier, threshold), gold);
  std::tie(r.pooled_micro, r.pooled_macro) =
      micro_macro(threshold_probs(pooled_max, threshold), gold);

  r.per_label.resize(num_labels);
  for (int j = 0; j < num_labels; ++j) {
    Counts c;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool p = decisions(i, j) > 0.5;
      const bool g = gold(i, j) > 0.5;
      c.tp += (p && g);
      c.fp += (p && !g);
      c.fn += (!p && g);
    }
    PerLabelStats& s = r.per_label[j];
    s.support = c.tp + c.fn;
    s.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
    s.recall = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
    s.f1 = f1_from_counts(c);
  }
  r.per_level_macro.resize(m.hierarchy.depth, 0.0);
  for (int level = 1; level <= m.hierarchy.depth; ++level) {
    const auto& idxs = m.hierarchy.levels[level - 1];
    double sum = 0.0;
    for (int j : idxs) sum += r.per_label[j].f1;
    r.per_level_macro[level - 1] =
        idxs.empty() ? 0.0 : sum / static_cast<double>(idxs.size());
  }
  return r;
}

std::string metrics_to_kv(const MetricsReport& r) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "n_samples = " << r.n_samples << "\n";
  out << "decision_threshold = " << r.decision_threshold << "\n";
  out << "micro_f1 = " << r.micro_f1 << "\n";
  out << "macro_f1 = " << r.macro_f1 << "\n";
  out << "linear_micro_f1 = " << r.linear_micro << "\n";
  out << "linear_macro_f1 = " << r.linear_macro << "\n";
  out << "hier_micro_f1 = " << r.hier_micro << "\n";
  out << "hier_macro_f1 = " << r.hier_macro << "\n";
  out << "pooled_micro_f1 = " << r.pooled_micro << "\n";
  out << "pooled_macro_f1 = " << r.pooled_macro << "\n";
  for (size_t h = 0; h < r.per_level_macro.size(); ++h) {
    out << "level" << (h + 1) << "_macro_f1 = " << r.per_level_macro[h] << "\n";
  }
  return out.str();
}

std::string metrics_to_table(const MetricsReport& r, const LabelHierarchy& h) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "micro-F1 " << r.micro_f1 << "  macro-F1 " << r.macro_f1 << "  ("
      << r.n_samples << " samples, threshold " << r.decision_threshold
      << ")\n";
  out << "  heads: linear " << r.linear_macro << "  hier " << r.hier_macro
      << "  pooled " << r.pooled_macro << " (macro)\n";
  out << "label                     prec   recall f1     support\n";
  for (int j = 0; j < h.num_labels(); ++j) {
    const auto& s = r.per_label[j];
    out << "  " << std::left << std::setw(24) << h.labels[j] << std::right
        << std::setw(6) << s.precision << " " << std::setw(6) << s.recall
        << " " << std::setw(6) << s.f1 << " " << std::setw(7) << s.support
        << "\n";
  }
  for (size_t lvl = 0; lvl < r.per_level_macro.size(); ++lvl) {
    out << "level " << (lvl + 1) << " macro-F1 " << r.per_level_macro[lvl]
        << "\n";
  }
  return out.str();
}

}  // namespace htc
