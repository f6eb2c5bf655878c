// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#include "htc/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace htc {

void TrainConfig::validate() const {
  auto fail = [](const std::string& why) {
    throw input_error("InvalidConfig", why);
  };
  if (learning_rate < 0.0) fail("learning_rate must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (lambda < 0.0) fail("lambda must be >= 0");
  if (gamma < 0.0 || gamma >= 1.0) fail("gamma must be in [0,1)");
  if (tau <= 0.0) fail("tau must be > 0");
  if (k < 1) fail("k must be >= 1");
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  if (patience < 1) fail("patience must be >= 1");
  if (decision_threshold <= 0.0 || decision_threshold >= 1.0) {
    fail("decision_threshold must be in (0,1)");
  }
  if (gumbel_temperature <= 0.0) fail("gumbel_temperature must be > 0");
}

void TrainVariant::validate() const {
  if (!use_linear && !use_hier) {
    throw input_error("InvalidConfig", "at least one head must remain");
  }
  if (train_pool != TrainPool::None && (!use_linear || !use_hier)) {
    throw input_error("InvalidConfig",
                      "train-time pooling needs both heads present");
  }
}

bool TrainVariant::needs_positive(const TrainConfig& cfg, int batch_n) const {
  const bool pos_bce = (pos_bce_linear && use_linear) ||
                       (pos_bce_hier && use_hier) ||
                       (train_pool != TrainPool::None &&
                        (pos_bce_linear || pos_bce_hier));
  const bool con = contrastive && batch_n >= 2;
  return pos_bce || con;
}

double total_loss(double cls_linear, double cls_hier, double pos_linear,
                  double pos_hier, double l_con, double lambda) {
  const double t =
      cls_linear + cls_hier + pos_linear + pos_hier + lambda * l_con;
  if (!std::isfinite(cls_linear) || !std::isfinite(cls_hier) ||
      !std::isfinite(pos_linear) || !std::isfinite(pos_hier) ||
      !std::isfinite(l_con) || !std::isfinite(t)) {
    throw numeric_error("NonFiniteLoss", "loss component is not finite");
  }
  return t;
}

double bce_multilabel(const Mat& probs, const Mat& targets) {
  Tape t;
  return t.value(t.bce_mean_sum(t.constant(probs), targets))(0, 0);
}

LossReport BatchGraph::report(const Tape& t) const {
  LossReport r;
  r.cls_linear = t.value(cls_linear)(0, 0);
  r.cls_hier = t.value(cls_hier)(0, 0);
  r.pos_linear = t.value(pos_linear)(0, 0);
  r.pos_hier = t.value(pos_hier)(0, 0);
  r.contrastive = t.value(contrastive)(0, 0);
  r.lambda = lambda;
  r.total = t.value(total)(0, 0);
  return r;
}

BatchGraph build_batch_graph(Tape& t, const Model& m, const Dataset& data,
                             const Batch& batch, const TrainConfig& cfg,
                             const TrainVariant& variant,
                             const ForwardOptions& opt) {
  cfg.validate();
  variant.validate();
  const int n = batch.size();
  const int width = batch.width;
  const int num_labels = m.hierarchy.num_labels();

  std::vector<std::vector<int>> token_rows;
  token_rows.reserve(n);
  Mat targets(n, num_labels);
  std::vector<const LabelSet*> golds(n);
  for (int s = 0; s < n; ++s) {
    const Sample& sample = data.samples[batch.indices[s]];
    if (static_cast<int>(sample.target.size()) != num_labels) {
      throw input_error("HierarchyMismatch",
                        "sample target width does not match hierarchy");
    }
    token_rows.emplace_back(sample.token_ids.begin(),
                            sample.token_ids.begin() + width);
    for (int j = 0; j < num_labels; ++j) targets(s, j) = sample.target[j];
    golds[s] = &sample.gold;
  }

  BatchGraph g;
  g.width = width;
  g.lambda = cfg.lambda;
  g.leaves = make_param_leaves(t, m.params, /*needs_grad=*/opt.train_mode);

  Rng drop_rng(derive_seed(opt.noise_seed, "dropout"));
  Rng gum_rng(derive_seed(opt.noise_seed, "gumbel"));

  HeadConfig head_cfg = m.head;
  head_cfg.chain_enabled = head_cfg.chain_enabled && variant.chain_enabled;

  EncodeOptions enc_opt;
  enc_opt.train_mode = opt.train_mode;
  enc_opt.rng = &drop_rng;
  EncodeGraph enc = build_encode(t, g.leaves, m.enc, token_rows, enc_opt);

  if (variant.use_linear) {
    g.probs_linear = build_linear_head(t, g.leaves, enc.pooled);
  }
  if (variant.use_hier) {
    g.probs_hier =
        build_path_hierarchy_head(t, g.leaves, m.hierarchy, head_cfg, enc.pooled);
  }

  const Var zero = t.constant(Mat::Zero(1, 1));
  Var cls_linear = zero, cls_hier = zero, pos_linear = zero, pos_hier = zero;
  Var l_con = zero;

  switch (variant.train_pool) {
    case TrainVariant::TrainPool::None:
      if (variant.use_linear) {
        cls_linear = t.bce_mean_sum(g.probs_linear, targets);
      }
      if (variant.use_hier) {
        cls_hier = t.bce_mean_sum(g.probs_hier, targets);
      }
      break;
    case TrainVariant::TrainPool::Avg:
      cls_linear = t.bce_mean_sum(
          t.scale(t.add(g.probs_linear, g.probs_hier), 0.5), targets);
      break;
    case TrainVariant::TrainPool::Max:
      cls_linear =
          t.bce_mean_sum(t.emax(g.probs_linear, g.probs_hier), targets);
      break;
  }

  if (variant.needs_positive(cfg, n)) {
    Var label_features = build_label_graph(t, g.leaves, m.enc, m.hierarchy);

    std::vector<Var> scales;
    scales.reserve(n);
    g.positives.reserve(n);
    for (int s = 0; s < n; ++s) {
      Var e_rows = t.block_rows(enc.embedded, s * width, width);
      Var scores =
          build_token_label_attention(t, g.leaves, e_rows, label_features);
      Mat noise;
      const Mat* noise_ptr = nullptr;
      if (opt.gumbel_noise) {
        noise = gumbel_noise(width, num_labels, gum_rng);
        noise_ptr = &noise;
      }
      Var p_rows =
          build_gumbel_softmax_rows(t, scores, cfg.gumbel_temperature, noise_ptr);
      Var keep = build_keep_probability(t, p_rows, *golds[s]);

      PositiveSample ps =
          build_positive(token_rows[s], t.value(keep).col(0), cfg.gamma);

      Mat content(width, 1);
      for (int i = 0; i < width; ++i) {
        content(i, 0) = is_special_token(token_rows[s][i]) ? 0.0 : 1.0;
      }
      Var scale_var;
      if (opt.sampler_mode == ForwardOptions::SamplerMode::HardStraightThrough) {
        Mat hard(width, 1);
        for (int i = 0; i < width; ++i) hard(i, 0) = ps.keep_mask[i] ? 1.0 : 0.0;
        scale_var = t.straight_through(keep, hard, content);
      } else {
        const auto* masks = opt.frozen_masks;
        Mat frozen_content(width, 1);
        Mat specials(width, 1);
        for (int i = 0; i < width; ++i) {
          const bool kept = masks ? (*masks)[s][i] != 0 : ps.keep_mask[i] != 0;
          frozen_content(i, 0) = content(i, 0) != 0.0 && kept ? 1.0 : 0.0;
          specials(i, 0) = content(i, 0) == 0.0 ? 1.0 : 0.0;
        }
        scale_var =
            t.add_const(t.hadamard(keep, t.constant(frozen_content)), specials);
      }
      scales.push_back(scale_var);
      g.positives.push_back(std::move(ps));
    }

    EncodeOptions pos_opt;
    pos_opt.train_mode = opt.train_mode;
    pos_opt.rng = &drop_rng;
    pos_opt.token_scale = t.concat_rows(scales);
    EncodeGraph enc_pos = build_encode(t, g.leaves, m.enc, token_rows, pos_opt);

    Var pos_probs_linear, pos_probs_hier;
    if (variant.use_linear) {
      pos_probs_linear = build_linear_head(t, g.leaves, enc_pos.pooled);
    }
    if (variant.use_hier) {
      pos_probs_hier = build_path_hierarchy_head(t, g.leaves, m.hierarchy,
                                                 head_cfg, enc_pos.pooled);
    }
    switch (variant.train_pool) {
      case TrainVariant::TrainPool::None:
        if (variant.use_linear && variant.pos_bce_linear) {
          pos_linear = t.bce_mean_sum(pos_probs_linear, targets);
        }
        if (variant.use_hier && variant.pos_bce_hier) {
          pos_hier = t.bce_mean_sum(pos_probs_hier, targets);
        }
        break;
      case TrainVariant::TrainPool::Avg:
        if (variant.pos_bce_linear || variant.pos_bce_hier) {
          pos_linear = t.bce_mean_sum(
              t.scale(t.add(pos_probs_linear, pos_probs_hier), 0.5), targets);
        }
        break;
      case TrainVariant::TrainPool::Max:
        if (variant.pos_bce_linear || variant.pos_bce_hier) {
          pos_linear = t.bce_mean_sum(t.emax(pos_probs_linear, pos_probs_hier),
                                      targets);
        }
        break;
    }

    if (variant.contrastive && n >= 2) {
      Var c = build_projection(t, g.leaves, enc.pooled);
      Var c_hat = build_projection(t, g.leaves, enc_pos.pooled);
      l_con = build_nt_xent(t, c, c_hat, cfg.tau);
    }
  }

  g.cls_linear = cls_linear;
  g.cls_hier = cls_hier;
  g.pos_linear = pos_linear;
  g.pos_hier = pos_hier;
  g.contrastive = l_con;
  g.total = t.weighted_sum({cls_linear, cls_hier, pos_linear, pos_hier, l_con},
                           {1.0, 1.0, 1.0, 1.0, cfg.lambda});
  return g;
}

void AdamOptimizer::step(ParamStore& params,
                         const std::map<std::string, Mat>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (const auto& [name, g] : grads) {
    Mat& theta = params.at(name);
    if (g.rows() != theta.rows() || g.cols() != theta.cols()) {
      throw input_error("ShapeMismatch", "gradient shape for " + name);
    }
    auto it = state_.find(name);
    if (it == state_.end()) {
      it = state_
               .emplace(name, std::make_pair(Mat::Zero(g.rows(), g.cols()),
                                             Mat::Zero(g.rows(), g.cols())))
               .first;
    }
    Mat& mom = it->second.first;
    Mat& vel = it->second.second;
    mom = beta1_ * mom + (1.0 - beta1_) * g;
    vel = beta2_ * vel + (1.0 - beta2_) * g.cwiseProduct(g);
    theta.array() -=
        lr_ * (mom.array() / bc1) /
        ((vel.array() / bc2).sqrt() + eps_);
  }
}

namespace {

void validate_positives(const BatchGraph& g,
                        const std::vector<std::vector<int>>& token_rows) {
  for (size_t s = 0; s < g.positives.size(); ++s) {
    const auto& ps = g.positives[s];
    const auto& orig = token_rows[s];
    if (ps.token_ids.size() != orig.size()) {
      throw numeric_error("SamplerInvariant", "positive sample length drift");
    }
    for (size_t i = 0; i < orig.size(); ++i) {
      if (is_special_token(orig[i])) {
        if (ps.token_ids[i] != orig[i] || !ps.keep_mask[i]) {
          throw numeric_error("SamplerInvariant",
                              "special token not preserved in positive");
        }
      } else if (ps.keep_mask[i] ? ps.token_ids[i] != orig[i]
                                 : ps.token_ids[i] != kZeroId) {
        throw numeric_error("SamplerInvariant", "positive mask inconsistent");
      }
    }
  }
}

}  // namespace

InferenceMode inference_mode_for(const TrainVariant& variant) {
  if (!variant.use_hier) return InferenceMode::LinearOnly;
  if (!variant.use_linear) return InferenceMode::HierOnly;
  if (variant.train_pool == TrainVariant::TrainPool::Avg) {
    return InferenceMode::AvgPooled;
  }
  return InferenceMode::Pooled;
}

TrainResult train(Model& model, const Dataset& train_data,
                  const Dataset& val_data, const TrainConfig& cfg,
                  const TrainVariant& variant) {
  cfg.validate();
  variant.validate();
  if (train_data.samples.empty() || val_data.samples.empty()) {
    throw input_error("EmptyDataset", "train and val sets must be non-empty");
  }

  AdamOptimizer optimizer(cfg.learning_rate);
  TrainResult res;
  double best = -std::numeric_limits<double>::infinity();
  int no_gain = 0;
  const InferenceMode mode = inference_mode_for(variant);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto batches = make_batches(train_data, cfg.batch_size,
                                derive_seed(cfg.seed, "shuffle", epoch),
                                /*shuffle=*/true);
    LossReport mean;
    int step_idx = 0;
    for (const auto& batch : batches) {
      Tape t;
      ForwardOptions fo;
      fo.train_mode = true;
      fo.noise_seed = derive_seed(cfg.seed, "step-noise",
                                  (static_cast<uint64_t>(epoch) << 32) |
                                      static_cast<uint64_t>(step_idx));
      BatchGraph g =
          build_batch_graph(t, model, train_data, batch, cfg, variant, fo);

      if (!g.positives.empty()) {
        std::vector<std::vector<int>> rows;
        rows.reserve(batch.indices.size());
        for (int idx : batch.indices) {
          const auto& ids = train_data.samples[idx].token_ids;
          rows.emplace_back(ids.begin(), ids.begin() + batch.width);
        }
        validate_positives(g, rows);
        ++res.sampler_batches_validated;
      }

      LossReport rep = g.report(t);
      // recomputing from parts doubles as the non-finite check
      const double recomputed =
          total_loss(rep.cls_linear, rep.cls_hier, rep.pos_linear,
                     rep.pos_hier, rep.contrastive, rep.lambda);
      if (std::abs(recomputed - rep.total) > 1e-9) {
        std::ostringstream msg;
        msg << "loss decomposition drift: total " << rep.total
            << " vs parts " << recomputed;
        throw numeric_error("NonFiniteLoss", msg.str());
      }

      t.backward(g.total);
      std::map<std::string, Mat> grads;
      for (const auto& [name, var] : g.leaves.vars) {
        grads[name] = t.grad(var);
        if (!grads[name].allFinite()) {
          throw numeric_error("NonFiniteGradient", "gradient of " + name);
        }
      }
      grads["tok_emb"].row(kZeroId).setZero();
      optimizer.step(model.params, grads);
      model.params.at("tok_emb").row(kZeroId).setZero();

      mean.cls_linear += rep.cls_linear;
      mean.cls_hier += rep.cls_hier;
      mean.pos_linear += rep.pos_linear;
      mean.pos_hier += rep.pos_hier;
      mean.contrastive += rep.contrastive;
      mean.total += rep.total;
      ++step_idx;
    }
    const double inv = 1.0 / static_cast<double>(batches.size());
    mean.cls_linear *= inv;
    mean.cls_hier *= inv;
    mean.pos_linear *= inv;
    mean.pos_hier *= inv;
    mean.contrastive *= inv;
    mean.total *= inv;
    mean.lambda = cfg.lambda;

    MetricsReport val =
        evaluate(model, val_data, cfg.decision_threshold, mode);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = mean;
    rec.val_micro_f1 = val.micro_f1;
    rec.val_macro_f1 = val.macro_f1;
    if (val.macro_f1 > best) {
      best = val.macro_f1;
      res.best_epoch = epoch;
      res.best_val_macro = best;
      res.best_params = model.params;
      rec.best = true;
      no_gain = 0;
    } else {
      ++no_gain;
    }
    res.history.push_back(rec);
    if (no_gain >= cfg.patience) break;
  }
  return res;
}

GradCheckResult grad_check(const GradLossFn& f, const ParamStore& params,
                           double eps, int min_coords, uint64_t seed) {
  if (!(eps > 0.0)) {
    throw input_error("InvalidEpsilon", "eps must be > 0");
  }
  std::map<std::string, Mat> analytic;
  f(params, &analytic);

  // Stratified coordinate sample: at least two per matrix, proportional to
  // size, topped up to min_coords.
  const size_t total = params.scalar_count();
  std::vector<std::pair<std::string, Eigen::Index>> coords;
  std::set<std::pair<std::string, Eigen::Index>> seen;
  Rng rng(seed);
  auto add_coord = [&](const std::string& name, Eigen::Index flat) {
    if (seen.emplace(name, flat).second) coords.emplace_back(name, flat);
  };
  for (const auto& [name, mat] : params.mats) {
    const Eigen::Index sz = mat.size();
    const long long want = std::max<long long>(
        std::min<long long>(sz, 2),
        llround(static_cast<double>(min_coords) * sz / total));
    for (long long i = 0; i < want; ++i) {
      add_coord(name, static_cast<Eigen::Index>(rng.uniform_below(sz)));
    }
  }
  std::vector<std::string> names;
  for (const auto& [name, mat] : params.mats) names.push_back(name);
  while (static_cast<int>(coords.size()) < min_coords) {
    const auto& name = names[rng.uniform_below(names.size())];
    add_coord(name, static_cast<Eigen::Index>(
                        rng.uniform_below(params.at(name).size())));
  }

  GradCheckResult res;
  ParamStore work = params;
  for (const auto& [name, flat] : coords) {
    Mat& m = work.at(name);
    const double orig = m(flat);
    m(flat) = orig + eps;
    const double up = f(work, nullptr);
    m(flat) = orig - eps;
    const double down = f(work, nullptr);
    m(flat) = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic.count(name) ? analytic.at(name)(flat) : 0.0;
    if (!std::isfinite(numeric) || !std::isfinite(a)) {
      throw numeric_error("NonFiniteGradient",
                          "non-finite gradient at " + name);
    }
    const double rel = std::abs(a - numeric) /
                       std::max({std::abs(a), std::abs(numeric), 1e-8});
    ++res.n_checked;
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_param = name;
      res.worst_analytic = a;
      res.worst_numeric = numeric;
    }
  }
  return res;
}

GradCheckResult model_grad_check(const Model& model, const Dataset& data,
                                 const Batch& batch, const TrainConfig& cfg,
                                 double eps, int min_coords) {
  const uint64_t noise_seed = derive_seed(cfg.seed, "grad-check-noise");

  // Freeze the keep mask at the base parameters so the +-eps evaluations
  // see the same set of dropped positions.
  std::vector<std::vector<uint8_t>> frozen_masks;
  {
    Tape t;
    ForwardOptions fo;
    fo.train_mode = true;
    fo.noise_seed = noise_seed;
    BatchGraph g = build_batch_graph(t, model, data, batch, cfg, {}, fo);
    for (const auto& ps : g.positives) frozen_masks.push_back(ps.keep_mask);
  }

  Model shell = model;
  GradLossFn loss_fn = [&](const ParamStore& p,
                           std::map<std::string, Mat>* grads) {
    shell.params = p;
    Tape t;
    ForwardOptions fo;
    fo.train_mode = true;
    fo.noise_seed = noise_seed;
    fo.sampler_mode = ForwardOptions::SamplerMode::FrozenSoft;
    fo.frozen_masks = &frozen_masks;
    BatchGraph g = build_batch_graph(t, shell, data, batch, cfg, {}, fo);
    const double loss = t.value(g.total)(0, 0);
    if (grads) {
      t.backward(g.total);
      for (const auto& [name, var] : g.leaves.vars) {
        (*grads)[name] = t.grad(var);
      }
    }
    return loss;
  };

  return grad_check(loss_fn, model.params, eps, min_coords,
                    derive_seed(cfg.seed, "grad-check-coords"));
}

}  // namespace htc
