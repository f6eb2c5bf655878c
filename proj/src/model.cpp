// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#include "htc/model.hpp"

#include <string>

#include "htc/rng.hpp"

namespace htc {

namespace {

void attn_specs(std::vector<ParamSpec>& specs, const std::string& prefix,
                int d) {
  for (const char* w : {".wq", ".wk", ".wv", ".wo"}) {
    specs.push_back({prefix + w, d, d});
  }
  for (const char* b : {".bq", ".bk", ".bv", ".bo"}) {
    specs.push_back({prefix + b, 1, d});
  }
}

std::string component_of(const std::string& name) {
  if (name == "tok_emb" || name == "pos_emb") return "embeddings";
  if (name.rfind("enc", 0) == 0) return "text_encoder";
  if (name == "label_emb" || name == "graph_dist_bias" ||
      name.rfind("graph", 0) == 0) {
    return "label_graph_encoder";
  }
  if (name.rfind("sampler.", 0) == 0) return "sampler";
  if (name.rfind("proj.", 0) == 0) return "projection";
  if (name.rfind("lin.", 0) == 0) return "linear_head";
  if (name.rfind("hier.", 0) == 0) return "hierarchy_head";
  return "other";
}

}  // namespace

std::vector<ParamSpec> param_specs(const EncoderConfig& enc,
                                   const HeadConfig& head,
                                   const LabelHierarchy& h) {
  enc.validate();
  head.validate();
  const int d = enc.d_h;
  const int c = h.num_labels();
  std::vector<ParamSpec> specs;
  specs.push_back({"tok_emb", enc.vocab_size, d});
  specs.push_back({"pos_emb", enc.max_len, d});
  for (int l = 0; l < enc.n_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    attn_specs(specs, p + ".attn", d);
    specs.push_back({p + ".ln1.gamma", 1, d});
    specs.push_back({p + ".ln1.beta", 1, d});
    specs.push_back({p + ".ff.w1", d, enc.feedforward_dim});
    specs.push_back({p + ".ff.b1", 1, enc.feedforward_dim});
    specs.push_back({p + ".ff.w2", enc.feedforward_dim, d});
    specs.push_back({p + ".ff.b2", 1, d});
    specs.push_back({p + ".ln2.gamma", 1, d});
    specs.push_back({p + ".ln2.beta", 1, d});
  }
  specs.push_back({"label_emb", c, d});
  for (int l = 0; l < enc.graph_layers; ++l) {
    const std::string p = "graph" + std::to_string(l);
    attn_specs(specs, p + ".attn", d);
    specs.push_back({p + ".ln.gamma", 1, d});
    specs.push_back({p + ".ln.beta", 1, d});
  }
  specs.push_back({"graph_dist_bias", enc.max_distance_bucket + 1, 1});
  specs.push_back({"sampler.wq", d, d});
  specs.push_back({"sampler.wk", d, d});
  specs.push_back({"proj.w1", d, d});
  specs.push_back({"proj.w2", d, d});
  specs.push_back({"lin.w", c, d});
  specs.push_back({"lin.b", 1, c});
  for (int level = 1; level <= h.depth; ++level) {
    const std::string p = "hier.l" + std::to_string(level);
    const int ch = static_cast<int>(h.levels[level - 1].size());
    specs.push_back({p + ".wp", ch, d});
    specs.push_back({p + ".bp", 1, ch});
    if (level >= 2) {
      const int cprev = static_cast<int>(h.levels[level - 2].size());
      specs.push_back({p + ".win", head.k, cprev});
      specs.push_back({p + ".bin", 1, head.k});
      specs.push_back({p + ".wout", ch, head.k});
      specs.push_back({p + ".bout", 1, ch});
    }
  }
  return specs;
}

ParamStore init_params(const EncoderConfig& enc, const HeadConfig& head,
                       const LabelHierarchy& h, uint64_t seed) {
  constexpr double kInitScale = 0.02;
  ParamStore store;
  for (const auto& spec : param_specs(enc, head, h)) {
    Mat m(spec.rows, spec.cols);
    const auto dot = spec.name.rfind('.');
    const std::string leafname =
        dot == std::string::npos ? spec.name : spec.name.substr(dot + 1);
    if (spec.name == "graph_dist_bias" || leafname[0] == 'b') {
      m.setZero();
    } else if (leafname == "gamma") {
      m.setOnes();
    } else {
      Rng rng(derive_seed(seed, spec.name));
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        m(i) = rng.gauss(0.0, kInitScale);
      }
      if (spec.name == "tok_emb") m.row(kZeroId).setZero();
    }
    store.mats[spec.name] = std::move(m);
  }
  return store;
}

Model make_model(const EncoderConfig& enc, const HeadConfig& head,
                 LabelHierarchy hierarchy, Vocabulary vocab, uint64_t seed) {
  Model m;
  m.enc = enc;
  m.enc.vocab_size = vocab.size();
  m.head = head;
  m.hierarchy = std::move(hierarchy);
  m.vocab = std::move(vocab);
  m.params = init_params(m.enc, m.head, m.hierarchy, seed);
  return m;
}

ParameterCounts count_parameters(const std::vector<ParamSpec>& specs) {
  ParameterCounts out;
  for (const auto& s : specs) {
    const long long n = static_cast<long long>(s.rows) * s.cols;
    out.by_component[component_of(s.name)] += n;
    out.total += n;
  }
  return out;
}

ParameterCounts count_parameters(const EncoderConfig& enc,
                                 const HeadConfig& head,
                                 const LabelHierarchy& h) {
  return count_parameters(param_specs(enc, head, h));
}

HeadProbs predict_probs(const Model& m,
                        const std::vector<std::vector<int>>& token_rows) {
  Tape t;
  ParamVars pv = make_param_leaves(t, m.params, /*needs_grad=*/false);
  EncodeOptions opt;  // eval mode, no dropout
  EncodeGraph g = build_encode(t, pv, m.enc, token_rows, opt);
  HeadProbs out;
  out.linear = t.value(build_linear_head(t, pv, g.pooled));
  out.hier =
      t.value(build_path_hierarchy_head(t, pv, m.hierarchy, m.head, g.pooled));
  return out;
}

}  // namespace htc
