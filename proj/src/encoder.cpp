// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#include "htc/encoder.hpp"

#include <string>

#include "htc/corpus.hpp"

namespace htc {

void EncoderConfig::validate() const {
  auto fail = [](const std::string& why) {
    throw input_error("InvalidConfig", why);
  };
  if (d_h < 1 || n_layers < 1 || n_heads < 1 || max_len < 3 ||
      vocab_size < kNumReservedIds || feedforward_dim < 1 ||
      graph_layers < 1 || max_distance_bucket < 1) {
    fail("all encoder dimensions must be positive (max_len >= 3)");
  }
  if (d_h % n_heads != 0) {
    fail("d_h=" + std::to_string(d_h) + " not divisible by n_heads=" +
         std::to_string(n_heads));
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    fail("dropout_rate must be in [0,1)");
  }
}

namespace {

// q/k/v/output projection + residual + layer norm, shared by the text and
// label-graph encoders.
struct AttnParams {
  Var wq, wk, wv, wo, bq, bk, bv, bo;
};

AttnParams attn_params(const ParamVars& pv, const std::string& prefix) {
  return {pv.at(prefix + ".wq"), pv.at(prefix + ".wk"), pv.at(prefix + ".wv"),
          pv.at(prefix + ".wo"), pv.at(prefix + ".bq"), pv.at(prefix + ".bk"),
          pv.at(prefix + ".bv"), pv.at(prefix + ".bo")};
}

}  // namespace

EncodeGraph build_encode(Tape& t, const ParamVars& pv,
                         const EncoderConfig& cfg,
                         const std::vector<std::vector<int>>& token_rows,
                         const EncodeOptions& opt) {
  const int batch = static_cast<int>(token_rows.size());
  if (batch == 0) throw input_error("ShapeMismatch", "empty batch");
  const int width = static_cast<int>(token_rows[0].size());
  if (width < 2 || width > cfg.max_len) {
    throw input_error("ShapeMismatch", "sequence width out of range");
  }

  std::vector<int> flat_ids;
  std::vector<int> positions;
  flat_ids.reserve(static_cast<size_t>(batch) * width);
  positions.reserve(flat_ids.capacity());
  std::vector<Mat> key_masks(batch, Mat::Ones(width, 1));
  for (int s = 0; s < batch; ++s) {
    if (static_cast<int>(token_rows[s].size()) != width) {
      throw input_error("ShapeMismatch", "ragged batch");
    }
    for (int i = 0; i < width; ++i) {
      const int id = token_rows[s][i];
      if (id < 0 || id >= cfg.vocab_size) {
        throw input_error("ShapeMismatch",
                          "token id " + std::to_string(id) + " out of range");
      }
      flat_ids.push_back(id);
      positions.push_back(i);
      if (id == kPadId) key_masks[s](i, 0) = 0.0;
    }
  }

  Var tok = t.gather_rows(pv.at("tok_emb"), flat_ids);
  if (opt.token_scale.valid()) tok = t.row_scale(tok, opt.token_scale);
  Var pos = t.gather_rows(pv.at("pos_emb"), positions);
  Var embedded = t.add(tok, pos);

  const bool drop = opt.train_mode && cfg.dropout_rate > 0.0;
  if (drop && opt.rng == nullptr) {
    throw input_error("InvalidConfig", "train-mode encode needs an rng");
  }
  Var x = drop ? t.dropout(embedded, cfg.dropout_rate, *opt.rng) : embedded;

  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    const AttnParams ap = attn_params(pv, p + ".attn");
    Var q = t.add_rowvec(t.matmul(x, ap.wq), ap.bq);
    Var k = t.add_rowvec(t.matmul(x, ap.wk), ap.bk);
    Var v = t.add_rowvec(t.matmul(x, ap.wv), ap.bv);
    std::vector<Var> heads_out;
    heads_out.reserve(batch);
    for (int s = 0; s < batch; ++s) {
      Var qs = t.block_rows(q, s * width, width);
      Var ks = t.block_rows(k, s * width, width);
      Var vs = t.block_rows(v, s * width, width);
      std::vector<Mat> probs;
      Var os = t.mha(qs, ks, vs, cfg.n_heads, &key_masks[s], Var{},
                     opt.attn_out ? &probs : nullptr);
      if (opt.attn_out) {
        for (auto& m : probs) opt.attn_out->push_back(std::move(m));
      }
      heads_out.push_back(os);
    }
    Var attn = t.concat_rows(heads_out);
    Var proj = t.add_rowvec(t.matmul(attn, ap.wo), ap.bo);
    if (drop) proj = t.dropout(proj, cfg.dropout_rate, *opt.rng);
    x = t.layer_norm(t.add(x, proj), pv.at(p + ".ln1.gamma"),
                     pv.at(p + ".ln1.beta"));
    Var ff = t.add_rowvec(t.matmul(x, pv.at(p + ".ff.w1")), pv.at(p + ".ff.b1"));
    ff = t.gelu(ff);
    ff = t.add_rowvec(t.matmul(ff, pv.at(p + ".ff.w2")), pv.at(p + ".ff.b2"));
    if (drop) ff = t.dropout(ff, cfg.dropout_rate, *opt.rng);
    x = t.layer_norm(t.add(x, ff), pv.at(p + ".ln2.gamma"),
                     pv.at(p + ".ln2.beta"));
  }

  std::vector<int> first_rows(batch);
  for (int s = 0; s < batch; ++s) first_rows[s] = s * width;

  EncodeGraph g;
  g.states = x;
  g.pooled = t.gather_rows(x, first_rows);
  g.embedded = embedded;
  g.width = width;
  g.batch = batch;
  return g;
}

Var build_label_graph(Tape& t, const ParamVars& pv, const EncoderConfig& cfg,
                      const LabelHierarchy& h, std::vector<Mat>* attn_out) {
  const int n = h.num_labels();
  std::vector<std::vector<int>> buckets(n, std::vector<int>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      buckets[i][j] = std::min(h.distance[i][j], cfg.max_distance_bucket);
    }
  }
  Var bias = t.gather_scalar_table(pv.at("graph_dist_bias"), buckets);
  Var x = pv.at("label_emb");
  for (int l = 0; l < cfg.graph_layers; ++l) {
    const std::string p = "graph" + std::to_string(l);
    const AttnParams ap = attn_params(pv, p + ".attn");
    Var q = t.add_rowvec(t.matmul(x, ap.wq), ap.bq);
    Var k = t.add_rowvec(t.matmul(x, ap.wk), ap.bk);
    Var v = t.add_rowvec(t.matmul(x, ap.wv), ap.bv);
    std::vector<Mat> probs;
    Var o = t.mha(q, k, v, cfg.n_heads, nullptr, bias,
                  attn_out ? &probs : nullptr);
    if (attn_out) {
      for (auto& m : probs) attn_out->push_back(std::move(m));
    }
    Var proj = t.add_rowvec(t.matmul(o, ap.wo), ap.bo);
    x = t.layer_norm(t.add(x, proj), pv.at(p + ".ln.gamma"),
                     pv.at(p + ".ln.beta"));
  }
  return x;
}

std::vector<EncoderOutput> encode(const ParamStore& params,
                                  const EncoderConfig& cfg,
                                  const std::vector<std::vector<int>>& token_rows,
                                  bool train_mode, uint64_t noise_seed) {
  Tape t;
  ParamVars pv = make_param_leaves(t, params, /*needs_grad=*/false);
  Rng rng(noise_seed);
  EncodeOptions opt;
  opt.train_mode = train_mode;
  opt.rng = &rng;
  EncodeGraph g = build_encode(t, pv, cfg, token_rows, opt);
  std::vector<EncoderOutput> out;
  out.reserve(token_rows.size());
  const Mat& states = t.value(g.states);
  const Mat& embedded = t.value(g.embedded);
  for (int s = 0; s < g.batch; ++s) {
    EncoderOutput eo;
    eo.token_states = states.middleRows(s * g.width, g.width);
    eo.pooled = eo.token_states.row(0);
    eo.embedded = embedded.middleRows(s * g.width, g.width);
    out.push_back(std::move(eo));
  }
  return out;
}

Mat embed_tokens(const ParamStore& params, const EncoderConfig& cfg,
                 const std::vector<int>& token_ids) {
  const Mat& tok = params.at("tok_emb");
  const Mat& pos = params.at("pos_emb");
  const int n = static_cast<int>(token_ids.size());
  if (n > cfg.max_len) {
    throw input_error("ShapeMismatch", "sequence longer than max_len");
  }
  Mat out(n, cfg.d_h);
  for (int i = 0; i < n; ++i) {
    const int id = token_ids[i];
    if (id < 0 || id >= cfg.vocab_size) {
      throw input_error("ShapeMismatch", "token id out of range");
    }
    out.row(i) = tok.row(id) + pos.row(i);
  }
  return out;
}

Mat label_graph_encode(const ParamStore& params, const EncoderConfig& cfg,
                       const LabelHierarchy& h, std::vector<Mat>* attn_out) {
  Tape t;
  ParamVars pv = make_param_leaves(t, params, /*needs_grad=*/false);
  Var features = build_label_graph(t, pv, cfg, h, attn_out);
  return t.value(features);
}

}  // namespace htc
