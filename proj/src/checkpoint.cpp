// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#include "htc/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace htc {

namespace {

constexpr char kMagic[8] = {'H', 'T', 'C', 'C', 'L', 'I', 'P', '1'};
constexpr int kFormatVersion = 1;

using Json = nlohmann::ordered_json;

Json encoder_to_json(const EncoderConfig& c) {
  return Json{{"d_h", c.d_h},
              {"n_layers", c.n_layers},
              {"n_heads", c.n_heads},
              {"max_len", c.max_len},
              {"vocab_size", c.vocab_size},
              {"feedforward_dim", c.feedforward_dim},
              {"dropout_rate", c.dropout_rate},
              {"graph_layers", c.graph_layers},
              {"max_distance_bucket", c.max_distance_bucket}};
}

EncoderConfig encoder_from_json(const Json& j) {
  EncoderConfig c;
  c.d_h = j.at("d_h");
  c.n_layers = j.at("n_layers");
  c.n_heads = j.at("n_heads");
  c.max_len = j.at("max_len");
  c.vocab_size = j.at("vocab_size");
  c.feedforward_dim = j.at("feedforward_dim");
  c.dropout_rate = j.at("dropout_rate");
  c.graph_layers = j.at("graph_layers");
  c.max_distance_bucket = j.at("max_distance_bucket");
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
  Json header;
  header["format_version"] = kFormatVersion;
  header["encoder"] = encoder_to_json(model.enc);
  header["head"] = Json{{"k", model.head.k},
                        {"relu_final", model.head.relu_final},
                        {"chain_from_combined", model.head.chain_from_combined},
                        {"chain_enabled", model.head.chain_enabled}};
  header["vocab"] = model.vocab.tokens;
  header["taxonomy"] =
      Json{{"labels", model.hierarchy.labels}, {"parent", model.hierarchy.parent}};
  Json manifest = Json::array();
  for (const auto& [name, mat] : model.params.mats) {
    manifest.push_back(Json{{"name", name},
                            {"rows", static_cast<long long>(mat.rows())},
                            {"cols", static_cast<long long>(mat.cols())}});
  }
  header["params"] = std::move(manifest);
  const std::string header_str = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw input_error("IoError", "cannot write checkpoint: " + path);
  f.write(kMagic, sizeof(kMagic));
  const uint64_t len = header_str.size();
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, mat] : model.params.mats) {
    f.write(reinterpret_cast<const char*>(mat.data()),
            static_cast<std::streamsize>(sizeof(double) * mat.size()));
  }
  if (!f) throw input_error("IoError", "short write to checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw input_error("IoError", "cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw incompatible_error("IncompatibleCheckpoint",
                             "bad magic in " + path);
  }
  uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  f.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!f) {
    throw incompatible_error("IncompatibleCheckpoint",
                             "truncated header in " + path);
  }
  Json header;
  try {
    header = Json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw incompatible_error("IncompatibleCheckpoint",
                             std::string("header parse: ") + e.what());
  }
  if (header.at("format_version").get<int>() != kFormatVersion) {
    throw incompatible_error("IncompatibleCheckpoint",
                             "unsupported format version");
  }

  Model m;
  m.enc = encoder_from_json(header.at("encoder"));
  const Json& hj = header.at("head");
  m.head.k = hj.at("k");
  m.head.relu_final = hj.at("relu_final");
  m.head.chain_from_combined = hj.at("chain_from_combined");
  m.head.chain_enabled = hj.at("chain_enabled");
  m.vocab.tokens = header.at("vocab").get<std::vector<std::string>>();
  m.vocab.rebuild_index();
  m.hierarchy = hierarchy_from_parents(
      header.at("taxonomy").at("labels").get<std::vector<std::string>>(),
      header.at("taxonomy").at("parent").get<std::vector<int>>());

  for (const auto& entry : header.at("params")) {
    const std::string name = entry.at("name");
    const Eigen::Index rows = entry.at("rows").get<long long>();
    const Eigen::Index cols = entry.at("cols").get<long long>();
    Mat mat(rows, cols);
    f.read(reinterpret_cast<char*>(mat.data()),
           static_cast<std::streamsize>(sizeof(double) * mat.size()));
    if (!f) {
      throw incompatible_error("IncompatibleCheckpoint",
                               "truncated parameter blob: " + name);
    }
    m.params.mats[name] = std::move(mat);
  }

  // Shape sanity against the declared structure.
  for (const auto& spec : param_specs(m.enc, m.head, m.hierarchy)) {
    if (!m.params.has(spec.name) ||
        m.params.at(spec.name).rows() != spec.rows ||
        m.params.at(spec.name).cols() != spec.cols) {
      throw incompatible_error("IncompatibleCheckpoint",
                               "parameter shape mismatch: " + spec.name);
    }
  }
  return m;
}

}  // namespace htc
