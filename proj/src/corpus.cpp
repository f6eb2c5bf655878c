// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#include "htc/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "htc/errors.hpp"
#include "htc/rng.hpp"

namespace htc {

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

int Vocabulary::id_of(const std::string& token) const {
  auto it = std::lower_bound(sorted_.begin(), sorted_.end(), token,
                             [](const auto& a, const std::string& b) {
                               return a.first < b;
                             });
  if (it != sorted_.end() && it->first == token) return it->second;
  return kUnkId;
}

void Vocabulary::rebuild_index() {
  sorted_.clear();
  sorted_.reserve(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) {
    sorted_.emplace_back(tokens[i], kNumReservedIds + static_cast<int>(i));
  }
  std::sort(sorted_.begin(), sorted_.end());
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string tok;
  while (ss >> tok) out.push_back(lower(tok));
  return out;
}

Vocabulary build_vocab(const std::vector<std::string>& records, int min_freq,
                       int max_size) {
  std::map<std::string, int> freq;
  for (const auto& rec : records) {
    for (const auto& tok : tokenize(rec)) ++freq[tok];
  }
  if (freq.empty()) {
    throw input_error("EmptyCorpus", "no tokens found in corpus");
  }
  std::vector<std::pair<std::string, int>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, count] : items) {
    if (count < min_freq) continue;
    if (static_cast<int>(v.tokens.size()) >= max_size) break;
    v.tokens.push_back(tok);
  }
  v.rebuild_index();
  return v;
}

std::vector<int> encode_text(const Vocabulary& v, const std::string& text,
                             int max_len) {
  std::vector<int> ids;
  ids.reserve(max_len);
  ids.push_back(kClsId);
  for (const auto& tok : tokenize(text)) {
    if (static_cast<int>(ids.size()) >= max_len - 1) break;
    ids.push_back(v.id_of(tok));
  }
  ids.push_back(kSepId);
  ids.resize(max_len, kPadId);
  return ids;
}

Dataset load_dataset_lines(const std::vector<std::string>& lines,
                           const LabelHierarchy& h, const Vocabulary& v,
                           int max_len) {
  Dataset ds;
  const int num_labels = h.num_labels();
  size_t line_no = 0;
  for (const auto& line : lines) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw input_error("MalformedRecord",
                        "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string() ||
        !rec.contains("labels") || !rec["labels"].is_array()) {
      throw input_error("MalformedRecord",
                        "line " + std::to_string(line_no) +
                            ": need string `text` and array `labels`");
    }
    Sample s;
    s.token_ids = encode_text(v, rec["text"].get<std::string>(), max_len);
    LabelSet raw;
    for (const auto& name : rec["labels"]) {
      if (!name.is_string()) {
        throw input_error("MalformedRecord",
                          "line " + std::to_string(line_no) +
                              ": labels must be strings");
      }
      const int idx = h.index_of(name.get<std::string>());
      if (idx < 0) {
        throw input_error("UnknownLabel",
                          "line " + std::to_string(line_no) + ": '" +
                              name.get<std::string>() + "'");
      }
      raw.push_back(idx);
    }
    s.gold = ancestor_closure(h, raw);
    s.target.assign(num_labels, 0);
    for (int idx : s.gold) s.target[idx] = 1;
    if (s.gold.empty()) ++ds.empty_label_count;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset load_dataset(const std::string& path, const LabelHierarchy& h,
                     const Vocabulary& v, int max_len) {
  std::ifstream f(path);
  if (!f) throw input_error("IoError", "cannot open dataset file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) lines.push_back(line);
  return load_dataset_lines(lines, h, v, max_len);
}

std::vector<Batch> make_batches(const Dataset& data, int batch_size,
                                uint64_t seed, bool shuffle) {
  if (data.samples.empty()) {
    throw input_error("EmptyDataset", "cannot batch an empty dataset");
  }
  if (batch_size < 1) {
    throw input_error("InvalidArgs", "batch_size must be >= 1");
  }
  std::vector<int> order(data.samples.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    Rng rng(seed);
    rng.shuffle(order);
  }
  std::vector<Batch> batches;
  for (size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    const size_t end = std::min(order.size(), start + batch_size);
    b.indices.assign(order.begin() + start, order.begin() + end);
    int width = 0;
    for (int idx : b.indices) {
      const auto& ids = data.samples[idx].token_ids;
      int sep_pos = static_cast<int>(ids.size()) - 1;
      while (sep_pos > 0 && ids[sep_pos] == kPadId) --sep_pos;
      width = std::max(width, sep_pos + 1);
    }
    b.width = width;
    batches.push_back(std::move(b));
  }
  return batches;
}

SyntheticCorpus gen_synthetic(int parents, int children_per_parent,
                              int n_samples, uint64_t seed, int noise_tokens) {
  if (parents < 1 || children_per_parent < 1 || n_samples < 1) {
    throw input_error("InvalidArgs", "all synthetic counts must be >= 1");
  }
  constexpr int kNoisePool = 40;
  auto pad2 = [](int x) {
    std::string s = std::to_string(x);
    return s.size() < 2 ? "0" + s : s;
  };

  SyntheticCorpus out;
  std::ostringstream tax;
  tax << "Root";
  for (int p = 0; p < parents; ++p) tax << '\t' << "p" << pad2(p);
  tax << '\n';
  for (int p = 0; p < parents; ++p) {
    tax << "p" << pad2(p);
    for (int c = 0; c < children_per_parent; ++c) {
      tax << '\t' << "p" << pad2(p) << "c" << pad2(c);
    }
    tax << '\n';
  }
  out.taxonomy_text = tax.str();

  Rng rng(seed);
  const int n_leaves = parents * children_per_parent;
  out.record_lines.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    const int leaf = static_cast<int>(rng.uniform_below(n_leaves));
    const int p = leaf / children_per_parent;
    const int c = leaf % children_per_parent;
    const std::string parent_name = "p" + pad2(p);
    const std::string leaf_name = parent_name + "c" + pad2(c);
    std::ostringstream text;
    text << "sig" << parent_name << " sig" << leaf_name;
    for (int t = 0; t < noise_tokens; ++t) {
      text << " nz" << pad2(static_cast<int>(rng.uniform_below(kNoisePool)));
    }
    nlohmann::ordered_json rec;
    rec["text"] = text.str();
    rec["labels"] = {parent_name, leaf_name};
    out.record_lines.push_back(rec.dump());
  }
  return out;
}

}  // namespace htc
