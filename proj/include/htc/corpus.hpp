// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "htc/taxonomy.hpp"

namespace htc {

// Reserved token ids. [ZERO] is the all-zeros-embedding token used when a
// position is dropped from a positive sample; its embedding row is pinned
// to zero and excluded from updates.
constexpr int kPadId = 0;
constexpr int kClsId = 1;
constexpr int kSepId = 2;
constexpr int kUnkId = 3;
constexpr int kZeroId = 4;
constexpr int kNumReservedIds = 5;

/// Whitespace/lowercase vocabulary with fixed reserved ids.
struct Vocabulary {
  std::vector<std::string> tokens;  // corpus tokens, id = kNumReservedIds + i

  int size() const { return kNumReservedIds + static_cast<int>(tokens.size()); }
  int id_of(const std::string& token) const;  // kUnkId when absent
  void rebuild_index();  // call after mutating `tokens`

 private:
  std::vector<std::pair<std::string, int>> sorted_;
};

std::vector<std::string> tokenize(const std::string& text);

/// Corpus tokens with frequency >= min_freq, most frequent first (ties
/// lexicographic), truncated to max_size. Throws EmptyCorpus.
Vocabulary build_vocab(const std::vector<std::string>& records, int min_freq,
                       int max_size);

/// [CLS] + up to max_len-2 token ids + [SEP], padded to exactly max_len.
std::vector<int> encode_text(const Vocabulary& v, const std::string& text,
                             int max_len);

struct Sample {
  std::vector<int> token_ids;     // length max_len, [CLS]...[SEP][PAD]*
  std::vector<uint8_t> target;    // |C| multi-hot, ancestor-closed
  LabelSet gold;                  // indices of set target bits
};

struct Dataset {
  std::vector<Sample> samples;
  size_t empty_label_count = 0;  // records accepted with no labels

  size_t size() const { return samples.size(); }
};

/// Line-delimited records, each a single-line JSON object with string field
/// `text` and string-array field `labels`. Targets are ancestor-closed.
/// Throws UnknownLabel, MalformedRecord (with line number), IoError.
Dataset load_dataset(const std::string& path, const LabelHierarchy& h,
                     const Vocabulary& v, int max_len);
Dataset load_dataset_lines(const std::vector<std::string>& lines,
                           const LabelHierarchy& h, const Vocabulary& v,
                           int max_len);

/// A batch references samples by index. Sequences inside a batch share a
/// uniform width: the longest [CLS]..[SEP] span present, so trailing [PAD]
/// columns common to every member are dropped (padding after [SEP] carries
/// no information and is masked out of attention anyway).
struct Batch {
  std::vector<int> indices;
  int width = 0;

  int size() const { return static_cast<int>(indices.size()); }
};

/// Deterministic batching; the final partial batch is retained. Throws
/// EmptyDataset.
std::vector<Batch> make_batches(const Dataset& data, int batch_size,
                                uint64_t seed, bool shuffle);

struct SyntheticCorpus {
  std::string taxonomy_text;
  std::vector<std::string> record_lines;  // same format load_dataset reads
};

/// Two-level taxonomy with `parents` level-1 labels and
/// `children_per_parent` leaves each. Every sample picks one leaf uniformly
/// and emits a parent-signal token, a leaf-signal token, and `noise_tokens`
/// draws from a shared noise pool; labels are {parent, leaf}.
SyntheticCorpus gen_synthetic(int parents, int children_per_parent,
                              int n_samples, uint64_t seed, int noise_tokens);

}  // namespace htc
