// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "htc/training.hpp"

namespace htc {

/// Everything a run needs, resolved from preset -> config file -> flags.
struct RunSettings {
  std::string preset = "desk";
  EncoderConfig enc;
  HeadConfig head;
  TrainConfig train;
  int min_freq = 1;
  int max_vocab = 50000;
};

/// Named hyperparameter profiles. `desk` is the tiny CPU-scale default;
/// `wos` and `nyt` carry the published full-scale settings (gamma/lambda
/// pairs 0.02/0.05 and 0.005/0.3).
RunSettings preset_settings(const std::string& name);

/// Flat `key = value` lines, `#` comments, blank lines ignored.
void apply_config_file(RunSettings& s, const std::string& path);
void apply_setting(RunSettings& s, const std::string& key,
                   const std::string& value);

/// Resolved settings as sorted key/value pairs (manifest + logs).
std::map<std::string, std::string> settings_kv(const RunSettings& s);

uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64_file(const std::string& path);
std::string hex64(uint64_t v);

struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  uint64_t seed = 0;
  std::map<std::string, std::string> config_kv;
  std::map<std::string, std::string> input_digests;  // path -> fnv1a64 hex
  std::vector<std::string> artifacts;
  std::map<std::string, double> timings_ms;

  void add_input(const std::string& path);
  void write(const std::string& path) const;
};

/// Per-epoch history as line-delimited JSON records.
std::string history_to_jsonl(const std::vector<EpochRecord>& history);

}  // namespace htc
