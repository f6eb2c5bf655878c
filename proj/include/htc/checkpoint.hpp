// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "htc/model.hpp"

namespace htc {

/// Single-file archive: magic + versioned JSON header (config, vocabulary,
/// taxonomy, parameter manifest with shapes) + raw little-endian doubles.
/// Round trips are bit-exact.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace htc
