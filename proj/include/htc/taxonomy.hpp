// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <istream>
#include <string>
#include <vector>

namespace htc {

constexpr int kRootIndex = -1;  // synthetic root; carries no classifier output

/// The label tree. Immutable after load; safe for concurrent reads.
///
/// Global label indices are assigned breadth-first from the root, so the
/// index range is partitioned into contiguous per-level blocks: all level-1
/// labels first, then level 2, and so on. Classifier heads rely on that
/// block layout when concatenating per-level activations.
struct LabelHierarchy {
  std::vector<std::string> labels;     // index -> name, size |C|
  std::vector<int> parent;             // index -> parent index or kRootIndex
  std::vector<int> level_of;           // index -> level in {1..depth}
  std::vector<std::vector<int>> levels;  // levels[h-1] -> indices at level h
  int depth = 0;
  std::vector<std::vector<int>> distance;  // |C|x|C| undirected hop counts

  int num_labels() const { return static_cast<int>(labels.size()); }
  int index_of(const std::string& name) const;  // -1 when unknown

  // First global index of the level-h block (levels are contiguous).
  int level_offset(int level) const;
};

using LabelSet = std::vector<int>;  // sorted, unique label indices

/// Parse a taxonomy from tab-separated lines: `parent<TAB>child...`, root
/// named `Root`, blank lines ignored. Throws Error kinds CycleDetected,
/// MultipleParents, OrphanLabel, EmptyTaxonomy.
LabelHierarchy load_taxonomy(std::istream& source);
LabelHierarchy load_taxonomy_string(const std::string& text);
LabelHierarchy load_taxonomy_file(const std::string& path);

/// Rebuild a hierarchy from its serialized essentials (names + parent
/// indices in global index order); levels and distances are derived.
LabelHierarchy hierarchy_from_parents(std::vector<std::string> labels,
                                      std::vector<int> parent);

/// s together with every ancestor (root excluded) of each member. Idempotent.
LabelSet ancestor_closure(const LabelHierarchy& h, const LabelSet& s);

/// Undirected shortest-path hops between two labels, root as transit vertex.
int tree_distance(const LabelHierarchy& h, int a, int b);

}  // namespace htc
