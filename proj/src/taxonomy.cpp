// Copyright (c) 2026 htc-clip contributors
// SPDX-License-Identifier: Apache-2.0
#include "htc/taxonomy.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "htc/errors.hpp"

namespace htc {

namespace {

constexpr const char* kRootName = "Root";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, '\t')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    if (!field.empty()) out.push_back(field);
  }
  return out;
}

// Eager all-pairs hop counts via BFS per label, root as transit vertex.
// |C| here is small, so the O(|C|^2) table is fine.
void compute_distances(LabelHierarchy& h) {
  const int n = h.num_labels();
  std::vector<std::vector<int>> adj(n + 1);  // node n stands for the root
  for (int i = 0; i < n; ++i) {
    const int p = (h.parent[i] == kRootIndex) ? n : h.parent[i];
    adj[i].push_back(p);
    adj[p].push_back(i);
  }
  h.distance.assign(n, std::vector<int>(n, -1));
  for (int s = 0; s < n; ++s) {
    std::vector<int> dist(n + 1, -1);
    std::deque<int> bfs{s};
    dist[s] = 0;
    while (!bfs.empty()) {
      const int u = bfs.front();
      bfs.pop_front();
      for (int v : adj[u]) {
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          bfs.push_back(v);
        }
      }
    }
    for (int t = 0; t < n; ++t) h.distance[s][t] = dist[t];
  }
}

}  // namespace

int LabelHierarchy::index_of(const std::string& name) const {
  for (int i = 0; i < num_labels(); ++i) {
    if (labels[i] == name) return i;
  }
  return -1;
}

int LabelHierarchy::level_offset(int level) const {
  int off = 0;
  for (int h = 1; h < level; ++h) off += static_cast<int>(levels[h - 1].size());
  return off;
}

LabelHierarchy load_taxonomy(std::istream& source) {
  // First pass: record children per parent name, enforcing single parenthood.
  std::vector<std::string> parent_order;              // parents in file order
  std::map<std::string, std::vector<std::string>> children;
  std::map<std::string, std::string> parent_of;       // child -> parent name
  std::string line;
  while (std::getline(source, line)) {
    auto fields = split_tabs(line);
    if (fields.empty()) continue;
    const std::string& parent = fields[0];
    if (!children.count(parent)) parent_order.push_back(parent);
    auto& kids = children[parent];
    for (size_t i = 1; i < fields.size(); ++i) {
      const std::string& child = fields[i];
      if (child == kRootName) {
        throw input_error("MultipleParents", "`Root` listed as a child");
      }
      if (parent_of.count(child)) {
        throw input_error("MultipleParents",
                          "label '" + child + "' appears under '" +
                              parent_of[child] + "' and '" + parent + "'");
      }
      parent_of[child] = parent;
      kids.push_back(child);
    }
  }
  if (parent_of.empty()) {
    throw input_error("EmptyTaxonomy", "no parent/child records found");
  }

  // Every parent must itself be defined as a child somewhere, or be Root.
  for (const auto& name : parent_order) {
    if (name != kRootName && !parent_of.count(name)) {
      throw input_error("OrphanLabel",
                        "parent '" + name + "' is never defined");
    }
  }
  if (!children.count(kRootName)) {
    throw input_error("EmptyTaxonomy", "no `Root` record found");
  }

  // Cycle check: walking up from any label must terminate at Root.
  for (const auto& [child, _] : parent_of) {
    std::set<std::string> seen;
    std::string cur = child;
    while (cur != kRootName) {
      if (!seen.insert(cur).second) {
        throw input_error("CycleDetected",
                          "label '" + child + "' is its own ancestor");
      }
      auto it = parent_of.find(cur);
      if (it == parent_of.end()) {
        throw input_error("OrphanLabel",
                          "label '" + cur + "' has no path to Root");
      }
      cur = it->second;
    }
  }

  // Breadth-first index assignment: level-1 block first, then level 2, ...
  LabelHierarchy h;
  std::map<std::string, int> index;
  std::deque<std::pair<std::string, int>> queue;  // (name, level)
  for (const auto& kid : children[kRootName]) queue.emplace_back(kid, 1);
  while (!queue.empty()) {
    auto [name, level] = queue.front();
    queue.pop_front();
    const int idx = static_cast<int>(h.labels.size());
    index[name] = idx;
    h.labels.push_back(name);
    h.level_of.push_back(level);
    if (level > h.depth) {
      h.depth = level;
      h.levels.emplace_back();
    }
    h.levels[level - 1].push_back(idx);
    auto it = children.find(name);
    if (it != children.end()) {
      for (const auto& kid : it->second) queue.emplace_back(kid, level + 1);
    }
  }
  // Labels introduced in the file but unreachable from Root would have been
  // caught by the cycle/orphan walks above, so the BFS covers everything.
  h.parent.resize(h.labels.size());
  for (size_t i = 0; i < h.labels.size(); ++i) {
    const std::string& pname = parent_of[h.labels[i]];
    h.parent[i] = (pname == kRootName) ? kRootIndex : index[pname];
  }

  compute_distances(h);
  return h;
}

LabelHierarchy load_taxonomy_string(const std::string& text) {
  std::istringstream ss(text);
  return load_taxonomy(ss);
}

LabelHierarchy hierarchy_from_parents(std::vector<std::string> labels,
                                      std::vector<int> parent) {
  if (labels.empty() || labels.size() != parent.size()) {
    throw input_error("EmptyTaxonomy", "label/parent arrays inconsistent");
  }
  LabelHierarchy h;
  h.labels = std::move(labels);
  h.parent = std::move(parent);
  const int n = h.num_labels();
  h.level_of.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    int level = 0;
    int steps = 0;
    for (int cur = i; cur != kRootIndex; cur = h.parent[cur]) {
      if (cur < 0 || cur >= n || ++steps > n) {
        throw input_error("CycleDetected", "bad parent chain in hierarchy");
      }
      ++level;
    }
    h.level_of[i] = level;
    h.depth = std::max(h.depth, level);
  }
  h.levels.assign(h.depth, {});
  for (int i = 0; i < n; ++i) h.levels[h.level_of[i] - 1].push_back(i);
  compute_distances(h);
  return h;
}

LabelHierarchy load_taxonomy_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw input_error("IoError", "cannot open taxonomy file: " + path);
  return load_taxonomy(f);
}

LabelSet ancestor_closure(const LabelHierarchy& h, const LabelSet& s) {
  std::set<int> out;
  for (int idx : s) {
    if (idx < 0 || idx >= h.num_labels()) {
      throw input_error("InvalidIndex",
                        "label index " + std::to_string(idx) + " out of range");
    }
    for (int cur = idx; cur != kRootIndex; cur = h.parent[cur]) {
      out.insert(cur);
    }
  }
  return LabelSet(out.begin(), out.end());
}

int tree_distance(const LabelHierarchy& h, int a, int b) {
  if (a < 0 || a >= h.num_labels() || b < 0 || b >= h.num_labels()) {
    throw input_error("InvalidIndex", "label index out of range");
  }
  return h.distance[a][b];
}

}  // namespace htc
