#pragma once

// Planning-quality metrics over task-name sequences and plan structure.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "conductor/error.hpp"
#include "conductor/manifest.hpp"
#include "conductor/taskgraph.hpp"

namespace conductor::metrics {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline double harmonic_f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

// Precision/recall/F1 in [0, 1] with the intersection counted by multiplicity.
inline PRF multiset_prf(std::span<const std::string> pred, std::span<const std::string> gold) {
  std::map<std::string, std::size_t> gold_counts;
  for (const auto& g : gold) ++gold_counts[g];
  std::size_t common = 0;
  for (const auto& p : pred) {
    auto it = gold_counts.find(p);
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  PRF out;
  out.precision = pred.empty() ? 0.0 : static_cast<double>(common) / static_cast<double>(pred.size());
  out.recall = gold.empty() ? 0.0 : static_cast<double>(common) / static_cast<double>(gold.size());
  out.f1 = harmonic_f1(out.precision, out.recall);
  return out;
}

// Token-level Levenshtein distance with unit costs.
inline std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

// Edit distance divided by the longer length; 0 when both are empty.
inline double normalized_edit_distance(std::span<const std::string> pred, std::span<const std::string> gold) {
  const auto longest = std::max(pred.size(), gold.size());
  if (longest == 0) return 0.0;
  return static_cast<double>(edit_distance(pred, gold)) / static_cast<double>(longest);
}

// Exact match of a single-task plan. Throws CategoryError unless gold has one task.
inline bool single_match(const TaskGraph& pred, const TaskGraph& gold,
                         const TaskManifest& manifest = TaskManifest::builtin()) {
  if (gold.size() != 1) throw CategoryError("single-task match needs a gold plan with exactly one task");
  if (pred.size() != 1) return false;
  return manifest.canonical(pred.tasks()[0].task) == manifest.canonical(gold.tasks()[0].task);
}

// Task names in plan order, mapped to canonical names where known.
inline std::vector<std::string> canonical_names(const TaskGraph& g,
                                                const TaskManifest& manifest = TaskManifest::builtin()) {
  std::vector<std::string> out;
  out.reserve(g.size());
  for (const auto& t : g.tasks()) out.push_back(manifest.canonical(t.task));
  return out;
}

namespace detail {

struct LabeledDag {
  std::vector<std::string> label;
  std::vector<std::set<std::size_t>> parents;
};

// Positions replace ids; prerequisites pointing at unknown ids are kept as a
// sentinel so that malformed plans never compare equal to well-formed ones.
inline LabeledDag normalize(const TaskGraph& g, const TaskManifest& manifest) {
  LabeledDag d;
  std::map<int, std::size_t> position;
  for (std::size_t i = 0; i < g.size(); ++i) position.emplace(g.tasks()[i].id, i);
  for (const auto& t : g.tasks()) {
    d.label.push_back(manifest.canonical(t.task));
    std::set<std::size_t> ps;
    for (int dep : t.prerequisites()) {
      auto it = position.find(dep);
      ps.insert(it == position.end() ? g.size() : it->second);
    }
    d.parents.push_back(std::move(ps));
  }
  return d;
}

}  // namespace detail

// Same task types in the same order with the same dependency shape (ids
// normalized to list positions).
inline bool sequence_match(const TaskGraph& pred, const TaskGraph& gold,
                           const TaskManifest& manifest = TaskManifest::builtin()) {
  auto a = detail::normalize(pred, manifest);
  auto b = detail::normalize(gold, manifest);
  return a.label == b.label && a.parents == b.parents;
}

// Labeled-DAG isomorphism: some bijection of tasks preserves task types and
// dependency edges. Backtracking; plans here have at most a few dozen tasks.
inline bool graph_match(const TaskGraph& pred, const TaskGraph& gold,
                        const TaskManifest& manifest = TaskManifest::builtin()) {
  auto a = detail::normalize(pred, manifest);
  auto b = detail::normalize(gold, manifest);
  const auto n = a.label.size();
  if (n != b.label.size()) return false;

  std::vector<std::vector<std::size_t>> a_children(n), b_children(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto p : a.parents[i]) {
      if (p >= n) return false;
      a_children[p].push_back(i);
    }
    for (auto p : b.parents[i]) {
      if (p >= n) return false;
      b_children[p].push_back(i);
    }
  }
  auto compatible = [&](std::size_t i, std::size_t j) {
    return a.label[i] == b.label[j] && a.parents[i].size() == b.parents[j].size() &&
           a_children[i].size() == b_children[j].size();
  };

  std::vector<std::size_t> map_ab(n, n), map_ba(n, n);
  std::function<bool(std::size_t)> extend = [&](std::size_t i) -> bool {
    if (i == n) return true;
    for (std::size_t j = 0; j < n; ++j) {
      if (map_ba[j] != n || !compatible(i, j)) continue;
      // Every already-mapped neighbour of i must map onto a neighbour of j.
      bool consistent = true;
      for (std::size_t k = 0; k < i && consistent; ++k) {
        const bool a_edge_ik = a.parents[i].count(k) != 0;
        const bool a_edge_ki = a.parents[k].count(i) != 0;
        const bool b_edge_ik = b.parents[j].count(map_ab[k]) != 0;
        const bool b_edge_ki = b.parents[map_ab[k]].count(j) != 0;
        consistent = a_edge_ik == b_edge_ik && a_edge_ki == b_edge_ki;
      }
      if (!consistent) continue;
      map_ab[i] = j;
      map_ba[j] = i;
      if (extend(i + 1)) return true;
      map_ab[i] = n;
      map_ba[j] = n;
    }
    return false;
  };
  return extend(0);
}

}  // namespace conductor::metrics
