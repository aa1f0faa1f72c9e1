#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

#include "hke/common.hpp"
#include "hke/hierarchy/tree.hpp"

namespace hke {

using Rational = boost::multiprecision::cpp_rational;

using LabelMap = std::map<ItemId, std::string>;

struct NodeAccuracy {
  double accuracy = 0.0;
  std::string majority;
};

/// Share of the node's members carrying its most frequent label; ties go to
/// the lexicographically smallest label.
inline NodeAccuracy node_accuracy(const HierarchyNode& node, const LabelMap& labels) {
  if (node.members.empty()) throw ValidationError("node accuracy of an empty node");
  std::map<std::string, std::size_t> counts;
  for (auto m : node.members) {
    auto it = labels.find(m);
    if (it == labels.end()) throw ValidationError("item " + std::to_string(m) + " has no label");
    ++counts[it->second];
  }
  NodeAccuracy out;
  std::size_t best = 0;
  for (const auto& [label, count] : counts) {  // std::map iterates in lexicographic order
    if (count > best) {
      best = count;
      out.majority = label;
    }
  }
  out.accuracy = static_cast<double>(best) / static_cast<double>(node.members.size());
  return out;
}

/// Fills majority_label / accuracy on every node.
inline void annotate(HierarchyTree& tree, const LabelMap& labels) {
  std::function<void(HierarchyNode&)> walk = [&](HierarchyNode& n) {
    auto acc = node_accuracy(n, labels);
    n.majority_label = acc.majority;
    n.accuracy = acc.accuracy;
    for (auto& c : n.children) walk(c);
  };
  walk(tree.mutable_root());
}

/// Exact dendrogram purity: the mean, over all unordered same-label item
/// pairs, of the label's share inside the smallest node holding both.
///
/// Pairs whose smallest common node is v are counted per label as
/// C(count_v, 2) minus the same quantity summed over v's children.
inline Rational dendrogram_purity_exact(const HierarchyTree& tree, const LabelMap& labels) {
  using Counts = std::map<std::string, std::int64_t>;
  auto pairs = [](std::int64_t c) { return c * (c - 1) / 2; };
  Rational sum = 0;
  std::function<Counts(const HierarchyNode&)> visit = [&](const HierarchyNode& n) {
    Counts counts;
    Counts child_pairs;
    if (n.is_leaf()) {
      for (auto m : n.members) {
        auto it = labels.find(m);
        if (it == labels.end()) throw ValidationError("item " + std::to_string(m) + " has no label");
        ++counts[it->second];
      }
    } else {
      for (const auto& c : n.children) {
        for (const auto& [label, count] : visit(c)) {
          counts[label] += count;
          child_pairs[label] += pairs(count);
        }
      }
    }
    const auto size = static_cast<std::int64_t>(n.members.size());
    for (const auto& [label, count] : counts) {
      const std::int64_t here = pairs(count) - child_pairs[label];
      if (here > 0) sum += Rational(here * count, size);
    }
    return counts;
  };
  const Counts totals = visit(tree.root());
  std::int64_t total_pairs = 0;
  for (const auto& [label, count] : totals) total_pairs += pairs(count);
  if (total_pairs == 0) throw ValidationError("dendrogram purity needs at least one same-label pair");
  return sum / total_pairs;
}

inline double dendrogram_purity(const HierarchyTree& tree, const LabelMap& labels) {
  return static_cast<double>(dendrogram_purity_exact(tree, labels));
}

}  // namespace hke
