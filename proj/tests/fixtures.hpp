#pragma once

// Hand-built trees for tests that need exact control over the partition.

#include <functional>
#include <utility>
#include <vector>

#include "hke/hierarchy/tree.hpp"

namespace fixtures {

inline hke::HierarchyNode leaf(std::vector<hke::ItemId> members) {
  hke::HierarchyNode n;
  n.members = std::move(members);
  return n;
}

inline hke::HierarchyNode parent_of(std::vector<hke::HierarchyNode> children) {
  hke::HierarchyNode n;
  for (const auto& c : children) n.members.insert(n.members.end(), c.members.begin(), c.members.end());
  n.children = std::move(children);
  return n;
}

/// Assigns pre-order ids and placeholder centroids.
inline hke::HierarchyTree numbered(hke::HierarchyNode root) {
  int next = 0;
  std::function<void(hke::HierarchyNode&)> number = [&](hke::HierarchyNode& n) {
    n.id = next++;
    n.centroid = Eigen::VectorXd::Zero(1);
    for (auto& c : n.children) number(c);
  };
  number(root);
  return hke::HierarchyTree(std::move(root), hke::Embeddings{});
}

inline std::vector<hke::ItemId> range(hke::ItemId from, hke::ItemId to) {
  std::vector<hke::ItemId> out;
  for (auto i = from; i < to; ++i) out.push_back(i);
  return out;
}

}  // namespace fixtures
