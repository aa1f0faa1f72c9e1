#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hke/common.hpp"
#include "hke/embedding/train.hpp"
#include "hke/hierarchy/kmeans.hpp"

namespace hke {

struct HierarchyNode {
  int id = 0;
  std::vector<ItemId> members;
  Eigen::VectorXd centroid;
  std::vector<HierarchyNode> children;
  double diversity = 0.0;  // d_H
  std::optional<std::string> majority_label;
  std::optional<double> accuracy;

  bool is_leaf() const { return children.empty(); }
};

/// Mean squared distance between distinct child centroids, taken over
/// ordered pairs (normalizer n^2 - n). Zero with fewer than two children.
inline double diversity_factor(const std::vector<Eigen::VectorXd>& child_centroids) {
  const std::size_t n = child_centroids.size();
  if (n < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t k = 0; k < n; ++k) {
      if (p != k) sum += (child_centroids[p] - child_centroids[k]).squaredNorm();
    }
  }
  return sum / static_cast<double>(n * n - n);
}

inline double diversity_factor(const HierarchyNode& node) {
  std::vector<Eigen::VectorXd> centroids;
  for (const auto& c : node.children) centroids.push_back(c.centroid);
  return diversity_factor(centroids);
}

struct HierarchyConfig {
  std::size_t min_split_size = 8;
  std::size_t max_depth = 6;
  int k_min = 2;
  int k_max = 5;
  double min_silhouette = 0.15;
  std::uint64_t seed = 0;
  KMeansOptions kmeans;
};

class HierarchyTree {
 public:
  HierarchyTree() = default;
  HierarchyTree(HierarchyNode root, Embeddings snapshot) : root_(std::move(root)), snapshot_(std::move(snapshot)) {
    reindex();
  }

  const HierarchyNode& root() const { return root_; }
  HierarchyNode& mutable_root() { return root_; }
  const Embeddings& snapshot() const { return snapshot_; }

  /// All nodes in pre-order.
  std::vector<const HierarchyNode*> nodes() const {
    std::vector<const HierarchyNode*> out;
    std::function<void(const HierarchyNode&)> walk = [&](const HierarchyNode& n) {
      out.push_back(&n);
      for (const auto& c : n.children) walk(c);
    };
    walk(root_);
    return out;
  }

  std::size_t node_count() const { return nodes().size(); }

  std::size_t depth() const {
    std::function<std::size_t(const HierarchyNode&)> d = [&](const HierarchyNode& n) -> std::size_t {
      std::size_t best = 0;
      for (const auto& c : n.children) best = std::max(best, 1 + d(c));
      return best;
    };
    return d(root_);
  }

  const HierarchyNode* find(int id) const {
    for (const auto* n : nodes()) {
      if (n->id == id) return n;
    }
    return nullptr;
  }

  int leaf_of(ItemId item) const {
    auto it = leaf_index_.find(item);
    if (it == leaf_index_.end()) throw NotFoundError("item " + std::to_string(item) + " is not in the tree");
    return it->second;
  }

  bool contains(ItemId item) const { return leaf_index_.count(item) != 0; }

  /// Node ids from the root down to the item's leaf.
  std::vector<int> path_of(ItemId item) const {
    std::vector<int> path;
    std::function<bool(const HierarchyNode&)> walk = [&](const HierarchyNode& n) {
      path.push_back(n.id);
      if (n.is_leaf()) {
        if (std::find(n.members.begin(), n.members.end(), item) != n.members.end()) return true;
      } else {
        for (const auto& c : n.children) {
          if (walk(c)) return true;
        }
      }
      path.pop_back();
      return false;
    };
    if (!walk(root_)) throw NotFoundError("item " + std::to_string(item) + " is not in the tree");
    return path;
  }

  /// Throws unless children partition their parent and leaves partition the
  /// root's members.
  void check_partition() const {
    std::function<void(const HierarchyNode&)> check = [&](const HierarchyNode& n) {
      if (n.is_leaf()) return;
      std::multiset<ItemId> parent(n.members.begin(), n.members.end());
      std::multiset<ItemId> union_of_children;
      for (const auto& c : n.children) {
        if (c.members.empty()) throw ValidationError("node " + std::to_string(c.id) + " is empty");
        union_of_children.insert(c.members.begin(), c.members.end());
        check(c);
      }
      if (parent != union_of_children) {
        throw ValidationError("children of node " + std::to_string(n.id) + " do not partition it");
      }
    };
    std::set<ItemId> unique(root_.members.begin(), root_.members.end());
    if (unique.size() != root_.members.size()) throw ValidationError("root lists an item twice");
    check(root_);
  }

 private:
  void reindex() {
    leaf_index_.clear();
    for (const auto* n : nodes()) {
      if (!n->is_leaf()) continue;
      for (auto m : n->members) {
        if (!leaf_index_.emplace(m, n->id).second) {
          throw ValidationError("item " + std::to_string(m) + " appears in two leaves");
        }
      }
    }
  }

  HierarchyNode root_;
  Embeddings snapshot_;
  std::unordered_map<ItemId, int> leaf_index_;
};

namespace detail {

inline Eigen::VectorXd mean_row(const RowMatrix& values, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(values.cols());
  for (auto r : rows) c += values.row(r).transpose();
  return c / static_cast<double>(rows.size());
}

}  // namespace detail

/// Top-down clustering: a node with enough members below the depth cap is
/// split by k-means with k picked by silhouette, provided the best
/// silhouette clears the gate. Node ids are assigned in pre-order.
inline HierarchyTree build_hierarchy(const Embeddings& embeddings, const HierarchyConfig& config = {}) {
  if (embeddings.size() < 2) throw ValidationError("hierarchy needs at least 2 items");

  std::function<HierarchyNode(std::vector<Eigen::Index>, std::size_t, std::uint64_t)> grow =
      [&](std::vector<Eigen::Index> rows, std::size_t depth, std::uint64_t path_seed) {
        HierarchyNode node;
        for (auto r : rows) node.members.push_back(embeddings.ids[static_cast<std::size_t>(r)]);
        node.centroid = detail::mean_row(embeddings.values, rows);
        if (rows.size() < config.min_split_size || depth >= config.max_depth) return node;

        RowMatrix points(static_cast<Eigen::Index>(rows.size()), embeddings.values.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) points.row(static_cast<Eigen::Index>(i)) = embeddings.values.row(rows[i]);
        const int k_max = std::min<int>(config.k_max, static_cast<int>(rows.size()) - 1);
        if (k_max < config.k_min) return node;
        auto selection = select_k(points, config.k_min, k_max, path_seed, config.kmeans);
        if (selection.silhouette < config.min_silhouette) return node;

        std::vector<std::vector<Eigen::Index>> groups(static_cast<std::size_t>(selection.k));
        for (std::size_t i = 0; i < rows.size(); ++i) groups[selection.clustering.assignment[i]].push_back(rows[i]);
        for (std::size_t g = 0; g < groups.size(); ++g) {
          if (groups[g].empty()) continue;
          node.children.push_back(grow(std::move(groups[g]), depth + 1, derive_seed(path_seed, g)));
        }
        if (node.children.size() == 1) {
          node.children.clear();
          return node;
        }
        node.diversity = diversity_factor(node);
        return node;
      };

  std::vector<Eigen::Index> all(embeddings.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Eigen::Index>(i);
  HierarchyNode root = grow(std::move(all), 0, config.seed);

  int next_id = 0;
  std::function<void(HierarchyNode&)> number = [&](HierarchyNode& n) {
    n.id = next_id++;
    for (auto& c : n.children) number(c);
  };
  number(root);
  HierarchyTree tree(std::move(root), embeddings);
  tree.check_partition();
  return tree;
}

// ---- export -----------------------------------------------------------------

inline nlohmann::json to_json(const HierarchyNode& node) {
  nlohmann::json children = nlohmann::json::array();
  for (const auto& c : node.children) children.push_back(to_json(c));
  std::vector<double> centroid(node.centroid.data(), node.centroid.data() + node.centroid.size());
  nlohmann::json j{{"id", node.id},
                   {"members", node.members},
                   {"centroid", centroid},
                   {"d_H", node.diversity},
                   {"children", children}};
  j["majority_label"] = node.majority_label ? nlohmann::json(*node.majority_label) : nlohmann::json(nullptr);
  j["accuracy"] = node.accuracy ? nlohmann::json(*node.accuracy) : nlohmann::json(nullptr);
  return j;
}

inline HierarchyNode node_from_json(const nlohmann::json& j) {
  HierarchyNode node;
  node.id = j.at("id").get<int>();
  node.members = j.at("members").get<std::vector<ItemId>>();
  auto centroid = j.at("centroid").get<std::vector<double>>();
  node.centroid = Eigen::Map<Eigen::VectorXd>(centroid.data(), static_cast<Eigen::Index>(centroid.size()));
  node.diversity = j.at("d_H").get<double>();
  if (j.contains("majority_label") && !j["majority_label"].is_null()) node.majority_label = j["majority_label"].get<std::string>();
  if (j.contains("accuracy") && !j["accuracy"].is_null()) node.accuracy = j["accuracy"].get<double>();
  for (const auto& c : j.at("children")) node.children.push_back(node_from_json(c));
  return node;
}

inline nlohmann::json to_json(const HierarchyTree& tree) {
  auto j = to_json(tree.root());
  j["version"] = kSchemaVersion;
  return j;
}

/// Reloads an exported tree. The embedding snapshot is not part of the
/// export, so the result carries an empty one.
inline HierarchyTree tree_from_json(const nlohmann::json& j) {
  try {
    HierarchyTree tree(node_from_json(j), Embeddings{});
    tree.check_partition();
    return tree;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed tree document: ") + e.what());
  }
}

inline void save_tree(const HierarchyTree& tree, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write tree file " + path.string());
  out << to_json(tree).dump() << '\n';
}

inline HierarchyTree load_tree(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tree file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("tree file " + path.string() + ": " + e.what());
  }
  return tree_from_json(j);
}

/// Flat export: `item_id,leaf_id,path` where path joins node ids root->leaf
/// with '/'. Rows are sorted by item id.
inline void write_tree_csv(const HierarchyTree& tree, std::ostream& out) {
  out << "item_id,leaf_id,path\n";
  std::map<ItemId, std::vector<int>> paths;
  std::function<void(const HierarchyNode&, std::vector<int>)> walk = [&](const HierarchyNode& n, std::vector<int> p) {
    p.push_back(n.id);
    if (n.is_leaf()) {
      for (auto m : n.members) paths[m] = p;
      return;
    }
    for (const auto& c : n.children) walk(c, p);
  };
  walk(tree.root(), {});
  for (const auto& [item, path] : paths) {
    out << item << ',' << path.back() << ',';
    for (std::size_t i = 0; i < path.size(); ++i) out << (i ? "/" : "") << path[i];
    out << '\n';
  }
}

}  // namespace hke
