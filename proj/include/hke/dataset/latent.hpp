#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hke/common.hpp"
#include "hke/dataset/dataset.hpp"

namespace hke {

struct ConceptNode {
  std::string name;
  std::vector<ConceptNode> children;

  bool is_leaf() const { return children.empty(); }
  bool operator==(const ConceptNode&) const = default;
};

/// A ground-truth concept tree. Items attach to leaves through their
/// label_path: either the full root-to-leaf name path, or the leaf name
/// alone when that name is unique among leaves.
class LatentHierarchy {
 public:
  /// Child-index path from the root to a leaf.
  using LeafPath = std::vector<std::size_t>;

  LatentHierarchy() = default;
  explicit LatentHierarchy(ConceptNode root) : root_(std::move(root)) {
    if (root_.children.empty()) throw ValidationError("latent hierarchy must have depth >= 1");
    index_leaves(root_, {}, {});
  }

  const ConceptNode& root() const { return root_; }

  std::size_t depth() const { return depth_of(root_); }

  std::size_t leaf_count() const { return leaves_.size(); }

  /// Names along every root-to-leaf path (root excluded).
  std::vector<std::vector<std::string>> leaf_name_paths() const {
    std::vector<std::vector<std::string>> out;
    for (const auto& leaf : leaves_) out.push_back(leaf.names);
    return out;
  }

  std::optional<LeafPath> resolve(const std::vector<std::string>& label_path) const {
    if (label_path.empty()) return std::nullopt;
    for (const auto& leaf : leaves_) {
      if (leaf.names == label_path) return leaf.indices;
    }
    const std::string& last = label_path.back();
    const LeafPath* found = nullptr;
    for (const auto& leaf : leaves_) {
      if (leaf.names.back() == last) {
        if (found) return std::nullopt;  // ambiguous leaf name
        found = &leaf.indices;
      }
    }
    if (found) return *found;
    return std::nullopt;
  }

  LeafPath resolve_item(const Item& item) const {
    auto path = resolve(item.label_path);
    if (!path) {
      throw NotFoundError("item " + std::to_string(item.id) + " ('" + item.path_string() +
                          "') does not map to a leaf of hierarchy '" + root_.name + "'");
    }
    return *path;
  }

  /// Names along a leaf path (root excluded).
  std::vector<std::string> names_of(const LeafPath& path) const {
    std::vector<std::string> out;
    const ConceptNode* node = &root_;
    for (std::size_t idx : path) {
      node = &node->children.at(idx);
      out.push_back(node->name);
    }
    return out;
  }

  /// Throws unless every dataset item resolves to a leaf.
  void validate_against(const Dataset& dataset) const {
    for (const auto& item : dataset.items()) resolve_item(item);
  }

  /// Item id -> "a/b/c" path of its leaf in this hierarchy.
  std::map<ItemId, std::string> leaf_labels(const Dataset& dataset) const {
    std::map<ItemId, std::string> out;
    for (const auto& item : dataset.items()) {
      auto names = names_of(resolve_item(item));
      std::string s;
      for (std::size_t i = 0; i < names.size(); ++i) s += (i ? "/" : "") + names[i];
      out.emplace(item.id, s);
    }
    return out;
  }

  /// Item id -> concept name at `depth` below the root (1 = top level),
  /// clamped to the item's leaf.
  std::map<ItemId, std::string> labels_at_depth(const Dataset& dataset, std::size_t depth) const {
    std::map<ItemId, std::string> out;
    for (const auto& item : dataset.items()) {
      auto names = names_of(resolve_item(item));
      out.emplace(item.id, names[std::min(depth, names.size()) - 1]);
    }
    return out;
  }

  /// Builds the tree implied by the dataset's label paths.
  static LatentHierarchy from_label_paths(const Dataset& dataset, std::string root_name = "root") {
    ConceptNode root{std::move(root_name), {}};
    for (const auto& item : dataset.items()) {
      if (item.label_path.empty()) {
        throw ValidationError("item " + std::to_string(item.id) + " has no label path");
      }
      ConceptNode* node = &root;
      for (const auto& name : item.label_path) {
        auto it = std::find_if(node->children.begin(), node->children.end(),
                               [&](const ConceptNode& c) { return c.name == name; });
        if (it == node->children.end()) {
          node->children.push_back(ConceptNode{name, {}});
          node = &node->children.back();
        } else {
          node = &*it;
        }
      }
    }
    LatentHierarchy tree(std::move(root));
    tree.validate_against(dataset);
    return tree;
  }

  bool operator==(const LatentHierarchy& other) const { return root_ == other.root_; }

 private:
  struct Leaf {
    LeafPath indices;
    std::vector<std::string> names;
  };

  static std::size_t depth_of(const ConceptNode& node) {
    std::size_t d = 0;
    for (const auto& c : node.children) d = std::max(d, 1 + depth_of(c));
    return d;
  }

  void index_leaves(const ConceptNode& node, LeafPath indices, std::vector<std::string> names) {
    if (node.is_leaf() && !indices.empty()) {
      leaves_.push_back({std::move(indices), std::move(names)});
      return;
    }
    for (std::size_t i = 0; i < node.children.size(); ++i) {
      auto ci = indices;
      auto cn = names;
      ci.push_back(i);
      cn.push_back(node.children[i].name);
      index_leaves(node.children[i], std::move(ci), std::move(cn));
    }
  }

  ConceptNode root_;
  std::vector<Leaf> leaves_;
};

inline nlohmann::json to_json(const ConceptNode& node) {
  nlohmann::json children = nlohmann::json::array();
  for (const auto& c : node.children) children.push_back(to_json(c));
  return {{"name", node.name}, {"children", children}};
}

inline ConceptNode concept_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string()) {
    throw ValidationError("hierarchy node needs a string 'name'");
  }
  ConceptNode node{j["name"].get<std::string>(), {}};
  if (j.contains("children")) {
    for (const auto& c : j["children"]) node.children.push_back(concept_from_json(c));
  }
  return node;
}

inline nlohmann::json to_json(const LatentHierarchy& tree) { return to_json(tree.root()); }

inline LatentHierarchy latent_from_json(const nlohmann::json& j) { return LatentHierarchy(concept_from_json(j)); }

inline LatentHierarchy load_latent(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open hierarchy file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("hierarchy file " + path + ": " + e.what());
  }
  return latent_from_json(j);
}

inline void save_latent(const LatentHierarchy& tree, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write hierarchy file " + path);
  out << to_json(tree).dump(2) << '\n';
}

}  // namespace hke
