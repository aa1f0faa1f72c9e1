#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hke/common.hpp"

namespace hke {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Renderable description of a stimulus. Synthetic shapes fill the four
/// descriptor fields; items backed by an external picture only set `image`.
struct Stimulus {
  std::string shape;        // triangle | circle | rectangle
  std::string deformation;  // none | vstretch | hstretch
  std::string color;
  std::string thickness;  // thin | medium | thick
  std::string image;

  bool is_shape() const { return !shape.empty(); }
  bool operator==(const Stimulus&) const = default;
};

struct Item {
  ItemId id = 0;
  std::vector<double> features;
  std::vector<std::string> label_path;  // coarsest concept first
  std::optional<Stimulus> stimulus;

  /// Finest ground-truth concept, or empty when unlabeled.
  std::string leaf_label() const { return label_path.empty() ? std::string{} : label_path.back(); }
  /// Ground-truth concept at `depth` (0 = coarsest), clamped to the finest one.
  std::string label_at(std::size_t depth) const {
    if (label_path.empty()) return {};
    return label_path[std::min(depth, label_path.size() - 1)];
  }
  std::string path_string() const {
    std::string out;
    for (std::size_t i = 0; i < label_path.size(); ++i) {
      if (i) out += '/';
      out += label_path[i];
    }
    return out;
  }

  bool operator==(const Item&) const = default;
};

/// Checks that no concept is listed as an ancestor of a concept that is
/// elsewhere listed as its own ancestor. Returns the offending pair, if any.
inline std::optional<std::pair<std::string, std::string>> find_prefix_conflict(
    const std::vector<Item>& items) {
  std::set<std::pair<std::string, std::string>> above;
  for (const auto& item : items) {
    const auto& path = item.label_path;
    for (std::size_t i = 0; i < path.size(); ++i) {
      for (std::size_t j = i + 1; j < path.size(); ++j) {
        if (path[i] == path[j]) return std::make_pair(path[i], path[j]);
        above.emplace(path[i], path[j]);
      }
    }
  }
  for (const auto& [hi, lo] : above) {
    if (above.count({lo, hi})) return std::make_pair(hi, lo);
  }
  return std::nullopt;
}

class Dataset {
 public:
  Dataset() = default;

  Dataset(std::string name, std::size_t dim, std::vector<Item> items)
      : name_(std::move(name)), dim_(dim), items_(std::move(items)) {
    if (items_.empty()) throw ValidationError("dataset has no items");
    if (items_.size() < 3) throw ValidationError("dataset needs at least 3 items for a 3AFC question");
    if (dim_ == 0) throw ValidationError("dataset dimension must be positive");
    for (std::size_t row = 0; row < items_.size(); ++row) {
      const auto& item = items_[row];
      if (item.features.size() != dim_) {
        throw ValidationError("item " + std::to_string(item.id) + ": expected " + std::to_string(dim_) +
                              " features, got " + std::to_string(item.features.size()));
      }
      for (double v : item.features) {
        if (!std::isfinite(v)) throw ValidationError("item " + std::to_string(item.id) + ": non-finite feature");
      }
      if (!index_.emplace(item.id, row).second) {
        throw ValidationError("duplicate item id " + std::to_string(item.id));
      }
    }
    if (auto conflict = find_prefix_conflict(items_)) {
      throw ValidationError("inconsistent label paths: '" + conflict->first + "' and '" + conflict->second +
                            "' appear above each other");
    }
  }

  const std::string& name() const { return name_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return items_.size(); }
  const std::vector<Item>& items() const { return items_; }

  bool contains(ItemId id) const { return index_.count(id) != 0; }

  std::size_t index_of(ItemId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw NotFoundError("unknown item id " + std::to_string(id));
    return it->second;
  }

  const Item& item(ItemId id) const { return items_[index_of(id)]; }

  std::vector<ItemId> ids() const {
    std::vector<ItemId> out;
    out.reserve(items_.size());
    for (const auto& item : items_) out.push_back(item.id);
    return out;
  }

  /// One row per item, in dataset order.
  RowMatrix feature_matrix() const {
    RowMatrix m(static_cast<Eigen::Index>(items_.size()), static_cast<Eigen::Index>(dim_));
    for (std::size_t r = 0; r < items_.size(); ++r) {
      for (std::size_t c = 0; c < dim_; ++c) m(r, c) = items_[r].features[c];
    }
    return m;
  }

  /// Item id -> finest label. Unlabeled items are omitted.
  std::map<ItemId, std::string> leaf_labels() const {
    std::map<ItemId, std::string> out;
    for (const auto& item : items_) {
      if (!item.label_path.empty()) out.emplace(item.id, item.leaf_label());
    }
    return out;
  }

  /// Item id -> full label path string ("a/b/c").
  std::map<ItemId, std::string> path_labels() const {
    std::map<ItemId, std::string> out;
    for (const auto& item : items_) {
      if (!item.label_path.empty()) out.emplace(item.id, item.path_string());
    }
    return out;
  }

  std::map<ItemId, std::string> labels_at(std::size_t depth) const {
    std::map<ItemId, std::string> out;
    for (const auto& item : items_) {
      if (!item.label_path.empty()) out.emplace(item.id, item.label_at(depth));
    }
    return out;
  }

  /// Number of distinct 3AFC questions, B choose 3.
  std::uint64_t question_space_size() const {
    const std::uint64_t b = items_.size();
    return b * (b - 1) * (b - 2) / 6;
  }

  bool operator==(const Dataset& other) const {
    return name_ == other.name_ && dim_ == other.dim_ && items_ == other.items_;
  }

 private:
  std::string name_;
  std::size_t dim_ = 0;
  std::vector<Item> items_;
  std::unordered_map<ItemId, std::size_t> index_;
};

}  // namespace hke
