#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hke/common.hpp"
#include "hke/dataset/dataset.hpp"
#include "hke/dataset/latent.hpp"

namespace hke {

struct BlobOptions {
  /// Leading dimensions that carry the class structure; the rest are
  /// class-independent nuisance. 0 means max(2, dim / 4).
  std::size_t signal_dims = 0;
  /// Offset length of a depth-1 concept; each level below scales by `decay`.
  double top_scale = 3.0;
  double decay = 0.5;
  /// Per-item spread around the leaf center in the signal dimensions.
  double leaf_spread = 0.3;
  /// Per-item spread in the nuisance dimensions.
  double nuisance_spread = 1.2;
};

/// Samples `per_leaf` Gaussian points per leaf of `class_tree`. Each concept
/// on a root-to-leaf path adds a random offset whose length shrinks with
/// depth, so leaves that part ways near the root end up farther apart than
/// leaves that share a deep ancestor. Labels are the tree's name paths.
inline Dataset generate_blobs(const LatentHierarchy& class_tree, std::size_t per_leaf, std::size_t dim,
                              std::uint64_t seed, const BlobOptions& options = {}) {
  if (per_leaf < 1) throw ValidationError("per_leaf must be >= 1");
  if (dim < 2) throw ValidationError("dim must be >= 2");
  if (class_tree.leaf_count() < 2) throw ValidationError("class tree must have at least two leaves");

  const std::size_t signal =
      std::min(dim, options.signal_dims == 0 ? std::max<std::size_t>(2, dim / 4) : options.signal_dims);
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto random_direction = [&] {
    std::vector<double> v(signal);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& x : v) {
        x = gauss(rng);
        norm += x * x;
      }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
  };

  // Offsets are drawn per concept in a fixed depth-first order.
  std::vector<std::vector<double>> centers;
  std::vector<std::vector<std::string>> names;
  auto walk = [&](auto&& self, const ConceptNode& node, std::size_t depth, std::vector<double> center,
                  std::vector<std::string> path) -> void {
    if (depth > 0) {
      const double scale = options.top_scale * std::pow(options.decay, static_cast<double>(depth - 1));
      auto dir = random_direction();
      for (std::size_t i = 0; i < signal; ++i) center[i] += scale * dir[i];
      path.push_back(node.name);
    }
    if (node.is_leaf()) {
      centers.push_back(std::move(center));
      names.push_back(std::move(path));
      return;
    }
    for (const auto& child : node.children) self(self, child, depth + 1, center, path);
  };
  walk(walk, class_tree.root(), 0, std::vector<double>(signal, 0.0), {});

  std::vector<Item> items;
  items.reserve(centers.size() * per_leaf);
  ItemId next = 0;
  for (std::size_t leaf = 0; leaf < centers.size(); ++leaf) {
    for (std::size_t k = 0; k < per_leaf; ++k) {
      Item item;
      item.id = next++;
      item.label_path = names[leaf];
      item.features.resize(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        item.features[i] = i < signal ? centers[leaf][i] + options.leaf_spread * gauss(rng)
                                      : options.nuisance_spread * gauss(rng);
      }
      items.push_back(std::move(item));
    }
  }
  return Dataset("blobs", dim, std::move(items));
}

/// Ten-class object taxonomies in the style of the classic tiny-image
/// benchmark. All variants share the leaves and the animal/transportation
/// split; they differ in how animals are grouped:
///   1: small animal / big animal, 2: mammal / non-mammal, 3: pet / non-pet.
inline LatentHierarchy object_taxonomy(int variant) {
  auto leaf = [](const char* n) { return ConceptNode{n, {}}; };
  ConceptNode transportation{"transportation",
                             {leaf("airplane"), leaf("automobile"), leaf("ship"), leaf("truck")}};
  ConceptNode animal{"animal", {}};
  switch (variant) {
    case 1:
      animal.children = {ConceptNode{"small animal", {leaf("bird"), leaf("cat"), leaf("dog"), leaf("frog")}},
                         ConceptNode{"big animal", {leaf("deer"), leaf("horse")}}};
      break;
    case 2:
      animal.children = {ConceptNode{"mammal", {leaf("cat"), leaf("deer"), leaf("dog"), leaf("horse")}},
                         ConceptNode{"non-mammal", {leaf("bird"), leaf("frog")}}};
      break;
    case 3:
      animal.children = {ConceptNode{"pet", {leaf("cat"), leaf("dog")}},
                         ConceptNode{"non-pet", {leaf("bird"), leaf("deer"), leaf("frog"), leaf("horse")}}};
      break;
    default:
      throw ValidationError("object taxonomy variant must be 1, 2 or 3");
  }
  return LatentHierarchy(ConceptNode{"participant" + std::to_string(variant), {animal, transportation}});
}

inline const std::vector<std::string>& object_classes() {
  static const std::vector<std::string> classes{"airplane", "automobile", "bird", "cat",  "deer",
                                                "dog",      "frog",       "horse", "ship", "truck"};
  return classes;
}

/// Ten object classes as unrelated blobs: every class center is an
/// independent random offset, so the features favor none of the taxonomies
/// above. Label paths hold just the class name.
inline Dataset object_blobs(std::uint64_t seed, std::size_t per_class = 100, std::size_t dim = 32,
                            const BlobOptions& options = {}) {
  ConceptNode root{"objects", {}};
  for (const auto& c : object_classes()) root.children.push_back(ConceptNode{c, {}});
  return generate_blobs(LatentHierarchy(root), per_class, dim, seed, options);
}

}  // namespace hke
