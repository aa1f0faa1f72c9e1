#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>
#include <set>
#include <unordered_map>
#include <vector>

#include "hke/common.hpp"
#include "hke/dataset/blobs.hpp"
#include "hke/dataset/dataset.hpp"
#include "hke/dataset/latent.hpp"
#include "hke/elicitation/pool.hpp"

namespace hke {

/// Anything that can answer a 3AFC question with the odd one out.
class Responder {
 public:
  virtual ~Responder() = default;
  virtual const std::string& id() const = 0;
  virtual ItemId answer(const Question& q) = 0;
};

/// Simulated annotator answering from a latent concept tree. Two items are
/// as similar as the depth of their lowest common ancestor (root = 0); the
/// item left out of the most similar pair is the odd one out.
class VirtualParticipant : public Responder {
 public:
  VirtualParticipant(std::string id, LatentHierarchy latent, const Dataset& dataset, double noise = 0.0,
                     std::uint64_t seed = 0)
      : id_(std::move(id)), latent_(std::move(latent)), noise_(noise), rng_(seed) {
    if (noise < 0.0 || noise >= 1.0) throw ValidationError("noise must be in [0, 1)");
    for (const auto& item : dataset.items()) leaves_.emplace(item.id, latent_.resolve_item(item));
  }

  const std::string& id() const override { return id_; }
  const LatentHierarchy& latent() const { return latent_; }
  double noise() const { return noise_; }

  /// Depth of the lowest common ancestor of two items' leaves.
  std::size_t similarity(ItemId a, ItemId b) const {
    const auto& pa = leaf(a);
    const auto& pb = leaf(b);
    std::size_t d = 0;
    while (d < pa.size() && d < pb.size() && pa[d] == pb[d]) ++d;
    return d;
  }

  ItemId answer(const Question& q) override {
    const auto& ids = q.ids();  // ascending, so tie order is canonical
    const std::array<std::size_t, 3> sim{similarity(ids[1], ids[2]), similarity(ids[0], ids[2]),
                                         similarity(ids[0], ids[1])};  // pair opposite slot i
    const std::size_t best = *std::max_element(sim.begin(), sim.end());
    std::vector<ItemId> candidates;
    for (std::size_t i = 0; i < 3; ++i) {
      if (sim[i] == best) candidates.push_back(ids[i]);
    }
    ItemId choice = candidates.front();
    if (candidates.size() > 1) {
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      choice = candidates[pick(rng_)];
    }
    if (noise_ > 0.0) {
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      if (unit(rng_) < noise_) {
        std::vector<ItemId> others;
        for (auto id : ids) {
          if (id != choice) others.push_back(id);
        }
        std::uniform_int_distribution<std::size_t> pick(0, 1);
        choice = others[pick(rng_)];
      }
    }
    return choice;
  }

  ItemId answer(ItemId a, ItemId b, ItemId c) { return answer(Question(a, b, c)); }

 private:
  const LatentHierarchy::LeafPath& leaf(ItemId id) const {
    auto it = leaves_.find(id);
    if (it == leaves_.end()) throw NotFoundError("item " + std::to_string(id) + " is not in the latent tree");
    return it->second;
  }

  std::string id_;
  LatentHierarchy latent_;
  double noise_ = 0.0;
  Rng rng_;
  std::unordered_map<ItemId, LatentHierarchy::LeafPath> leaves_;
};

/// The three object-taxonomy participants (small/big animal, mammal /
/// non-mammal, pet / non-pet). The dataset's finest labels must cover the
/// ten object classes.
inline std::vector<VirtualParticipant> make_object_participants(const Dataset& dataset, std::uint64_t seed = 0,
                                                               double noise = 0.0) {
  auto labels = dataset.leaf_labels();
  std::set<std::string> present;
  for (const auto& [id, label] : labels) present.insert(label);
  for (const auto& cls : object_classes()) {
    if (!present.count(cls)) throw ValidationError("dataset is missing object class '" + cls + "'");
  }
  std::vector<VirtualParticipant> out;
  for (int v = 1; v <= 3; ++v) {
    out.emplace_back("participant" + std::to_string(v), object_taxonomy(v), dataset, noise,
                     derive_seed(seed, static_cast<std::uint64_t>(v)));
  }
  return out;
}

}  // namespace hke
