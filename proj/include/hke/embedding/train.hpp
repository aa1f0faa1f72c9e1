#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "hke/common.hpp"
#include "hke/dataset/dataset.hpp"
#include "hke/embedding/losses.hpp"
#include "hke/embedding/model.hpp"

namespace hke {

/// One answered 3AFC question in training form: two positives and the item
/// picked as odd one out, with the margin frozen when it was sampled.
struct AnsweredTriplet {
  ItemId p1 = 0;
  ItemId p2 = 0;
  ItemId n = 0;
  double margin = 0.4;
};

struct TrainConfig {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  double fixed_margin = 0.4;
  double margin_base = 0.4;  // m_h; equal to the fixed margin so leaf questions keep it
  double margin_gain = 0.5;  // gamma

  void validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("momentum must be in [0, 1)");
    if (batch_size == 0) throw ValidationError("batch size must be positive");
    if (epochs == 0) throw ValidationError("epochs must be positive");
    if (!(fixed_margin > 0.0) || !(margin_base > 0.0)) throw ValidationError("margins must be positive");
    if (margin_gain < 0.0) throw ValidationError("margin gain must be non-negative");
  }
};

/// Parameter-shaped gradient buffer.
struct Gradient {
  std::vector<DenseLayer> layers;

  static Gradient zeros_like(const EmbeddingModel& model) {
    Gradient g;
    for (const auto& l : model.layers()) {
      g.layers.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()),
                          Eigen::VectorXd::Zero(l.bias.size())});
    }
    return g;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& l : layers) {
      m = std::max({m, l.weights.cwiseAbs().maxCoeff(), l.bias.cwiseAbs().maxCoeff()});
    }
    return m;
  }
};

/// Row lookup from item id into a feature matrix.
class FeatureTable {
 public:
  explicit FeatureTable(const Dataset& dataset) : features_(dataset.feature_matrix()) {
    for (std::size_t i = 0; i < dataset.items().size(); ++i) rows_.emplace(dataset.items()[i].id, i);
  }

  const RowMatrix& matrix() const { return features_; }

  Eigen::Index row(ItemId id) const {
    auto it = rows_.find(id);
    if (it == rows_.end()) throw NotFoundError("triplet references unknown item " + std::to_string(id));
    return static_cast<Eigen::Index>(it->second);
  }

 private:
  RowMatrix features_;
  std::unordered_map<ItemId, std::size_t> rows_;
};

/// Sum of dual-triplet losses over `triplets` and its gradient with respect
/// to every model parameter. Each distinct item is forwarded once; the
/// hinge and the rectifier both take gradient 0 exactly at the kink.
inline double loss_and_gradient(const EmbeddingModel& model, std::span<const AnsweredTriplet> triplets,
                                const FeatureTable& table, Gradient& grad) {
  std::unordered_map<ItemId, Eigen::Index> slot;
  std::vector<Eigen::Index> source_rows;
  auto slot_of = [&](ItemId id) {
    auto [it, fresh] = slot.emplace(id, static_cast<Eigen::Index>(source_rows.size()));
    if (fresh) source_rows.push_back(table.row(id));
    return it->second;
  };
  std::vector<std::array<Eigen::Index, 3>> local;
  local.reserve(triplets.size());
  for (const auto& t : triplets) local.push_back({slot_of(t.p1), slot_of(t.p2), slot_of(t.n)});

  RowMatrix batch(static_cast<Eigen::Index>(source_rows.size()), table.matrix().cols());
  for (std::size_t i = 0; i < source_rows.size(); ++i) {
    batch.row(static_cast<Eigen::Index>(i)) = table.matrix().row(source_rows[i]);
  }
  ForwardCache cache = model.forward_cached(batch);
  const RowMatrix& e = cache.output;

  RowMatrix d_out = RowMatrix::Zero(e.rows(), e.cols());
  double total = 0.0;
  for (std::size_t t = 0; t < triplets.size(); ++t) {
    const auto [i1, i2, in] = local[t];
    const double m = triplets[t].margin;
    const auto p1 = e.row(i1);
    const auto p2 = e.row(i2);
    const auto n = e.row(in);
    const double pair = (p1 - p2).squaredNorm();
    const double h1 = pair - (n - p1).squaredNorm() + m;
    const double h2 = pair - (n - p2).squaredNorm() + m;
    if (!std::isfinite(h1) || !std::isfinite(h2)) return std::numeric_limits<double>::quiet_NaN();
    if (h1 > 0.0) {
      total += h1;
      d_out.row(i1) += 2.0 * (p1 - p2) - 2.0 * (p1 - n);
      d_out.row(i2) += 2.0 * (p2 - p1);
      d_out.row(in) -= 2.0 * (n - p1);
    }
    if (h2 > 0.0) {
      total += h2;
      d_out.row(i1) += 2.0 * (p1 - p2);
      d_out.row(i2) += 2.0 * (p2 - p1) - 2.0 * (p2 - n);
      d_out.row(in) -= 2.0 * (n - p2);
    }
  }

  const auto& layers = model.layers();
  RowMatrix dz = std::move(d_out);
  for (std::size_t l = layers.size(); l-- > 0;) {
    grad.layers[l].weights.noalias() += dz.transpose() * cache.inputs[l];
    grad.layers[l].bias += dz.colwise().sum().transpose();
    if (l == 0) break;
    RowMatrix da = dz * layers[l].weights;
    dz = da.cwiseProduct((cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
  }
  return total;
}

/// Loss-only evaluation through plain forward passes.
inline double total_dual_triplet_loss(const EmbeddingModel& model, std::span<const AnsweredTriplet> triplets,
                                      const FeatureTable& table) {
  double total = 0.0;
  for (const auto& t : triplets) {
    const RowMatrix e1 = model.forward(table.matrix().row(table.row(t.p1)));
    const RowMatrix e2 = model.forward(table.matrix().row(table.row(t.p2)));
    const RowMatrix en = model.forward(table.matrix().row(table.row(t.n)));
    total += dual_triplet_loss(e1.row(0), e2.row(0), en.row(0), t.margin);
  }
  return total;
}

struct TrainResult {
  EmbeddingModel model;
  std::vector<double> epoch_loss;  // mean loss per triplet, measured during each epoch
};

/// Mini-batch SGD with momentum on the dual-triplet objective. Each step
/// descends the batch-mean loss; batch order is reshuffled per epoch from
/// the config seed.
inline TrainResult train(EmbeddingModel model, std::span<const AnsweredTriplet> triplets, const Dataset& dataset,
                         const TrainConfig& config) {
  config.validate();
  if (triplets.empty()) throw ValidationError("cannot train on an empty triplet list");
  for (const auto& t : triplets) {
    if (t.p1 == t.p2 || t.p1 == t.n || t.p2 == t.n) throw ValidationError("triplet ids must be distinct");
    if (!(t.margin > 0.0)) throw ValidationError("triplet margin must be positive");
  }
  if (model.input_dim() != dataset.dim()) {
    throw ValidationError("model input dim " + std::to_string(model.input_dim()) + " != dataset dim " +
                          std::to_string(dataset.dim()));
  }
  FeatureTable table(dataset);
  for (const auto& t : triplets) {
    table.row(t.p1);
    table.row(t.p2);
    table.row(t.n);
  }

  Gradient velocity = Gradient::zeros_like(model);
  Gradient grad = Gradient::zeros_like(model);
  std::vector<std::size_t> order(triplets.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<AnsweredTriplet> batch;
  Rng rng(config.seed);

  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(triplets[order[i]]);
      for (auto& g : grad.layers) {
        g.weights.setZero();
        g.bias.setZero();
      }
      const double loss = loss_and_gradient(model, batch, table, grad);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) + " at batch starting " +
                            std::to_string(start));
      }
      epoch_total += loss;
      const double scale = config.learning_rate / static_cast<double>(batch.size());
      auto& layers = model.layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        velocity.layers[l].weights = config.momentum * velocity.layers[l].weights - scale * grad.layers[l].weights;
        velocity.layers[l].bias = config.momentum * velocity.layers[l].bias - scale * grad.layers[l].bias;
        layers[l].weights += velocity.layers[l].weights;
        layers[l].bias += velocity.layers[l].bias;
      }
    }
    const double mean = epoch_total / static_cast<double>(triplets.size());
    if (!std::isfinite(mean) || !model.all_finite()) {
      throw TrainingError("training diverged in epoch " + std::to_string(epoch));
    }
    result.epoch_loss.push_back(mean);
  }
  result.model = std::move(model);
  return result;
}

/// Embeddings for a set of items, one row per id.
struct Embeddings {
  std::vector<ItemId> ids;
  RowMatrix values;

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }

  Eigen::Index row_of(ItemId id) const {
    auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) throw NotFoundError("no embedding for item " + std::to_string(id));
    return static_cast<Eigen::Index>(it - ids.begin());
  }

  bool operator==(const Embeddings& o) const { return ids == o.ids && values == o.values; }
};

inline Embeddings embed_all(const EmbeddingModel& model, const Dataset& dataset) {
  return {dataset.ids(), model.forward(dataset.feature_matrix())};
}

/// Raw features wrapped as embeddings (the untrained baseline).
inline Embeddings raw_features(const Dataset& dataset) { return {dataset.ids(), dataset.feature_matrix()}; }

}  // namespace hke
