#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hke/common.hpp"
#include "hke/dataset/dataset.hpp"

namespace hke {

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out

  bool operator==(const DenseLayer& o) const { return weights == o.weights && bias == o.bias; }
};

/// Activations kept by a forward pass for backpropagation.
struct ForwardCache {
  std::vector<RowMatrix> inputs;  // input of each layer
  std::vector<RowMatrix> pre;     // pre-activation of each layer
  RowMatrix output;
};

/// Fully connected map input -> hidden... -> embedding. Hidden layers use a
/// rectifier, the output layer is linear.
class EmbeddingModel {
 public:
  EmbeddingModel() = default;

  /// He-uniform initialization, zero biases.
  EmbeddingModel(std::vector<std::size_t> widths, std::uint64_t seed) : widths_(std::move(widths)) {
    check_widths();
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      const auto in = static_cast<Eigen::Index>(widths_[l]);
      const auto out = static_cast<Eigen::Index>(widths_[l + 1]);
      const double limit = std::sqrt(6.0 / static_cast<double>(in));
      std::uniform_real_distribution<double> dist(-limit, limit);
      DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
      for (Eigen::Index r = 0; r < out; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = dist(rng);
      }
      layers_.push_back(std::move(layer));
    }
  }

  static EmbeddingModel zeros(std::vector<std::size_t> widths) {
    EmbeddingModel m;
    m.widths_ = std::move(widths);
    m.check_widths();
    for (std::size_t l = 0; l + 1 < m.widths_.size(); ++l) {
      const auto in = static_cast<Eigen::Index>(m.widths_[l]);
      const auto out = static_cast<Eigen::Index>(m.widths_[l + 1]);
      m.layers_.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
    }
    return m;
  }

  static EmbeddingModel from_layers(std::vector<DenseLayer> layers) {
    if (layers.empty()) throw ValidationError("model needs at least one layer");
    EmbeddingModel m;
    m.widths_.push_back(static_cast<std::size_t>(layers.front().weights.cols()));
    for (const auto& layer : layers) {
      if (static_cast<std::size_t>(layer.weights.cols()) != m.widths_.back() ||
          layer.bias.size() != layer.weights.rows()) {
        throw ValidationError("layer shapes do not chain");
      }
      m.widths_.push_back(static_cast<std::size_t>(layer.weights.rows()));
    }
    m.layers_ = std::move(layers);
    m.check_widths();
    return m;
  }

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t input_dim() const { return widths_.front(); }
  std::size_t embedding_dim() const { return widths_.back(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& l : layers_) {
      if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

  /// Rows of `batch` are items; returns one embedding row per item.
  RowMatrix forward(const RowMatrix& batch) const {
    check_input(batch);
    RowMatrix a = batch;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      RowMatrix z = a * layers_[l].weights.transpose();
      z.rowwise() += layers_[l].bias.transpose();
      if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
      a = std::move(z);
    }
    return a;
  }

  ForwardCache forward_cached(const RowMatrix& batch) const {
    check_input(batch);
    ForwardCache cache;
    RowMatrix a = batch;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      RowMatrix z = a * layers_[l].weights.transpose();
      z.rowwise() += layers_[l].bias.transpose();
      cache.inputs.push_back(std::move(a));
      cache.pre.push_back(z);
      a = l + 1 < layers_.size() ? RowMatrix(z.cwiseMax(0.0)) : std::move(z);
    }
    cache.output = std::move(a);
    return cache;
  }

  bool operator==(const EmbeddingModel& o) const { return widths_ == o.widths_ && layers_ == o.layers_; }

 private:
  void check_widths() const {
    if (widths_.size() < 2) throw ValidationError("model needs input and embedding widths");
    for (auto w : widths_) {
      if (w == 0) throw ValidationError("layer widths must be positive");
    }
    if (widths_.back() < 2) throw ValidationError("embedding dimension must be >= 2");
  }

  void check_input(const RowMatrix& batch) const {
    if (static_cast<std::size_t>(batch.cols()) != input_dim()) {
      throw ValidationError("input has " + std::to_string(batch.cols()) + " features, model expects " +
                            std::to_string(input_dim()));
    }
  }

  std::vector<std::size_t> widths_;
  std::vector<DenseLayer> layers_;
};

/// Checkpoint: {version, widths, layers:[{weights (row-major), bias}]}.
inline nlohmann::json to_json(const EmbeddingModel& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.layers()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weights.size()));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    }
    std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back({{"weights", w}, {"bias", b}});
  }
  return {{"version", kSchemaVersion}, {"widths", model.widths()}, {"layers", layers}};
}

inline EmbeddingModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kSchemaVersion) throw ValidationError("unsupported checkpoint version");
    auto widths = j.at("widths").get<std::vector<std::size_t>>();
    const auto& jl = j.at("layers");
    if (widths.size() != jl.size() + 1) throw ValidationError("checkpoint widths do not match layer count");
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l < jl.size(); ++l) {
      auto w = jl[l].at("weights").get<std::vector<double>>();
      auto b = jl[l].at("bias").get<std::vector<double>>();
      const auto in = static_cast<Eigen::Index>(widths[l]);
      const auto out = static_cast<Eigen::Index>(widths[l + 1]);
      if (static_cast<Eigen::Index>(w.size()) != in * out || static_cast<Eigen::Index>(b.size()) != out) {
        throw ValidationError("checkpoint layer " + std::to_string(l) + " has wrong size");
      }
      DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
      for (Eigen::Index r = 0; r < out; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = w[static_cast<std::size_t>(r * in + c)];
        layer.bias(r) = b[static_cast<std::size_t>(r)];
      }
      layers.push_back(std::move(layer));
    }
    return EmbeddingModel::from_layers(std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_model(const EmbeddingModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << to_json(model).dump() << '\n';
}

inline EmbeddingModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint " + path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace hke
