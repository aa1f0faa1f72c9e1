#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hke/common.hpp"
#include "hke/dataset/blobs.hpp"
#include "hke/dataset/io.hpp"
#include "hke/dataset/latent.hpp"
#include "hke/dataset/shapes.hpp"
#include "hke/elicitation/selection.hpp"
#include "hke/embedding/train.hpp"
#include "hke/hierarchy/tree.hpp"
#include "hke/participants/virtual_participant.hpp"

namespace hke {

enum class SelectionMode { random, active };
enum class MarginMode { fixed, adaptive };

inline const char* to_string(SelectionMode m) { return m == SelectionMode::random ? "random" : "active"; }
inline const char* to_string(MarginMode m) { return m == MarginMode::fixed ? "fixed" : "adaptive"; }

inline SelectionMode parse_selection_mode(const std::string& s) {
  if (s == "random") return SelectionMode::random;
  if (s == "active") return SelectionMode::active;
  throw ValidationError("selection mode must be 'random' or 'active', got '" + s + "'");
}

inline MarginMode parse_margin_mode(const std::string& s) {
  if (s == "fixed") return MarginMode::fixed;
  if (s == "adaptive") return MarginMode::adaptive;
  throw ValidationError("margin mode must be 'fixed' or 'adaptive', got '" + s + "'");
}

/// Where a run gets its items: a CSV file or one of the built-in generators.
struct DatasetRef {
  std::string path;       // dataset CSV; wins over `generator` when set
  std::string generator;  // "shapes" | "blobs"
  std::uint64_t seed = 7;
  int taxonomy = 0;  // blob class tree; 0 = ten unrelated classes
  std::size_t per_leaf = 100;
  std::size_t dim = 32;
};

struct ParticipantSpec {
  std::string id = "participant";
  /// "labels" (tree implied by the dataset's label paths), "taxonomy1".."taxonomy3",
  /// or a path to a hierarchy JSON file.
  std::string hierarchy = "labels";
  double noise = 0.0;
  std::uint64_t seed = 0;
};

struct ModelShape {
  std::vector<std::size_t> hidden{64};
  std::size_t embedding_dim = 8;

  std::vector<std::size_t> widths(std::size_t input_dim) const {
    std::vector<std::size_t> w{input_dim};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(embedding_dim);
    return w;
  }
};

struct ExperimentConfig {
  DatasetRef dataset;
  std::vector<ParticipantSpec> participants;
  std::size_t initial_questions = 1000;
  std::size_t iterations = 5;
  TrainConfig train;  // fixed margin, m_h and gamma live here
  SelectionConfig selection;  // per-iteration budget lives here
  HierarchyConfig hierarchy;
  ModelShape model;
  SelectionMode selection_mode = SelectionMode::active;
  MarginMode margin_mode = MarginMode::adaptive;
  /// Continue from the previous iteration's weights instead of re-initializing.
  bool warm_start = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (initial_questions == 0) throw ValidationError("initial question count must be positive");
    if (model.embedding_dim < 2) throw ValidationError("embedding dimension must be >= 2");
    train.validate();
    selection.validate();
  }
};

inline nlohmann::json to_json(const DatasetRef& d) {
  nlohmann::json j;
  if (!d.path.empty()) j["path"] = d.path;
  if (!d.generator.empty()) j["generator"] = d.generator;
  j["seed"] = d.seed;
  j["taxonomy"] = d.taxonomy;
  j["per_leaf"] = d.per_leaf;
  j["dim"] = d.dim;
  return j;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json participants = nlohmann::json::array();
  for (const auto& p : c.participants) {
    participants.push_back({{"id", p.id}, {"hierarchy", p.hierarchy}, {"noise", p.noise}, {"seed", p.seed}});
  }
  return {
      {"dataset", to_json(c.dataset)},
      {"participants", participants},
      {"initial_questions", c.initial_questions},
      {"iterations", c.iterations},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"momentum", c.train.momentum},
        {"batch_size", c.train.batch_size},
        {"epochs", c.train.epochs},
        {"fixed_margin", c.train.fixed_margin},
        {"margin_base", c.train.margin_base},
        {"margin_gain", c.train.margin_gain}}},
      {"selection",
       {{"s_e", c.selection.max_expected},
        {"s_v", c.selection.max_variance},
        {"budget", c.selection.budget},
        {"oversampling", c.selection.oversampling},
        {"knn", c.selection.knn},
        {"min_answers_for_variance", c.selection.min_answers_for_variance},
        {"prior", c.selection.prior}}},
      {"hierarchy",
       {{"min_split_size", c.hierarchy.min_split_size},
        {"max_depth", c.hierarchy.max_depth},
        {"k_max", c.hierarchy.k_max},
        {"s_min", c.hierarchy.min_silhouette}}},
      {"model", {{"hidden", c.model.hidden}, {"embedding_dim", c.model.embedding_dim}}},
      {"selection_mode", to_string(c.selection_mode)},
      {"margin_mode", to_string(c.margin_mode)},
      {"warm_start", c.warm_start},
      {"seed", c.seed},
  };
}

/// Reads a config document; absent fields keep their defaults.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      if (d.is_string()) {
        c.dataset.path = d.get<std::string>();
      } else {
        c.dataset.path = d.value("path", c.dataset.path);
        c.dataset.generator = d.value("generator", c.dataset.generator);
        c.dataset.seed = d.value("seed", c.dataset.seed);
        c.dataset.taxonomy = d.value("taxonomy", c.dataset.taxonomy);
        c.dataset.per_leaf = d.value("per_leaf", c.dataset.per_leaf);
        c.dataset.dim = d.value("dim", c.dataset.dim);
      }
    }
    if (j.contains("participants")) {
      for (const auto& p : j["participants"]) {
        ParticipantSpec s;
        s.id = p.value("id", s.id);
        s.hierarchy = p.value("hierarchy", s.hierarchy);
        s.noise = p.value("noise", s.noise);
        s.seed = p.value("seed", s.seed);
        c.participants.push_back(s);
      }
    }
    c.initial_questions = j.value("initial_questions", c.initial_questions);
    c.iterations = j.value("iterations", c.iterations);
    if (j.contains("train")) {
      const auto& t = j["train"];
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.momentum = t.value("momentum", c.train.momentum);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.fixed_margin = t.value("fixed_margin", c.train.fixed_margin);
      c.train.margin_base = t.value("margin_base", c.train.margin_base);
      c.train.margin_gain = t.value("margin_gain", c.train.margin_gain);
    }
    if (j.contains("selection")) {
      const auto& s = j["selection"];
      c.selection.max_expected = s.value("s_e", c.selection.max_expected);
      c.selection.max_variance = s.value("s_v", c.selection.max_variance);
      c.selection.budget = s.value("budget", c.selection.budget);
      c.selection.oversampling = s.value("oversampling", c.selection.oversampling);
      c.selection.knn = s.value("knn", c.selection.knn);
      c.selection.min_answers_for_variance = s.value("min_answers_for_variance", c.selection.min_answers_for_variance);
      if (s.contains("prior")) c.selection.prior = s["prior"].get<std::array<double, 3>>();
    }
    if (j.contains("hierarchy")) {
      const auto& h = j["hierarchy"];
      c.hierarchy.min_split_size = h.value("min_split_size", c.hierarchy.min_split_size);
      c.hierarchy.max_depth = h.value("max_depth", c.hierarchy.max_depth);
      c.hierarchy.k_max = h.value("k_max", c.hierarchy.k_max);
      c.hierarchy.min_silhouette = h.value("s_min", c.hierarchy.min_silhouette);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      if (m.contains("hidden")) c.model.hidden = m["hidden"].get<std::vector<std::size_t>>();
      c.model.embedding_dim = m.value("embedding_dim", c.model.embedding_dim);
    }
    if (j.contains("selection_mode")) c.selection_mode = parse_selection_mode(j["selection_mode"].get<std::string>());
    if (j.contains("margin_mode")) c.margin_mode = parse_margin_mode(j["margin_mode"].get<std::string>());
    c.warm_start = j.value("warm_start", c.warm_start);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

/// Blob protocol: 1000 uniform questions at margin 0.4, then four batches of
/// 600 actively selected ones with adaptive margins.
inline ExperimentConfig blob_protocol(std::uint64_t seed = 0) {
  ExperimentConfig c;
  c.dataset.generator = "blobs";
  c.dataset.seed = seed;
  c.initial_questions = 1000;
  c.iterations = 4;
  c.selection.budget = 600;
  c.train.learning_rate = 3e-3;  // 1e-2 lets the unnormalized embedding blow up on this data
  c.train.fixed_margin = 0.4;
  c.train.margin_base = 0.4;
  c.train.margin_gain = 0.5;
  c.seed = seed;
  return c;
}

/// Shape protocol: 300 uniform questions at margin 0.2, then five batches of
/// 300 active questions with adaptive margins.
inline ExperimentConfig shape_protocol(std::uint64_t seed = 0) {
  ExperimentConfig c;
  c.dataset.generator = "shapes";
  c.dataset.seed = seed;
  c.initial_questions = 300;
  c.iterations = 5;
  c.selection.budget = 300;
  c.train.learning_rate = 3e-3;
  c.train.fixed_margin = 0.2;
  c.train.margin_base = 0.2;
  c.train.margin_gain = 0.5;
  c.seed = seed;
  return c;
}

/// Materializes a dataset reference. Relative paths resolve against `base`.
inline Dataset resolve_dataset(const DatasetRef& ref, const std::filesystem::path& base = {}) {
  if (!ref.path.empty()) {
    std::filesystem::path p(ref.path);
    if (p.is_relative() && !base.empty()) p = base / p;
    return load_dataset(p);
  }
  if (ref.generator == "shapes") return generate_shapes(ref.seed).dataset;
  if (ref.generator == "blobs") {
    // taxonomy 0: ten unrelated classes; 1..3: centers follow that taxonomy
    if (ref.taxonomy == 0) return object_blobs(ref.seed, ref.per_leaf, ref.dim);
    return generate_blobs(object_taxonomy(ref.taxonomy), ref.per_leaf, ref.dim, ref.seed);
  }
  throw ValidationError("dataset reference needs a path or a generator ('shapes' or 'blobs')");
}

inline LatentHierarchy resolve_hierarchy(const std::string& spec, const Dataset& dataset,
                                         const std::filesystem::path& base = {}) {
  if (spec == "labels") return LatentHierarchy::from_label_paths(dataset);
  if (spec.rfind("taxonomy", 0) == 0 && spec.size() == 9) return object_taxonomy(spec[8] - '0');
  std::filesystem::path p(spec);
  if (p.is_relative() && !base.empty()) p = base / p;
  auto tree = load_latent(p.string());
  tree.validate_against(dataset);
  return tree;
}

inline VirtualParticipant make_participant(const ParticipantSpec& spec, const Dataset& dataset,
                                           const std::filesystem::path& base = {}) {
  return VirtualParticipant(spec.id, resolve_hierarchy(spec.hierarchy, dataset, base), dataset, spec.noise,
                            spec.seed);
}

}  // namespace hke
