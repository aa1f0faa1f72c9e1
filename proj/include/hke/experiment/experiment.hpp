#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hke/common.hpp"
#include "hke/dataset/dataset.hpp"
#include "hke/elicitation/pool.hpp"
#include "hke/elicitation/selection.hpp"
#include "hke/embedding/losses.hpp"
#include "hke/embedding/model.hpp"
#include "hke/embedding/train.hpp"
#include "hke/experiment/config.hpp"
#include "hke/hierarchy/metrics.hpp"
#include "hke/hierarchy/tree.hpp"
#include "hke/participants/virtual_participant.hpp"

namespace hke {

struct IterationMetrics {
  int iteration = 0;
  double purity = 0.0;
  std::size_t pool_size = 0;
  std::size_t asked = 0;  // questions answered in this iteration
  std::vector<double> epoch_loss;
  double mean_margin = 0.0;  // over this iteration's new answers
  std::size_t proposed = 0;
  std::size_t rejected_confident = 0;
  std::size_t rejected_ambiguous = 0;
  std::size_t topped_up = 0;
  std::size_t tree_nodes = 0;
  std::size_t tree_depth = 0;
};

struct ExperimentResult {
  std::string dataset;
  std::string responder;
  std::uint64_t seed = 0;
  SelectionMode selection_mode = SelectionMode::active;
  MarginMode margin_mode = MarginMode::adaptive;
  std::vector<IterationMetrics> iterations;
  std::vector<HierarchyTree> trees;  // snapshot after each iteration
  HierarchyTree final_tree;
  EmbeddingModel model;
  KnowledgePool pool;

  std::vector<double> purity_curve() const {
    std::vector<double> out;
    for (const auto& it : iterations) out.push_back(it.purity);
    return out;
  }
  double final_purity() const { return iterations.empty() ? 0.0 : iterations.back().purity; }
};

namespace detail {

inline constexpr std::uint64_t kInitTag = 1;
inline constexpr std::uint64_t kQuestionTag = 2;
inline constexpr std::uint64_t kHierarchyTag = 3;
inline constexpr std::uint64_t kTallyTag = 4;
inline constexpr std::uint64_t kTrainTag = 100;

inline EmbeddingModel train_iteration(const EmbeddingModel& start, const KnowledgePool& pool, const Dataset& dataset,
                                      TrainConfig config, std::uint64_t seed, int iteration,
                                      std::vector<double>& loss_out) {
  config.seed = derive_seed(seed, kTrainTag + static_cast<std::uint64_t>(iteration));
  auto triplets = pool.triplets();
  try {
    auto result = train(start, triplets, dataset, config);
    loss_out = std::move(result.epoch_loss);
    return std::move(result.model);
  } catch (const TrainingError& e) {
    throw TrainingError("iteration " + std::to_string(iteration) + ": " + e.what());
  }
}

inline HierarchyTree tree_for(const EmbeddingModel& model, const Dataset& dataset, HierarchyConfig config,
                              std::uint64_t seed) {
  config.seed = derive_seed(seed, kHierarchyTag);
  return build_hierarchy(embed_all(model, dataset), config);
}

inline void record_tree(IterationMetrics& m, const HierarchyTree& tree, const LabelMap& labels) {
  m.purity = dendrogram_purity(tree, labels);
  m.tree_nodes = tree.node_count();
  m.tree_depth = tree.depth();
}

}  // namespace detail

/// Runs the elicitation loop against one responder. Purity is scored against
/// `labels` (normally the responder's latent leaf classes).
inline ExperimentResult run_elicitation(const Dataset& dataset, Responder& responder, const ExperimentConfig& config,
                                        const LabelMap& labels) {
  config.validate();
  const auto widths = config.model.widths(dataset.dim());
  const auto init_seed = derive_seed(config.seed, detail::kInitTag);

  ExperimentResult result;
  result.dataset = dataset.name();
  result.responder = responder.id();
  result.seed = config.seed;
  result.selection_mode = config.selection_mode;
  result.margin_mode = config.margin_mode;

  Rng rng(derive_seed(config.seed, detail::kQuestionTag));
  std::int64_t clock = 0;
  const auto ids = dataset.ids();
  QuestionFilter answered = [&](const Question& q) { return result.pool.contains(q, responder.id()); };

  auto ask = [&](const Question& q, double margin, int iteration) {
    AnswerRecord r{q, responder.answer(q), responder.id(), margin, iteration, clock++};
    result.pool.append(std::move(r));
  };

  // Iteration 0: uniform questions, fixed margin.
  IterationMetrics first;
  for (const auto& q : random_questions(ids, config.initial_questions, rng, answered, config.selection.retry_cap)) {
    ask(q, config.train.fixed_margin, 0);
  }
  first.asked = result.pool.size();
  first.mean_margin = config.train.fixed_margin;
  EmbeddingModel model = detail::train_iteration(EmbeddingModel(widths, init_seed), result.pool, dataset,
                                                 config.train, config.seed, 0, first.epoch_loss);
  HierarchyTree tree = detail::tree_for(model, dataset, config.hierarchy, config.seed);
  first.pool_size = result.pool.size();
  detail::record_tree(first, tree, labels);
  result.iterations.push_back(first);
  result.trees.push_back(tree);

  for (std::size_t t = 1; t <= config.iterations; ++t) {
    const int iteration = static_cast<int>(t);
    IterationMetrics m;
    m.iteration = iteration;

    std::vector<Question> batch;
    if (config.selection_mode == SelectionMode::active) {
      auto sel = select_batch(tree, result.pool, responder.id(), config.selection, rng,
                              derive_seed(config.seed, detail::kTallyTag));
      m.proposed = sel.proposed;
      m.rejected_confident = sel.rejected_confident;
      m.rejected_ambiguous = sel.rejected_ambiguous;
      m.topped_up = sel.topped_up;
      batch = std::move(sel.questions);
    } else {
      const int root = tree.root().id;
      for (const auto& q : random_questions(ids, config.selection.budget, rng, answered, config.selection.retry_cap)) {
        batch.emplace_back(q[0], q[1], q[2], root);
      }
    }

    double margin_sum = 0.0;
    for (const auto& q : batch) {
      double margin = config.train.fixed_margin;
      if (config.margin_mode == MarginMode::adaptive) {
        const auto* node = tree.find(q.source_node().value_or(tree.root().id));
        margin = adaptive_margin(config.train.margin_base, config.train.margin_gain, node->diversity);
      }
      margin_sum += margin;
      ask(q, margin, iteration);
    }
    m.asked = batch.size();
    m.mean_margin = batch.empty() ? 0.0 : margin_sum / static_cast<double>(batch.size());

    const EmbeddingModel start = config.warm_start ? model : EmbeddingModel(widths, init_seed);
    model = detail::train_iteration(start, result.pool, dataset, config.train, config.seed, iteration, m.epoch_loss);
    tree = detail::tree_for(model, dataset, config.hierarchy, config.seed);
    m.pool_size = result.pool.size();
    detail::record_tree(m, tree, labels);
    result.iterations.push_back(m);
    result.trees.push_back(tree);
  }

  annotate(tree, labels);
  result.final_tree = tree;
  result.model = model;
  return result;
}

inline ExperimentResult run_elicitation(const Dataset& dataset, VirtualParticipant& participant,
                                        const ExperimentConfig& config) {
  return run_elicitation(dataset, static_cast<Responder&>(participant), config,
                         participant.latent().leaf_labels(dataset));
}

// ---------------------------------------------------------------------------
// Ablation

inline const std::vector<std::string>& ablation_arms() {
  static const std::vector<std::string> arms{"raw_features", "random_fixed", "active_fixed", "active_adaptive"};
  return arms;
}

struct ArmCurve {
  std::string arm;
  std::vector<double> purity;       // one entry per iteration, T+1 in total
  std::vector<std::size_t> budget;  // cumulative answered questions per entry
  KnowledgePool pool;                // answers collected by the arm; empty for raw features
};

struct ParticipantAblation {
  std::string participant;
  std::vector<ArmCurve> arms;  // in ablation_arms() order

  const ArmCurve& arm(const std::string& name) const {
    for (const auto& a : arms) {
      if (a.arm == name) return a;
    }
    throw NotFoundError("no ablation arm '" + name + "'");
  }
};

struct AblationResult {
  std::uint64_t seed = 0;
  std::vector<ParticipantAblation> participants;
};

/// Four arms per participant on the same budget: raw features, random+fixed,
/// active+fixed, active+adaptive. Each trained arm gets a fresh copy of the
/// participant so their answer streams do not interact.
inline AblationResult run_ablation(const Dataset& dataset, const std::vector<VirtualParticipant>& participants,
                                   ExperimentConfig base, std::uint64_t seed) {
  base.seed = seed;
  base.validate();
  AblationResult out;
  out.seed = seed;

  HierarchyConfig raw_config = base.hierarchy;
  raw_config.seed = derive_seed(seed, detail::kHierarchyTag);
  const HierarchyTree raw_tree = build_hierarchy(raw_features(dataset), raw_config);

  for (const auto& proto : participants) {
    ParticipantAblation pa;
    pa.participant = proto.id();
    const auto labels = proto.latent().leaf_labels(dataset);

    ArmCurve raw{"raw_features", {}, {}, {}};
    const double raw_purity = dendrogram_purity(raw_tree, labels);
    for (std::size_t t = 0; t <= base.iterations; ++t) {
      raw.purity.push_back(raw_purity);
      raw.budget.push_back(base.initial_questions + t * base.selection.budget);
    }
    pa.arms.push_back(raw);

    const std::vector<std::pair<SelectionMode, MarginMode>> trained{
        {SelectionMode::random, MarginMode::fixed},
        {SelectionMode::active, MarginMode::fixed},
        {SelectionMode::active, MarginMode::adaptive}};
    for (std::size_t a = 0; a < trained.size(); ++a) {
      ExperimentConfig cfg = base;
      cfg.selection_mode = trained[a].first;
      cfg.margin_mode = trained[a].second;
      VirtualParticipant responder = proto;
      auto run = run_elicitation(dataset, static_cast<Responder&>(responder), cfg, labels);
      ArmCurve curve{ablation_arms()[a + 1], {}, {}, std::move(run.pool)};
      for (const auto& it : run.iterations) {
        curve.purity.push_back(it.purity);
        curve.budget.push_back(it.pool_size);
      }
      pa.arms.push_back(curve);
    }
    out.participants.push_back(std::move(pa));
  }
  return out;
}

inline nlohmann::json to_json(const AblationResult& r) {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : r.participants) {
    nlohmann::json arms = nlohmann::json::object();
    for (const auto& a : p.arms) arms[a.arm] = {{"purity", a.purity}, {"budget", a.budget}};
    parts.push_back({{"participant", p.participant}, {"arms", arms}});
  }
  return {{"version", kSchemaVersion}, {"seed", r.seed}, {"participants", parts}};
}

/// Long-format curve table: participant,arm,iteration,budget,purity.
inline void write_ablation_csv(const AblationResult& r, std::ostream& out) {
  out << "participant,arm,iteration,budget,purity\n";
  for (const auto& p : r.participants) {
    for (const auto& a : p.arms) {
      for (std::size_t i = 0; i < a.purity.size(); ++i) {
        out << p.participant << ',' << a.arm << ',' << i << ',' << a.budget[i] << ','
            << detail::format_double(a.purity[i]) << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Mixed pools

struct MixedResult {
  EmbeddingModel model;
  HierarchyTree tree;
  double purity = 0.0;
  std::vector<double> epoch_loss;
};

/// Trains a fresh model on the union of several responders' pools (each
/// answer keeps its recorded margin) and builds the tree over it.
inline MixedResult run_mixed(const Dataset& dataset, const std::vector<KnowledgePool>& pools,
                             const ExperimentConfig& config, const LabelMap& labels) {
  config.validate();
  KnowledgePool all;
  for (const auto& p : pools) all.merge(p);
  if (all.empty()) throw ValidationError("mixed run needs at least one answer");
  MixedResult out;
  EmbeddingModel init(config.model.widths(dataset.dim()), derive_seed(config.seed, detail::kInitTag));
  out.model = detail::train_iteration(init, all, dataset, config.train, config.seed, 0, out.epoch_loss);
  out.tree = detail::tree_for(out.model, dataset, config.hierarchy, config.seed);
  annotate(out.tree, labels);
  out.purity = dendrogram_purity(out.tree, labels);
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json to_json(const IterationMetrics& m) {
  return {{"iteration", m.iteration},
          {"purity", m.purity},
          {"pool_size", m.pool_size},
          {"asked", m.asked},
          {"epoch_loss", m.epoch_loss},
          {"mean_margin", m.mean_margin},
          {"proposed", m.proposed},
          {"rejected_confident", m.rejected_confident},
          {"rejected_ambiguous", m.rejected_ambiguous},
          {"topped_up", m.topped_up},
          {"tree_nodes", m.tree_nodes},
          {"tree_depth", m.tree_depth}};
}

inline IterationMetrics iteration_from_json(const nlohmann::json& j) {
  IterationMetrics m;
  m.iteration = j.at("iteration").get<int>();
  m.purity = j.at("purity").get<double>();
  m.pool_size = j.at("pool_size").get<std::size_t>();
  m.asked = j.at("asked").get<std::size_t>();
  m.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
  m.mean_margin = j.at("mean_margin").get<double>();
  m.proposed = j.at("proposed").get<std::size_t>();
  m.rejected_confident = j.at("rejected_confident").get<std::size_t>();
  m.rejected_ambiguous = j.at("rejected_ambiguous").get<std::size_t>();
  m.topped_up = j.at("topped_up").get<std::size_t>();
  m.tree_nodes = j.at("tree_nodes").get<std::size_t>();
  m.tree_depth = j.at("tree_depth").get<std::size_t>();
  return m;
}

inline nlohmann::json metrics_json(const ExperimentResult& r) {
  nlohmann::json its = nlohmann::json::array();
  for (const auto& m : r.iterations) its.push_back(to_json(m));
  return {{"version", kSchemaVersion},
          {"dataset", r.dataset},
          {"responder", r.responder},
          {"seed", r.seed},
          {"selection_mode", to_string(r.selection_mode)},
          {"margin_mode", to_string(r.margin_mode)},
          {"final_purity", r.final_purity()},
          {"iterations", its}};
}

/// Writes metrics.json, purity.csv, tree.json, tree.csv, pool.jsonl and
/// model.json into `dir`, creating it if needed. Rewrites are byte-identical.
inline void report(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory " + dir.string() + ": " + ec.message());

  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("metrics.json");
    out << metrics_json(r).dump(2) << '\n';
  }
  {
    auto out = open("purity.csv");
    out << "iteration,pool_size,purity,final_loss\n";
    for (const auto& m : r.iterations) {
      out << m.iteration << ',' << m.pool_size << ',' << detail::format_double(m.purity) << ','
          << (m.epoch_loss.empty() ? std::string("nan") : detail::format_double(m.epoch_loss.back())) << '\n';
    }
  }
  {
    auto out = open("tree.csv");
    write_tree_csv(r.final_tree, out);
  }
  save_tree(r.final_tree, dir / "tree.json");
  save_pool(r.pool, dir / "pool.jsonl");
  save_model(r.model, dir / "model.json");
}

inline nlohmann::json load_metrics(const std::filesystem::path& dir) {
  std::ifstream in(dir / "metrics.json");
  if (!in) throw IoError("cannot open " + (dir / "metrics.json").string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("metrics.json: " + std::string(e.what()));
  }
}

}  // namespace hke
