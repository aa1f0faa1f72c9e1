#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
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

namespace hke {

enum class Phase { collecting, training, ready };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::collecting:
      return "collecting";
    case Phase::training:
      return "training";
    case Phase::ready:
      return "ready";
  }
  return "?";
}

inline Phase parse_phase(const std::string& s) {
  if (s == "collecting") return Phase::collecting;
  if (s == "training") return Phase::training;
  if (s == "ready") return Phase::ready;
  throw ValidationError("unknown phase '" + s + "'");
}

namespace detail {

/// Write-to-temp then rename, so readers never see a half-written file.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write to " + tmp.string() + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot replace " + path.string() + ": " + ec.message());
}

}  // namespace detail

struct ServedQuestion {
  Question question;
  int iteration = 0;
};

struct AnswerAck {
  Question question;
  ItemId chosen = 0;
  bool duplicate = false;  // already answered; nothing was appended
  std::size_t answered = 0;
};

struct Progress {
  std::string session_id;
  std::string responder;
  Phase phase = Phase::collecting;
  int iteration = 0;
  std::size_t answered = 0;
  std::size_t answered_this_iteration = 0;
  std::size_t batch_size = 0;  // answers expected before the next training
  std::size_t pending = 0;     // queued, not yet served
  std::optional<std::string> last_error;
};

/// One annotator's elicitation state. Every mutation is persisted under the
/// session directory before it is acknowledged.
class Session {
 public:
  Session(std::string id, std::string responder, ExperimentConfig config, std::filesystem::path dir,
          const Dataset& dataset)
      : id_(std::move(id)),
        responder_(std::move(responder)),
        config_(std::move(config)),
        dir_(std::move(dir)),
        dataset_(dataset),
        rng_(derive_seed(config_.seed, 2)) {}

  ~Session() {
    if (worker_.joinable()) worker_.join();
  }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  static std::unique_ptr<Session> create(std::string id, std::string responder, ExperimentConfig config,
                                         const std::filesystem::path& dir, const Dataset& dataset) {
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create session directory " + dir.string() + ": " + ec.message());
    auto s = std::make_unique<Session>(std::move(id), std::move(responder), std::move(config), dir, dataset);
    std::lock_guard lock(s->mutex_);
    s->persist_meta();
    return s;
  }

  /// Reloads a session directory. An interrupted training run is discarded;
  /// the session resumes from its last completed state.
  static std::unique_ptr<Session> open(const std::filesystem::path& dir, const Dataset& dataset) {
    std::ifstream in(dir / "session.json");
    if (!in) throw IoError("cannot open " + (dir / "session.json").string());
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError((dir / "session.json").string() + ": " + e.what());
    }
    auto s = std::make_unique<Session>(meta.at("id").get<std::string>(), meta.at("responder").get<std::string>(),
                                       config_from_json(meta.at("config")), dir, dataset);
    std::lock_guard lock(s->mutex_);
    s->iteration_ = meta.value("iteration", 0);
    s->answered_at_train_ = meta.value("answered_at_train", std::size_t{0});
    s->pool_ = load_pool(dir / "pool.jsonl");
    if (std::filesystem::exists(dir / "model.json")) s->model_ = load_model(dir / "model.json");
    if (std::filesystem::exists(dir / "tree.json")) s->tree_ = s->rebuild_tree();
    s->phase_ = s->tree_ && s->pool_.size() == s->answered_at_train_ ? Phase::ready : Phase::collecting;
    // Reseed by pool size so a restarted session does not replay the draws it already served.
    s->rng_.seed(derive_seed(s->config_.seed, 2 + 1000 * static_cast<std::uint64_t>(s->pool_.size())));
    return s;
  }

  const std::string& id() const { return id_; }
  const std::filesystem::path& dir() const { return dir_; }

  ServedQuestion next_question() {
    std::lock_guard lock(mutex_);
    if (queue_.empty()) refill();
    while (!queue_.empty()) {
      Question q = queue_.front();
      queue_.pop_front();
      if (pool_.contains(q, responder_) || outstanding_.count(q.key())) continue;
      outstanding_.emplace(q.key(), q);
      return {q, iteration_};
    }
    throw ConflictError("no unanswered questions left for this session");
  }

  AnswerAck submit_answer(const std::string& question_id, ItemId chosen) {
    auto parsed = Question::from_key(question_id);
    if (!parsed) throw ValidationError("malformed question id '" + question_id + "'");
    for (auto id : parsed->ids()) {
      if (!dataset_.contains(id)) throw NotFoundError("item " + std::to_string(id) + " is not in the dataset");
    }
    const auto& ids = parsed->ids();
    if (!parsed->contains(chosen)) {
      throw ValidationError("chosen item " + std::to_string(chosen) + " must be one of " + std::to_string(ids[0]) +
                            ", " + std::to_string(ids[1]) + ", " + std::to_string(ids[2]));
    }

    std::lock_guard lock(mutex_);
    if (pool_.contains(*parsed, responder_)) {
      AnswerAck ack{*parsed, chosen, true, pool_.size()};
      for (const auto& r : pool_.records()) {
        if (r.question == *parsed && r.responder == responder_) ack.chosen = r.chosen;
      }
      return ack;
    }
    if (phase_ == Phase::training) throw ConflictError("session is training; answers are not accepted");

    std::optional<int> source;
    if (auto it = outstanding_.find(question_id); it != outstanding_.end()) source = it->second.source_node();
    AnswerRecord record{*parsed, chosen, responder_, margin_for(source), iteration_,
                        static_cast<std::int64_t>(pool_.size())};
    append_record(dir_ / "pool.jsonl", record);
    pool_.append(std::move(record));
    outstanding_.erase(question_id);
    phase_ = Phase::collecting;
    return {*parsed, chosen, false, pool_.size()};
  }

  /// Starts retraining in the background. Rejected while a run is active or
  /// when nothing was answered since the last one.
  void trigger_train() {
    std::unique_lock lock(mutex_);
    if (phase_ == Phase::training) throw ConflictError("session is already training");
    if (pool_.empty()) throw ValidationError("cannot train before any answers are collected");
    if (pool_.size() == answered_at_train_) throw ConflictError("no new answers since the last training");
    if (worker_.joinable()) worker_.join();  // previous run already finished
    phase_ = Phase::training;
    last_error_.reset();
    const int next = iteration_ + 1;
    KnowledgePool snapshot = pool_;
    EmbeddingModel start = model_ ? *model_ : EmbeddingModel(config_.model.widths(dataset_.dim()), derive_seed(config_.seed, 1));
    worker_ = std::thread([this, next, snapshot = std::move(snapshot), start = std::move(start)]() mutable {
      run_training(next, std::move(snapshot), std::move(start));
    });
  }

  /// Blocks until no training run is active.
  void wait_idle() {
    std::thread t;
    {
      std::lock_guard lock(mutex_);
      t.swap(worker_);
    }
    if (t.joinable()) t.join();
  }

  nlohmann::json tree_json() const {
    std::lock_guard lock(mutex_);
    if (!tree_) throw NotFoundError("session " + id_ + " has no tree yet; train first");
    return to_json(*tree_);
  }

  Progress progress() const {
    std::lock_guard lock(mutex_);
    Progress p;
    p.session_id = id_;
    p.responder = responder_;
    p.phase = phase_;
    p.iteration = iteration_;
    p.answered = pool_.size();
    p.answered_this_iteration = pool_.size() - answered_at_train_;
    p.batch_size = iteration_ == 0 ? config_.initial_questions : config_.selection.budget;
    p.pending = queue_.size();
    p.last_error = last_error_;
    return p;
  }

  KnowledgePool pool() const {
    std::lock_guard lock(mutex_);
    return pool_;
  }

 private:
  double margin_for(std::optional<int> source) const {
    if (!tree_ || config_.margin_mode == MarginMode::fixed) return config_.train.fixed_margin;
    const HierarchyNode* node = source ? tree_->find(*source) : nullptr;
    if (!node) node = &tree_->root();
    return adaptive_margin(config_.train.margin_base, config_.train.margin_gain, node->diversity);
  }

  void refill() {
    QuestionFilter answered = [&](const Question& q) {
      return pool_.contains(q, responder_) || outstanding_.count(q.key()) != 0;
    };
    if (!tree_ || config_.selection_mode == SelectionMode::random) {
      const std::size_t n = tree_ ? config_.selection.budget : config_.initial_questions;
      const std::optional<int> root = tree_ ? std::optional<int>(tree_->root().id) : std::nullopt;
      for (const auto& q : random_questions(dataset_.ids(), n, rng_, answered, config_.selection.retry_cap)) {
        queue_.emplace_back(q[0], q[1], q[2], root);
      }
      return;
    }
    auto sel = select_batch(*tree_, pool_, responder_, config_.selection, rng_, derive_seed(config_.seed, 4));
    for (auto& q : sel.questions) {
      if (!outstanding_.count(q.key())) queue_.push_back(q);
    }
  }

  HierarchyTree rebuild_tree() const {
    // The saved tree carries no embedding snapshot; recompute it from the model
    // so leaf lookups for later selection are exact.
    if (!model_) return load_tree(dir_ / "tree.json");
    HierarchyConfig hc = config_.hierarchy;
    hc.seed = derive_seed(config_.seed, 3);
    auto tree = build_hierarchy(embed_all(*model_, dataset_), hc);
    label(tree);
    return tree;
  }

  void label(HierarchyTree& tree) const {
    for (const auto& item : dataset_.items()) {
      if (item.label_path.empty()) return;
    }
    annotate(tree, dataset_.leaf_labels());
  }

  void run_training(int next, KnowledgePool snapshot, EmbeddingModel start) {
    try {
      TrainConfig tc = config_.train;
      tc.seed = derive_seed(config_.seed, 100 + static_cast<std::uint64_t>(next));
      auto triplets = snapshot.triplets();
      auto trained = train(std::move(start), triplets, dataset_, tc);
      HierarchyConfig hc = config_.hierarchy;
      hc.seed = derive_seed(config_.seed, 3);
      auto tree = build_hierarchy(embed_all(trained.model, dataset_), hc);
      label(tree);

      std::lock_guard lock(mutex_);
      detail::write_atomically(dir_ / "model.json", to_json(trained.model).dump());
      detail::write_atomically(dir_ / "tree.json", to_json(tree).dump());
      model_ = std::move(trained.model);
      tree_ = std::move(tree);
      iteration_ = next;
      answered_at_train_ = snapshot.size();
      queue_.clear();
      phase_ = Phase::ready;
      persist_meta();
    } catch (const std::exception& e) {
      std::lock_guard lock(mutex_);
      last_error_ = std::string("training failed: ") + e.what();
      phase_ = Phase::collecting;
    }
  }

  void persist_meta() const {
    nlohmann::json meta{{"version", kSchemaVersion},
                        {"id", id_},
                        {"responder", responder_},
                        {"config", to_json(config_)},
                        {"dataset", dataset_.name()},
                        {"iteration", iteration_},
                        {"answered_at_train", answered_at_train_}};
    detail::write_atomically(dir_ / "session.json", meta.dump(2));
  }

  std::string id_;
  std::string responder_;
  ExperimentConfig config_;
  std::filesystem::path dir_;
  const Dataset& dataset_;

  mutable std::mutex mutex_;
  Phase phase_ = Phase::collecting;
  int iteration_ = 0;
  std::size_t answered_at_train_ = 0;
  KnowledgePool pool_;
  std::optional<EmbeddingModel> model_;
  std::optional<HierarchyTree> tree_;
  std::deque<Question> queue_;
  std::map<std::string, Question> outstanding_;  // served, not yet answered
  std::optional<std::string> last_error_;
  Rng rng_;
  std::thread worker_;
};

/// All sessions of one server process, backed by `<state_dir>/<session id>/`.
class SessionManager {
 public:
  SessionManager(Dataset dataset, ExperimentConfig defaults, std::filesystem::path state_dir)
      : dataset_(std::move(dataset)), defaults_(std::move(defaults)), state_dir_(std::move(state_dir)) {
    defaults_.validate();
    std::error_code ec;
    std::filesystem::create_directories(state_dir_, ec);
    if (ec) throw IoError("cannot create state directory " + state_dir_.string() + ": " + ec.message());
    for (const auto& entry : std::filesystem::directory_iterator(state_dir_)) {
      if (!entry.is_directory() || !std::filesystem::exists(entry.path() / "session.json")) continue;
      auto s = Session::open(entry.path(), dataset_);
      next_id_ = std::max(next_id_, parse_counter(s->id()) + 1);
      sessions_.emplace(s->id(), std::move(s));
    }
  }

  ~SessionManager() {
    for (auto& [id, s] : sessions_) s->wait_idle();
  }

  const Dataset& dataset() const { return dataset_; }
  const ExperimentConfig& defaults() const { return defaults_; }

  /// `overrides` is a partial config document layered over the defaults.
  std::string create_session(const std::string& responder, const nlohmann::json& overrides = {}) {
    ExperimentConfig cfg = defaults_;
    if (!overrides.is_null() && !overrides.empty()) {
      auto merged = to_json(defaults_);
      merged.merge_patch(overrides);
      cfg = config_from_json(merged);
    }
    std::unique_lock lock(mutex_);
    std::string id = "s" + std::to_string(next_id_++);
    auto s = Session::create(id, responder.empty() ? "annotator-" + id : responder, cfg, state_dir_ / id, dataset_);
    sessions_.emplace(id, std::move(s));
    return id;
  }

  Session& session(const std::string& id) {
    std::shared_lock lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
    return *it->second;
  }

  std::vector<std::string> session_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) out.push_back(id);
    return out;
  }

 private:
  static std::uint64_t parse_counter(const std::string& id) {
    if (id.size() < 2 || id[0] != 's') return 0;
    try {
      return std::stoull(id.substr(1));
    } catch (const std::exception&) {
      return 0;
    }
  }

  Dataset dataset_;
  ExperimentConfig defaults_;
  std::filesystem::path state_dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace hke
