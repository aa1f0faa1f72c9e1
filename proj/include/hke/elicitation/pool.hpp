#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hke/common.hpp"
#include "hke/embedding/train.hpp"

namespace hke {

/// A 3AFC question. Ids are kept in ascending order so two questions are
/// equal exactly when they show the same three items.
class Question {
 public:
  Question() = default;
  Question(ItemId a, ItemId b, ItemId c, std::optional<int> source_node = std::nullopt)
      : ids_{a, b, c}, source_node_(source_node) {
    if (a == b || a == c || b == c) throw ValidationError("question items must be distinct");
    std::sort(ids_.begin(), ids_.end());
  }

  const std::array<ItemId, 3>& ids() const { return ids_; }
  ItemId operator[](std::size_t i) const { return ids_[i]; }

  /// Hierarchy node the question was drawn from; empty for uniform draws.
  std::optional<int> source_node() const { return source_node_; }

  bool contains(ItemId id) const { return std::find(ids_.begin(), ids_.end(), id) != ids_.end(); }

  /// Stable textual id, e.g. "3-17-42".
  std::string key() const {
    return std::to_string(ids_[0]) + "-" + std::to_string(ids_[1]) + "-" + std::to_string(ids_[2]);
  }

  static std::optional<Question> from_key(const std::string& key) {
    ItemId a = 0, b = 0, c = 0;
    char d1 = 0, d2 = 0;
    std::istringstream in(key);
    if (!(in >> a >> d1 >> b >> d2 >> c) || d1 != '-' || d2 != '-' || !in.eof()) return std::nullopt;
    if (a == b || a == c || b == c) return std::nullopt;
    Question q(a, b, c);
    if (q.key() != key) return std::nullopt;
    return q;
  }

  bool operator==(const Question& o) const { return ids_ == o.ids_; }
  bool operator<(const Question& o) const { return ids_ < o.ids_; }

 private:
  std::array<ItemId, 3> ids_{};
  std::optional<int> source_node_;
};

struct AnswerRecord {
  Question question;
  ItemId chosen = 0;
  std::string responder;
  double margin = 0.4;
  int iteration = 0;
  std::int64_t timestamp = 0;

  AnsweredTriplet triplet() const {
    std::array<ItemId, 2> pos{};
    std::size_t k = 0;
    for (auto id : question.ids()) {
      if (id != chosen) pos[k++] = id;
    }
    return {pos[0], pos[1], chosen, margin};
  }
};

inline nlohmann::json to_json(const AnswerRecord& r) {
  return {{"a1", r.question[0]},       {"a2", r.question[1]},   {"a3", r.question[2]},
          {"chosen", r.chosen},        {"responder", r.responder}, {"margin", r.margin},
          {"iteration", r.iteration}, {"timestamp", r.timestamp}};
}

inline AnswerRecord record_from_json(const nlohmann::json& j) {
  AnswerRecord r;
  r.question = Question(j.at("a1").get<ItemId>(), j.at("a2").get<ItemId>(), j.at("a3").get<ItemId>());
  r.chosen = j.at("chosen").get<ItemId>();
  r.responder = j.at("responder").get<std::string>();
  r.margin = j.at("margin").get<double>();
  r.iteration = j.at("iteration").get<int>();
  r.timestamp = j.at("timestamp").get<std::int64_t>();
  return r;
}

/// The set of answered questions. Append-only; one answer per
/// (question, responder).
class KnowledgePool {
 public:
  void append(AnswerRecord record) {
    if (!record.question.contains(record.chosen)) {
      throw ValidationError("chosen item " + std::to_string(record.chosen) + " is not one of " +
                            record.question.key());
    }
    if (!(record.margin > 0.0)) throw ValidationError("answer margin must be positive");
    if (!answered_.emplace(record.question.key(), record.responder).second) {
      throw ConflictError("question " + record.question.key() + " already answered by '" + record.responder + "'");
    }
    records_.push_back(std::move(record));
  }

  bool contains(const Question& q, const std::string& responder) const {
    return answered_.count({q.key(), responder}) != 0;
  }

  const std::vector<AnswerRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  std::vector<AnsweredTriplet> triplets() const {
    std::vector<AnsweredTriplet> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.triplet());
    return out;
  }

  /// Union of pools; records keep their responder tags.
  void merge(const KnowledgePool& other) {
    for (const auto& r : other.records_) append(r);
  }

 private:
  std::vector<AnswerRecord> records_;
  std::set<std::pair<std::string, std::string>> answered_;
};

/// Appends one JSON line and flushes it to the OS before returning.
inline void append_record(const std::filesystem::path& path, const AnswerRecord& record) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to pool file " + path.string());
  out << to_json(record).dump() << '\n';
  out.flush();
  if (!out) throw IoError("write to pool file " + path.string() + " failed");
}

inline void save_pool(const KnowledgePool& pool, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write pool file " + path.string());
  for (const auto& r : pool.records()) out << to_json(r).dump() << '\n';
}

/// Reads a JSON-lines pool. A torn final line (no trailing newline, not
/// parseable) is ignored; any other malformed line is an error.
inline KnowledgePool load_pool(const std::filesystem::path& path) {
  KnowledgePool pool;
  if (!std::filesystem::exists(path)) return pool;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pool file " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < content.size()) {
    auto end = content.find('\n', start);
    const bool complete = end != std::string::npos;
    std::string line = content.substr(start, complete ? end - start : std::string::npos);
    start = complete ? end + 1 : content.size();
    ++line_no;
    if (line.empty()) continue;
    try {
      pool.append(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      if (!complete) break;
      throw ValidationError("pool file " + path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pool;
}

}  // namespace hke
