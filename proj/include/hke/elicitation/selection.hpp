#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "hke/common.hpp"
#include "hke/elicitation/dirichlet.hpp"
#include "hke/elicitation/pool.hpp"
#include "hke/hierarchy/tree.hpp"

namespace hke {

struct SelectionConfig {
  double max_expected = 0.8;  // s_e, in (1/3, 1]
  double max_variance = 0.2;  // s_v
  std::size_t budget = 600;
  std::size_t oversampling = 4;
  /// Neighborhood rank for a k-nearest-neighbor notion of similar questions.
  /// Reserved; 0 selects the leaf-signature notion, the only one implemented.
  std::size_t knn = 0;
  /// The variance test only applies once this many similar answers exist.
  std::uint32_t min_answers_for_variance = 6;
  std::array<double, 3> prior{1.0, 1.0, 1.0};
  int retry_cap = 20;

  void validate() const {
    if (!(max_expected > 1.0 / 3.0) || max_expected > 1.0) throw ValidationError("s_e must lie in (1/3, 1]");
    if (!(max_variance > 0.0)) throw ValidationError("s_v must be positive");
    if (budget == 0) throw ValidationError("budget must be positive");
    if (oversampling == 0) throw ValidationError("oversampling must be positive");
    if (knn != 0) throw ValidationError("k-nearest-neighbor similarity is not implemented; set knn to 0");
    for (double a : prior) {
      if (!(a > 0.0)) throw ValidationError("Dirichlet prior must be strictly positive");
    }
  }
};

/// Leaf ids of a question's three items, slot by slot, plus the sorted
/// multiset used to decide similarity.
struct Signature {
  std::array<int, 3> slots{};
  std::array<int, 3> sorted{};

  bool similar_to(const Signature& o) const { return sorted == o.sorted; }
};

inline Signature cluster_signature(const Question& q, const HierarchyTree& tree) {
  Signature s;
  for (std::size_t i = 0; i < 3; ++i) s.slots[i] = tree.leaf_of(q[i]);
  s.sorted = s.slots;
  std::sort(s.sorted.begin(), s.sorted.end());
  return s;
}

/// Answer tallies keyed by signature, for one tree snapshot: for every
/// signature, how often the chosen item sat in each leaf.
class SimilarityIndex {
 public:
  SimilarityIndex(const KnowledgePool& pool, const HierarchyTree& tree) {
    for (const auto& r : pool.records()) {
      const auto& ids = r.question.ids();
      if (!std::all_of(ids.begin(), ids.end(), [&](ItemId id) { return tree.contains(id); })) continue;
      auto sig = cluster_signature(r.question, tree);
      ++tallies_[sig.sorted][tree.leaf_of(r.chosen)];
      ++indexed_;
    }
  }

  /// Number of pool records the index covers; always the sum of all tallies.
  std::size_t indexed() const { return indexed_; }

  std::size_t tally_total() const {
    std::size_t t = 0;
    for (const auto& [sig, by_leaf] : tallies_) {
      for (const auto& [leaf, count] : by_leaf) t += count;
    }
    return t;
  }

  /// m = (m1, m2, m3) for the question's slots. A leaf shared by several
  /// slots has its tally split evenly, the remainder going to slots picked
  /// uniformly at random from a stream keyed by `seed` and the signature.
  std::array<std::uint32_t, 3> tally(const Signature& sig, std::uint64_t seed) const {
    std::array<std::uint32_t, 3> m{0, 0, 0};
    auto it = tallies_.find(sig.sorted);
    if (it == tallies_.end()) return m;
    std::uint64_t key = seed;
    for (int leaf : sig.sorted) key = derive_seed(key, static_cast<std::uint64_t>(leaf));
    Rng rng(key);
    for (const auto& [leaf, count] : it->second) {
      std::vector<std::size_t> slots;
      for (std::size_t i = 0; i < 3; ++i) {
        if (sig.slots[i] == leaf) slots.push_back(i);
      }
      if (slots.empty()) continue;
      const auto share = count / static_cast<std::uint32_t>(slots.size());
      auto rest = count % static_cast<std::uint32_t>(slots.size());
      for (auto s : slots) m[s] += share;
      std::shuffle(slots.begin(), slots.end(), rng);
      for (std::size_t i = 0; i < rest; ++i) m[slots[i]] += 1;
    }
    return m;
  }

 private:
  std::map<std::array<int, 3>, std::map<int, std::uint32_t>> tallies_;
  std::size_t indexed_ = 0;
};

inline std::array<std::uint32_t, 3> tally_similar(const Question& q, const KnowledgePool& pool,
                                                  const HierarchyTree& tree, std::uint64_t seed = 0) {
  return SimilarityIndex(pool, tree).tally(cluster_signature(q, tree), seed);
}

enum class Verdict { keep, reject_confident, reject_ambiguous };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::keep:
      return "keep";
    case Verdict::reject_confident:
      return "reject_confident";
    case Verdict::reject_ambiguous:
      return "reject_ambiguous";
  }
  return "?";
}

struct RejectionDecision {
  Verdict verdict = Verdict::keep;
  double expected = 0.0;  // e(q)
  double variance = 0.0;  // var(q)
  std::array<std::uint32_t, 3> counts{};
};

inline RejectionDecision reject(const Question& q, const HierarchyTree& tree, const SimilarityIndex& index,
                                const SelectionConfig& config, std::uint64_t seed = 0) {
  DirichletStats stats{config.prior, index.tally(cluster_signature(q, tree), seed)};
  RejectionDecision d;
  d.counts = stats.counts;
  d.expected = expected_max(stats);
  d.variance = variance_sum(stats);
  if (d.expected > config.max_expected) {
    d.verdict = Verdict::reject_confident;
  } else if (stats.total_count() >= config.min_answers_for_variance && d.variance > config.max_variance) {
    d.verdict = Verdict::reject_ambiguous;
  }
  return d;
}

inline RejectionDecision reject(const Question& q, const KnowledgePool& pool, const HierarchyTree& tree,
                                const SelectionConfig& config, std::uint64_t seed = 0) {
  return reject(q, tree, SimilarityIndex(pool, tree), config, seed);
}

/// Marks questions a draw must avoid.
using QuestionFilter = std::function<bool(const Question&)>;

namespace detail {

inline bool draw_triple(const std::vector<ItemId>& members, Rng& rng, std::array<ItemId, 3>& out) {
  if (members.size() < 3) return false;
  std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
  std::size_t a = pick(rng), b = 0, c = 0;
  do b = pick(rng);
  while (b == a);
  do c = pick(rng);
  while (c == a || c == b);
  out = {members[a], members[b], members[c]};
  return true;
}

}  // namespace detail

/// Uniform random questions over `items`, skipping excluded ones and
/// repeats within the batch.
inline std::vector<Question> random_questions(const std::vector<ItemId>& items, std::size_t count, Rng& rng,
                                              const QuestionFilter& excluded = {}, int retry_cap = 20) {
  if (items.size() < 3) throw ValidationError("need at least 3 items to ask a question");
  std::vector<Question> out;
  std::set<std::string> taken;
  int failures = 0;
  while (out.size() < count && failures < retry_cap * 50) {
    std::array<ItemId, 3> t{};
    detail::draw_triple(items, rng, t);
    Question q(t[0], t[1], t[2]);
    if ((excluded && excluded(q)) || !taken.insert(q.key()).second) {
      ++failures;
      continue;
    }
    failures = 0;
    out.push_back(q);
  }
  return out;
}

/// Round-robin over all nodes (pre-order, root first) with at least three
/// members, drawing one uniform triple from a node per turn. A draw that hits
/// an excluded or already proposed question is retried up to the cap, then
/// the node's turn is skipped.
inline std::vector<Question> propose_questions(const HierarchyTree& tree, std::size_t count, Rng& rng,
                                               const QuestionFilter& excluded = {}, int retry_cap = 20) {
  std::vector<const HierarchyNode*> eligible;
  for (const auto* n : tree.nodes()) {
    if (n->members.size() >= 3) eligible.push_back(n);
  }
  if (eligible.empty()) throw ValidationError("no hierarchy node has three or more members");

  std::vector<Question> out;
  std::set<std::string> taken;
  while (out.size() < count) {
    bool progress = false;
    for (const auto* node : eligible) {
      if (out.size() >= count) break;
      for (int attempt = 0; attempt < retry_cap; ++attempt) {
        std::array<ItemId, 3> t{};
        detail::draw_triple(node->members, rng, t);
        Question q(t[0], t[1], t[2], node->id);
        if ((excluded && excluded(q)) || taken.count(q.key())) continue;
        taken.insert(q.key());
        out.push_back(q);
        progress = true;
        break;
      }
    }
    if (!progress) break;  // every node exhausted
  }
  return out;
}

struct SelectionResult {
  std::vector<Question> questions;
  std::vector<RejectionDecision> decisions;  // one per proposal, in proposal order
  std::size_t proposed = 0;
  std::size_t rejected_confident = 0;
  std::size_t rejected_ambiguous = 0;
  std::size_t topped_up = 0;  // uniform fallback questions added after filtering
};

/// Proposes budget x oversampling questions from the tree, drops those the
/// Dirichlet filter rejects, keeps the first `budget` survivors and tops up
/// with uniform random questions if too few survive. Never returns a
/// question `responder` has already answered.
inline SelectionResult select_batch(const HierarchyTree& tree, const KnowledgePool& pool,
                                    const std::string& responder, const SelectionConfig& config, Rng& rng,
                                    std::uint64_t tally_seed = 0) {
  config.validate();
  QuestionFilter answered = [&](const Question& q) { return pool.contains(q, responder); };
  SelectionResult result;
  auto proposals = propose_questions(tree, config.budget * config.oversampling, rng, answered, config.retry_cap);
  result.proposed = proposals.size();

  SimilarityIndex index(pool, tree);
  std::set<std::string> kept;
  for (const auto& q : proposals) {
    auto d = reject(q, tree, index, config, tally_seed);
    result.decisions.push_back(d);
    if (d.verdict == Verdict::reject_confident) {
      ++result.rejected_confident;
    } else if (d.verdict == Verdict::reject_ambiguous) {
      ++result.rejected_ambiguous;
    } else if (result.questions.size() < config.budget) {
      result.questions.push_back(q);
      kept.insert(q.key());
    }
  }

  if (result.questions.size() < config.budget) {
    const int root = tree.root().id;
    QuestionFilter avoid = [&](const Question& q) { return answered(q) || kept.count(q.key()) != 0; };
    std::vector<ItemId> items = tree.root().members;
    std::sort(items.begin(), items.end());
    for (const auto& q : random_questions(items, config.budget - result.questions.size(), rng, avoid,
                                          config.retry_cap)) {
      result.questions.emplace_back(q[0], q[1], q[2], root);
      ++result.topped_up;
    }
  }
  return result;
}

}  // namespace hke
