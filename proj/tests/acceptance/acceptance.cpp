// Headless acceptance run. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hke/hke.hpp"
#include "hke/service/server.hpp"
#include "../fixtures.hpp"
#include "../oracles.hpp"
#include "../process.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hke;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int precision = 4) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << x;
  return ss.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// ---------------------------------------------------------------------------
// 1. loss formulas

Outcome loss_examples() {
  using V = Eigen::Vector2d;
  struct Case {
    std::string name;
    double got, want;
  };
  const V o(0, 0), up(0, 1), far(3, 0), two(2, 0), one(1, 0);
  std::vector<Case> cases{
      {"triplet inactive", triplet_loss(o, up, far, 0.4), 0.0},
      {"triplet coincident", triplet_loss(one, one, one, 0.4), 0.4},
      {"triplet hand", triplet_loss(o, two, one, 0.5), 3.5},
      {"dual inactive", dual_triplet_loss(o, up, far, 0.4), 0.0},
      {"dual coincident", dual_triplet_loss(one, one, one, 0.4), 0.8},
      {"dual hand", dual_triplet_loss(o, two, one, 0.5), 7.0},
      {"margin no gain", adaptive_margin(0.2, 0.0, 17.0), 0.2},
      {"margin gain", adaptive_margin(0.2, 0.05, 4.0), 0.4},
      {"margin leaf", adaptive_margin(0.2, 0.05, 0.0), 0.2},
      {"diversity pair", diversity_factor(std::vector<Eigen::VectorXd>{V(0, 0), V(2, 0)}), 4.0},
      {"diversity identical", diversity_factor(std::vector<Eigen::VectorXd>{V(1, 1), V(1, 1)}), 0.0},
      {"diversity three", diversity_factor(std::vector<Eigen::VectorXd>{V(0, 0), V(1, 0), V(0, 1)}), 4.0 / 3.0},
  };
  // Relation between the two losses and symmetry on random points.
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    Eigen::Vector3d a(g(rng), g(rng), g(rng)), b(g(rng), g(rng), g(rng)), n(g(rng), g(rng), g(rng));
    const double m = std::abs(g(rng));
    const double dual = dual_triplet_loss(a, b, n, m);
    cases.push_back({"split " + std::to_string(i), dual, triplet_loss(a, b, n, m) + triplet_loss(b, a, n, m)});
    cases.push_back({"symmetry " + std::to_string(i), dual, dual_triplet_loss(b, a, n, m)});
  }
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : cases) {
    const double err = std::abs(c.got - c.want);
    if (!(err <= worst) || std::isnan(err)) {
      worst = std::isnan(err) ? INFINITY : err;
      worst_name = c.name;
    }
  }
  return {worst <= 1e-9, std::to_string(cases.size()) + " cases, max error " + fmt(worst) +
                             (worst_name.empty() ? "" : " (" + worst_name + ")")};
}

// ---------------------------------------------------------------------------
// 2. gradient check

Outcome gradient_check() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0, worst_zero = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t dim = 3 + rng() % 6, hidden = 4 + rng() % 8, out = 2 + rng() % 4, n = 10 + rng() % 10;
    std::vector<Item> items(n);
    std::map<ItemId, std::vector<double>> features;
    for (std::size_t i = 0; i < n; ++i) {
      items[i].id = static_cast<ItemId>(i);
      for (std::size_t d = 0; d < dim; ++d) items[i].features.push_back(g(rng));
      features[items[i].id] = items[i].features;
    }
    Dataset data("gradcheck", dim, items);
    EmbeddingModel model({dim, hidden, out}, rng());
    std::vector<AnsweredTriplet> triplets;
    const int count = 3 + static_cast<int>(rng() % 8);
    for (int t = 0; t < count; ++t) {
      std::vector<ItemId> ids(n);
      std::iota(ids.begin(), ids.end(), 0);
      std::shuffle(ids.begin(), ids.end(), rng);
      triplets.push_back({ids[0], ids[1], ids[2], 0.1 + 2.0 * std::abs(g(rng))});
    }
    Gradient grad = Gradient::zeros_like(model);
    loss_and_gradient(model, triplets, FeatureTable(data), grad);
    auto cmp = oracle::central_differences(model, grad, triplets, features, 1e-4);
    worst = std::max(worst, cmp.max_relative_error());
    worst_zero = std::max(worst_zero, cmp.max_zero_error());
  }
  return {worst < 1e-4 && worst_zero < 1e-8,
          "10 models, max relative error " + fmt(worst) + ", max error on zero components " + fmt(worst_zero)};
}

// ---------------------------------------------------------------------------
// 3. dendrogram purity

Outcome purity_oracle() {
  std::mt19937_64 rng(31);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 29;
    std::vector<ItemId> items(n);
    std::iota(items.begin(), items.end(), 0);
    const std::size_t classes = 1 + rng() % 5;
    LabelMap labels;
    for (auto id : items) labels[id] = std::string(1, static_cast<char>('a' + rng() % classes));
    labels[1] = labels[0];
    auto tree = fixtures::numbered(oracle::random_tree(items, rng));
    mismatches += dendrogram_purity_exact(tree, labels) != oracle::dendrogram_purity(tree.root(), labels);
  }
  return {mismatches == 0, "100 random trees, " + std::to_string(mismatches) + " mismatches"};
}

// ---------------------------------------------------------------------------
// 4. Dirichlet moments

Outcome dirichlet_grid() {
  const std::vector<std::array<std::int64_t, 3>> priors{{1, 1, 1}, {2, 2, 2}, {1, 2, 3}, {3, 1, 2}, {5, 5, 5},
                                                        {1, 1, 10}, {7, 3, 1}, {10, 10, 10}, {2, 9, 4}, {1, 6, 1}};
  double worst = 0.0;
  int points = 0;
  for (const auto& alpha : priors) {
    for (std::uint32_t a = 0; a < 10; ++a) {
      for (std::uint32_t b = 0; b < 10; ++b) {
        const std::uint32_t c = (7 * a + 3 * b) % 13;
        DirichletStats s{{double(alpha[0]), double(alpha[1]), double(alpha[2])}, {a, b, c}};
        auto want = oracle::dirichlet(alpha, {a, b, c});
        worst = std::max(worst, std::abs(expected_max(s) - static_cast<double>(want.expected_max)));
        worst = std::max(worst, std::abs(variance_sum(s) - static_cast<double>(want.variance_sum)));
        ++points;
      }
    }
  }
  const DirichletStats fresh;
  const bool exact = expected_max(fresh) == 1.0 / 3.0 && variance_sum(fresh) == 1.0 / 6.0;
  const auto fresh_oracle = oracle::dirichlet({1, 1, 1}, {0, 0, 0});
  const bool oracle_exact =
      fresh_oracle.expected_max == oracle::Rational(1, 3) && fresh_oracle.variance_sum == oracle::Rational(1, 6);
  return {points == 1000 && worst <= 1e-12 && exact && oracle_exact,
          std::to_string(points) + " points, max error " + fmt(worst) + ", fresh point " +
              (exact && oracle_exact ? "(1/3, 1/6) exact" : "NOT exact")};
}

// ---------------------------------------------------------------------------
// 5 and 7. blob ablation and mixed pools

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

struct BlobRuns {
  std::vector<Dataset> data;
  std::vector<AblationResult> ablation;
};

const BlobRuns& blob_runs() {
  static std::optional<BlobRuns> runs;
  if (runs) return *runs;
  runs.emplace();
  for (auto seed : kSeeds) {
    auto cfg = blob_protocol(seed);
    auto data = resolve_dataset(cfg.dataset);
    auto participants = make_object_participants(data, seed);
    const auto t0 = std::chrono::steady_clock::now();
    runs->ablation.push_back(run_ablation(data, participants, cfg, seed));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "  ablation seed " << seed << " done in " << fmt(secs, 3) << " s\n";
    for (const auto& p : runs->ablation.back().participants) {
      std::cerr << "    " << p.participant;
      for (const auto& a : p.arms) std::cerr << " " << a.arm << "=" << fmt(a.purity.back());
      std::cerr << "\n";
    }
    runs->data.push_back(std::move(data));
  }
  return *runs;
}

Outcome blob_ordering() {
  const auto& runs = blob_runs();
  bool pass = true;
  std::ostringstream detail;
  const auto& first = runs.ablation.front();
  for (std::size_t p = 0; p < first.participants.size(); ++p) {
    std::map<std::string, double> med;
    for (const auto& arm : ablation_arms()) {
      std::vector<double> finals;
      for (const auto& r : runs.ablation) finals.push_back(r.participants[p].arm(arm).purity.back());
      med[arm] = median(finals);
    }
    const bool ok = med["active_adaptive"] >= med["active_fixed"] && med["active_fixed"] >= med["random_fixed"] &&
                    med["random_fixed"] > med["raw_features"] && med["active_adaptive"] >= 0.85;
    pass = pass && ok;
    detail << (p ? "; " : "") << first.participants[p].participant << " AQS+AM " << fmt(med["active_adaptive"])
           << " AQS+fixed " << fmt(med["active_fixed"]) << " random " << fmt(med["random_fixed"]) << " raw "
           << fmt(med["raw_features"]) << (ok ? "" : " [violated]");
  }
  return {pass, "medians over 5 seeds: " + detail.str()};
}

// Internal groupings that exist in one participant's hierarchy but not in all
// of them (see make_object_participants).
const std::vector<std::set<std::string>> kSpecificGroups{
    {"deer", "horse"}, {"bird", "cat", "dog", "frog"}, {"cat", "deer", "dog", "horse"},
    {"bird", "frog"},  {"cat", "dog"},                 {"bird", "deer", "frog", "horse"}};

struct MixedCheck {
  double purity = 0.0;
  int classes_covered = 0;
  std::optional<std::string> specific;
};

MixedCheck check_mixed(const HierarchyTree& tree, const LabelMap& labels, double purity) {
  MixedCheck out;
  out.purity = purity;
  std::map<std::string, int> class_size;
  for (const auto& [id, l] : labels) ++class_size[l];
  for (const auto& [cls, size] : class_size) {
    for (const HierarchyNode* node : tree.nodes()) {
      auto acc = node_accuracy(*node, labels);
      if (acc.majority != cls || acc.accuracy < 0.8) continue;
      const double held = acc.accuracy * static_cast<double>(node->members.size());
      if (held >= 0.5 * size) {
        ++out.classes_covered;
        break;
      }
    }
  }
  for (const auto& group : kSpecificGroups) {
    int group_size = 0;
    for (const auto& cls : group) group_size += class_size[cls];
    for (const HierarchyNode* node : tree.nodes()) {
      if (node->children.empty()) continue;
      int inside = 0;
      for (auto id : node->members) inside += group.count(labels.at(id)) > 0;
      const double precision = static_cast<double>(inside) / static_cast<double>(node->members.size());
      const double recall = static_cast<double>(inside) / group_size;
      if (precision >= 0.8 && recall >= 0.8) {
        std::string name;
        for (const auto& cls : group) name += (name.empty() ? "" : "+") + cls;
        out.specific = name;
        break;
      }
    }
    if (out.specific) break;
  }
  return out;
}

Outcome mixed_pools() {
  const auto& runs = blob_runs();
  int passing = 0;
  std::ostringstream detail;
  for (std::size_t s = 0; s < kSeeds.size(); ++s) {
    std::vector<KnowledgePool> pools;
    for (const auto& p : runs.ablation[s].participants) pools.push_back(p.arm("active_adaptive").pool);
    const auto& data = runs.data[s];
    const auto labels = data.leaf_labels();
    auto mixed = run_mixed(data, pools, blob_protocol(kSeeds[s]), labels);
    auto check = check_mixed(mixed.tree, labels, mixed.purity);
    const bool ok = check.classes_covered == 10 && check.specific.has_value();
    passing += ok;
    detail << (s ? "; " : "") << "seed " << kSeeds[s] << " classes " << check.classes_covered << "/10 specific "
           << check.specific.value_or("none") << " purity " << fmt(check.purity);
  }
  return {passing * 2 > static_cast<int>(kSeeds.size()),
          std::to_string(passing) + "/5 seeds satisfy the property: " + detail.str()};
}

// ---------------------------------------------------------------------------
// 6 and 8. shape protocol and determinism

struct ShapeRun {
  ExperimentResult result;
  std::string metrics;
};

ShapeRun run_shapes(std::uint64_t seed) {
  auto cfg = shape_protocol(seed);
  auto set = generate_shapes(cfg.dataset.seed);
  VirtualParticipant participant("shape-bias", set.hierarchy, set.dataset, 0.0, seed);
  auto result = run_elicitation(set.dataset, participant, cfg);
  auto metrics = metrics_json(result).dump();
  return {std::move(result), std::move(metrics)};
}

const ShapeRun& shape_run() {
  static std::optional<ShapeRun> run;
  if (!run) run = run_shapes(1);
  return *run;
}

Outcome shape_bias() {
  const auto& run = shape_run();
  const auto shapes = generate_shapes(1).dataset.labels_at(0);
  const auto& root = run.result.final_tree.root();
  if (root.children.empty()) return {false, "final tree has no split"};
  bool pass = true;
  std::ostringstream detail;
  for (const auto& child : root.children) {
    auto acc = node_accuracy(child, shapes);
    pass = pass && acc.accuracy >= 0.9;
    detail << " " << acc.majority << "(" << child.members.size() << ")=" << fmt(acc.accuracy);
  }
  return {pass, std::to_string(root.children.size()) + " top-level nodes:" + detail.str() +
                    ", pool " + std::to_string(run.result.pool.size()) + ", purity " +
                    fmt(run.result.final_purity())};
}

Outcome determinism() {
  const auto& first = shape_run();
  auto second = run_shapes(1);
  const bool same = first.metrics == second.metrics;
  return {same, "shape protocol seed 1 run twice: metrics JSON " + std::to_string(first.metrics.size()) + " bytes, " +
                    (same ? "identical" : "different")};
}

// ---------------------------------------------------------------------------
// 9. service durability

class Api {
 public:
  explicit Api(int port) : client_("127.0.0.1", port) { client_.set_read_timeout(60, 0); }

  json call(const std::string& method, const std::string& path, const json& body, int expect) {
    auto res = method == "GET" ? client_.Get(path) : client_.Post(path, body.dump(), "application/json");
    if (!res) throw std::runtime_error(method + " " + path + ": no response");
    if (res->status != expect) {
      throw std::runtime_error(method + " " + path + ": status " + std::to_string(res->status) + " " + res->body);
    }
    return json::parse(res->body);
  }

 private:
  httplib::Client client_;
};

Outcome service_durability() {
  const fs::path root = fs::temp_directory_path() / "hke_acceptance_service";
  fs::remove_all(root);
  fs::create_directories(root);
  auto cfg = shape_protocol(1);
  cfg.initial_questions = 30;
  cfg.selection.budget = 30;
  std::ofstream(root / "config.json") << to_json(cfg).dump(2);
  const std::vector<std::string> args{"serve", "--dataset", "shapes", "--config", (root / "config.json").string(),
                                      "--port", "0", "--host", "127.0.0.1", "--state-dir", (root / "state").string()};

  std::set<std::string> served;
  std::map<std::string, ItemId> acked;
  int repeats = 0;
  std::string sid;
  std::mt19937_64 rng(9);

  auto answer_one = [&](Api& api) {
    auto q = api.call("GET", "/sessions/" + sid + "/question", {}, 200);
    const std::string key = q["question_id"];
    repeats += !served.insert(key).second;
    const ItemId chosen = q["items"][rng() % 3]["id"];
    auto ack = api.call("POST", "/sessions/" + sid + "/answers", {{"question_id", key}, {"chosen", chosen}}, 200);
    if (!ack["duplicate"].get<bool>()) acked[key] = chosen;
  };

  {
    testing_process::ServerProcess server(HKE_CLI_PATH, args);
    Api api(server.port());
    sid = api.call("POST", "/sessions", {{"responder", "durability"}}, 201)["session_id"];
    for (int i = 0; i < 25; ++i) answer_one(api);
    server.kill();
  }

  testing_process::ServerProcess server(HKE_CLI_PATH, args);
  Api api(server.port());
  const std::size_t after_restart = api.call("GET", "/sessions/" + sid + "/progress", {}, 200)["answered"];
  bool trained = false;
  for (int i = 25; i < 50; ++i) {
    if (i == 30) {
      api.call("POST", "/sessions/" + sid + "/train", json::object(), 202);
      for (int poll = 0; poll < 1200; ++poll) {
        if (api.call("GET", "/sessions/" + sid + "/progress", {}, 200)["phase"] != "training") break;
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      }
      trained = api.call("GET", "/sessions/" + sid + "/progress", {}, 200)["phase"] == "ready";
    }
    answer_one(api);
  }
  const std::size_t answered = api.call("GET", "/sessions/" + sid + "/progress", {}, 200)["answered"];
  server.kill();

  auto pool = load_pool(root / "state" / sid / "pool.jsonl");
  int lost = 0;
  for (const auto& [key, chosen] : acked) {
    bool found = false;
    for (const auto& r : pool.records()) found = found || (r.question.key() == key && r.chosen == chosen);
    lost += !found;
  }
  const bool pass = after_restart == 25 && answered == 50 && acked.size() == 50 && pool.size() == 50 && lost == 0 &&
                    repeats == 0 && trained;
  return {pass, "kill -9 at 25: " + std::to_string(after_restart) + " answers after restart, " +
                    std::to_string(answered) + " total, " + std::to_string(lost) + " acknowledged answers lost, " +
                    std::to_string(repeats) + " repeated questions, retrain " + (trained ? "ok" : "failed")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"loss formula oracles", loss_examples},
      {"gradient check", gradient_check},
      {"dendrogram purity oracle", purity_oracle},
      {"Dirichlet moments", dirichlet_grid},
      {"blob ablation ordering", blob_ordering},
      {"shape-bias top-level split", shape_bias},
      {"mixed-pool common structure", mixed_pools},
      {"determinism", determinism},
      {"service durability", service_durability},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !out.pass;
    std::cout << (out.pass ? "PASS" : "FAIL") << "  criterion " << number << " (" << criteria[i].first << ", "
              << fmt(secs, 3) << " s): " << out.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
