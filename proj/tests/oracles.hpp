#pragma once

// Independent reference computations used by the unit tests and the
// acceptance run. Nothing here calls into the library code it checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "hke/embedding/model.hpp"
#include "hke/embedding/train.hpp"
#include "hke/hierarchy/tree.hpp"

namespace oracle {

using Rational = boost::multiprecision::cpp_rational;

/// Plain nested-loop forward pass for one input vector.
inline std::vector<double> forward(const hke::EmbeddingModel& model, std::vector<double> x) {
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].weights;
    std::vector<double> y(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      double s = layers[l].bias(r);
      for (Eigen::Index c = 0; c < w.cols(); ++c) s += w(r, c) * x[static_cast<std::size_t>(c)];
      y[static_cast<std::size_t>(r)] = (l + 1 < layers.size() && s < 0.0) ? 0.0 : s;
    }
    x = std::move(y);
  }
  return x;
}

inline double sq(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

/// [d(p1,p2) - d(n,p1) + m]_+ + [d(p1,p2) - d(n,p2) + m]_+ summed over triplets.
inline double dual_loss(const hke::EmbeddingModel& model, const std::vector<hke::AnsweredTriplet>& triplets,
                        const std::map<hke::ItemId, std::vector<double>>& features) {
  double total = 0.0;
  for (const auto& t : triplets) {
    auto p1 = forward(model, features.at(t.p1));
    auto p2 = forward(model, features.at(t.p2));
    auto n = forward(model, features.at(t.n));
    const double pair = sq(p1, p2);
    total += std::max(0.0, pair - sq(n, p1) + t.margin) + std::max(0.0, pair - sq(n, p2) + t.margin);
  }
  return total;
}

/// Central differences over every parameter, in the layer/weights/bias order
/// of the model. Returns {numeric, analytic} flattened.
struct GradientComparison {
  std::vector<double> numeric;
  std::vector<double> analytic;

  /// Components where both values are below `zero` (dead rectifier units,
  /// inactive hinges) carry no relative information: the numeric side is
  /// pure rounding noise of order ulp(loss) / step. Those are checked by
  /// absolute difference instead and reported through max_zero_error().
  static constexpr double zero = 1e-6;

  double max_relative_error() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double scale = std::max(std::abs(numeric[i]), std::abs(analytic[i]));
      if (scale < zero) continue;
      worst = std::max(worst, std::abs(numeric[i] - analytic[i]) / scale);
    }
    return worst;
  }

  double max_zero_error() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      if (std::max(std::abs(numeric[i]), std::abs(analytic[i])) < zero) {
        worst = std::max(worst, std::abs(numeric[i] - analytic[i]));
      }
    }
    return worst;
  }
};

inline GradientComparison central_differences(hke::EmbeddingModel model, const hke::Gradient& analytic,
                                              const std::vector<hke::AnsweredTriplet>& triplets,
                                              const std::map<hke::ItemId, std::vector<double>>& features,
                                              double step) {
  GradientComparison out;
  auto probe = [&](double& param, double grad) {
    const double saved = param;
    param = saved + step;
    const double up = dual_loss(model, triplets, features);
    param = saved - step;
    const double down = dual_loss(model, triplets, features);
    param = saved;
    out.numeric.push_back((up - down) / (2.0 * step));
    out.analytic.push_back(grad);
  };
  auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (Eigen::Index r = 0; r < layers[l].weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layers[l].weights.cols(); ++c) {
        probe(layers[l].weights(r, c), analytic.layers[l].weights(r, c));
      }
    }
    for (Eigen::Index r = 0; r < layers[l].bias.size(); ++r) probe(layers[l].bias(r), analytic.layers[l].bias(r));
  }
  return out;
}

/// Dendrogram purity by enumerating every same-label pair, locating its
/// lowest common ancestor by walking the tree, and counting that node's
/// members directly. O(n^3) in the worst case.
inline Rational dendrogram_purity(const hke::HierarchyNode& root, const std::map<hke::ItemId, std::string>& labels) {
  std::vector<hke::ItemId> items = root.members;
  auto holds = [](const hke::HierarchyNode& n, hke::ItemId id) {
    for (auto m : n.members) {
      if (m == id) return true;
    }
    return false;
  };
  Rational sum = 0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      const auto& label = labels.at(items[i]);
      if (labels.at(items[j]) != label) continue;
      const hke::HierarchyNode* node = &root;
      bool descended = true;
      while (descended) {
        descended = false;
        for (const auto& c : node->children) {
          if (holds(c, items[i]) && holds(c, items[j])) {
            node = &c;
            descended = true;
            break;
          }
        }
      }
      std::int64_t same = 0;
      for (auto m : node->members) same += labels.at(m) == label;
      sum += Rational(same, static_cast<std::int64_t>(node->members.size()));
      ++pairs;
    }
  }
  return sum / pairs;
}

/// Random recursive partition of `items`: every internal node splits its
/// members into 2..4 non-empty random groups.
inline hke::HierarchyNode random_tree(std::vector<hke::ItemId> items, std::mt19937_64& rng, int depth = 0) {
  hke::HierarchyNode node;
  node.members = items;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (items.size() < 2 || depth >= 5 || unit(rng) < 0.25) return node;
  std::shuffle(items.begin(), items.end(), rng);
  const std::size_t k = std::min<std::size_t>(items.size(), 2 + rng() % 3);
  std::vector<std::vector<hke::ItemId>> groups(k);
  for (std::size_t i = 0; i < k; ++i) groups[i].push_back(items[i]);
  for (std::size_t i = k; i < items.size(); ++i) groups[rng() % k].push_back(items[i]);
  for (auto& g : groups) node.children.push_back(random_tree(g, rng, depth + 1));
  return node;
}

/// Dirichlet posterior moments in exact arithmetic. alpha and counts must be
/// integers so the rationals stay exact.
struct DirichletMoments {
  Rational expected_max;
  Rational variance_sum;
};

inline DirichletMoments dirichlet(std::array<std::int64_t, 3> alpha, std::array<std::int64_t, 3> counts) {
  std::array<Rational, 3> a;
  Rational a0 = 0;
  for (int j = 0; j < 3; ++j) {
    a[j] = Rational(alpha[j] + counts[j]);
    a0 += a[j];
  }
  DirichletMoments m;
  m.expected_max = 0;
  m.variance_sum = 0;
  for (int j = 0; j < 3; ++j) {
    const Rational mean = a[j] / a0;
    if (mean > m.expected_max) m.expected_max = mean;
    // Var(p_j) = mean (1 - mean) / (a0 + 1)
    m.variance_sum += mean * (1 - mean) / (a0 + 1);
  }
  return m;
}

}  // namespace oracle
