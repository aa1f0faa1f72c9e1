#pragma once

#include <algorithm>
#include <array>
#include <cstdint>

#include "hke/common.hpp"

namespace hke {

/// Dirichlet prior over the three answer probabilities plus the answer
/// counts gathered from similar questions. The posterior is Dir(alpha + m).
struct DirichletStats {
  std::array<double, 3> alpha{1.0, 1.0, 1.0};
  std::array<std::uint32_t, 3> counts{0, 0, 0};

  std::array<double, 3> posterior() const {
    std::array<double, 3> post{};
    for (int j = 0; j < 3; ++j) {
      if (!(alpha[j] > 0.0)) throw ValidationError("Dirichlet prior must be strictly positive");
      post[j] = alpha[j] + counts[j];
    }
    return post;
  }

  std::uint32_t total_count() const { return counts[0] + counts[1] + counts[2]; }
};

/// Largest posterior mean, max_j (alpha_j + m_j) / sum_l (alpha_l + m_l).
inline double expected_max(const DirichletStats& stats) {
  const auto post = stats.posterior();
  const double total = post[0] + post[1] + post[2];
  return *std::max_element(post.begin(), post.end()) / total;
}

/// Sum of the posterior marginal variances,
/// sum_j a_j (a_0 - a_j) / (a_0^2 (a_0 + 1)).
inline double variance_sum(const DirichletStats& stats) {
  const auto post = stats.posterior();
  const double a0 = post[0] + post[1] + post[2];
  double sum = 0.0;
  for (double a : post) sum += a * (a0 - a);
  return sum / (a0 * a0 * (a0 + 1.0));
}

}  // namespace hke
