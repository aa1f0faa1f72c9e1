#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "hke/common.hpp"
#include "hke/dataset/dataset.hpp"

namespace hke {

struct KMeansResult {
  std::vector<int> assignment;
  RowMatrix centroids;
  double inertia = 0.0;  // within-cluster sum of squares
};

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 100;
};

namespace detail {

inline double row_sqdist(const RowMatrix& a, Eigen::Index i, const RowMatrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

/// k-means++ seeding.
inline RowMatrix seed_centroids(const RowMatrix& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  RowMatrix centroids(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  std::vector<double> nearest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], row_sqdist(points, i, centroids, c - 1));
      total += nearest[i];
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = unit(rng) * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= nearest[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    centroids.row(c) = points.row(pick);
  }
  return centroids;
}

inline KMeansResult lloyd(const RowMatrix& points, RowMatrix centroids, int max_iterations) {
  const Eigen::Index n = points.rows();
  const int k = static_cast<int>(centroids.rows());
  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = row_sqdist(points, i, centroids, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assignment[i] != best) changed = true;
      assignment[i] = best;
      dist[i] = best_d;
    }

    // An empty cluster takes the point farthest from its current centroid.
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int a : assignment) ++counts[a];
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (counts[assignment[i]] > 1 && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      if (far < 0) break;
      --counts[assignment[far]];
      assignment[far] = c;
      counts[c] = 1;
      dist[far] = 0.0;
      changed = true;
    }

    RowMatrix next = RowMatrix::Zero(k, points.cols());
    for (Eigen::Index i = 0; i < n; ++i) next.row(assignment[i]) += points.row(i);
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) next.row(c) /= static_cast<double>(counts[c]);
    }
    centroids = std::move(next);
    if (!changed) break;
  }
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) inertia += row_sqdist(points, i, centroids, assignment[i]);
  return {std::move(assignment), std::move(centroids), inertia};
}

}  // namespace detail

/// Lloyd's algorithm from k-means++ seeds, best of several restarts by
/// inertia (earliest restart wins ties). No cluster is left empty.
inline KMeansResult kmeans(const RowMatrix& points, int k, std::uint64_t seed, const KMeansOptions& options = {}) {
  if (k < 1) throw ValidationError("k must be positive");
  if (points.rows() < k) {
    throw ValidationError("kmeans needs at least k=" + std::to_string(k) + " points, got " +
                          std::to_string(points.rows()));
  }
  KMeansResult best;
  bool have = false;
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    auto result = detail::lloyd(points, detail::seed_centroids(points, k, rng), options.max_iterations);
    if (!have || result.inertia < best.inertia) {
      best = std::move(result);
      have = true;
    }
  }
  return best;
}

/// Pairwise Euclidean distance matrix.
inline Eigen::MatrixXd distance_matrix(const RowMatrix& points) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = (points.row(i) - points.row(j)).norm();
    }
  }
  return d;
}

inline double silhouette_from_distances(const Eigen::MatrixXd& dist, const std::vector<int>& assignment) {
  const std::size_t n = assignment.size();
  if (n == 0) throw ValidationError("silhouette needs points");
  const int k = *std::max_element(assignment.begin(), assignment.end()) + 1;
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int a : assignment) {
    if (a < 0) throw ValidationError("negative cluster label");
    ++counts[a];
  }
  int populated = 0;
  for (int c : counts) populated += c > 0;
  if (populated < 2) throw ValidationError("silhouette needs at least two clusters");
  for (int c : counts) {
    if (c == 0) throw ValidationError("silhouette needs every cluster non-empty");
  }

  double total = 0.0;
  std::vector<double> sums(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    const int own = assignment[i];
    if (counts[own] == 1) continue;  // singleton: s = 0
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) sums[assignment[j]] += dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const double a = sums[own] / (counts[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c != own) b = std::min(b, sums[c] / counts[c]);
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

/// Mean silhouette coefficient with Euclidean distance; singleton clusters
/// contribute 0.
inline double silhouette(const RowMatrix& points, const std::vector<int>& assignment) {
  if (static_cast<std::size_t>(points.rows()) != assignment.size()) {
    throw ValidationError("assignment length does not match point count");
  }
  return silhouette_from_distances(distance_matrix(points), assignment);
}

struct KSelection {
  int k = 0;
  double silhouette = 0.0;
  KMeansResult clustering;
};

/// Clusters for every k in [k_min, k_max] and keeps the best silhouette;
/// ties go to the smaller k.
inline KSelection select_k(const RowMatrix& points, int k_min, int k_max, std::uint64_t seed,
                           const KMeansOptions& options = {}) {
  if (k_min < 2) throw ValidationError("k_min must be >= 2");
  if (k_max < k_min) throw ValidationError("k_max must be >= k_min");
  const Eigen::MatrixXd dist = distance_matrix(points);
  KSelection best;
  for (int k = k_min; k <= k_max; ++k) {
    auto clustering = kmeans(points, k, derive_seed(seed, static_cast<std::uint64_t>(k)), options);
    const double s = silhouette_from_distances(dist, clustering.assignment);
    if (best.k == 0 || s > best.silhouette) best = {k, s, std::move(clustering)};
  }
  return best;
}

inline int choose_k(const RowMatrix& points, int k_min, int k_max, std::uint64_t seed) {
  return select_k(points, k_min, k_max, seed).k;
}

}  // namespace hke
