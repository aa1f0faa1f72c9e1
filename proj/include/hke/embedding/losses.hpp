#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "hke/common.hpp"

namespace hke {

template <typename A, typename B>
double squared_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.size() != b.size()) throw ValidationError("embedding dimensions differ");
  return (a - b).squaredNorm();
}

/// [x]_+. NaN passes through so an overflowed embedding cannot pass for a
/// satisfied triplet.
inline double hinge(double x) { return x > 0.0 || std::isnan(x) ? x : 0.0; }

/// [|a - p|^2 - |a - n|^2 + margin]_+
template <typename A, typename P, typename N>
double triplet_loss(const Eigen::MatrixBase<A>& anchor, const Eigen::MatrixBase<P>& positive,
                    const Eigen::MatrixBase<N>& negative, double margin) {
  return hinge(squared_distance(anchor, positive) - squared_distance(anchor, negative) + margin);
}

/// Both anchor orderings of the two positives against the chosen odd one out:
/// [d(p1,p2) - d(n,p1) + m]_+ + [d(p1,p2) - d(n,p2) + m]_+
template <typename P1, typename P2, typename N>
double dual_triplet_loss(const Eigen::MatrixBase<P1>& p1, const Eigen::MatrixBase<P2>& p2,
                         const Eigen::MatrixBase<N>& negative, double margin) {
  const double pair = squared_distance(p1, p2);
  return hinge(pair - squared_distance(negative, p1) + margin) + hinge(pair - squared_distance(negative, p2) + margin);
}

/// m_a = m_h + gamma * d_H. The base term keeps the margin positive at leaves.
inline double adaptive_margin(double base, double gain, double diversity) {
  if (!(base > 0.0)) throw ValidationError("adaptive margin base must be positive");
  if (gain < 0.0 || diversity < 0.0) throw ValidationError("margin gain and diversity must be non-negative");
  return base + gain * diversity;
}

}  // namespace hke
