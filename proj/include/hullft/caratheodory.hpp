#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "hullft/errors.hpp"
#include "hullft/geometry.hpp"

namespace hullft {

// Nontrivial coefficients with sum(alpha) = 0 and sum(alpha_i * p_i) = 0,
// indexed over the point list they were computed from.
struct AffineDependency {
  std::vector<Eigen::Index> indices;
  Eigen::VectorXd coefficients;
};

namespace detail {

inline void check_equal_dims(const std::vector<EmbeddingVector>& points) {
  if (points.empty()) throw ContractViolation("point list must be nonempty");
  const Eigen::Index d = points.front().size();
  for (const auto& p : points)
    if (p.size() != d) throw ContractViolation("points must share one dimension");
}

}  // namespace detail

// Finds a null direction of the (d+1) x n matrix whose columns are the points
// augmented with a row of ones, via singular value decomposition. Requires
// n > d + 1 so the kernel is nonempty. The returned vector is the right
// singular vector of the smallest singular value, sign-fixed so its first
// significant entry is positive.
inline AffineDependency find_affine_dependency(const std::vector<EmbeddingVector>& points) {
  detail::check_equal_dims(points);
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  const Eigen::Index d = points.front().size();
  if (n <= d + 1)
    throw ContractViolation("need more than d+1 = " + std::to_string(d + 1) + " points, got " +
                            std::to_string(n));

  Eigen::MatrixXd augmented(d + 1, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    augmented.block(0, j, d, 1) = points[static_cast<std::size_t>(j)];
    augmented(d, j) = 1.0;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(augmented, Eigen::ComputeFullV);
  const Eigen::VectorXd& sigma = svd.singularValues();
  // Columns of V beyond the singular-value count span an exact kernel. When
  // none exist the smallest singular value must be a numerical zero.
  if (sigma.size() >= n) {
    const double largest = sigma[0];
    const double smallest = sigma[sigma.size() - 1];
    if (smallest > 1e-6 * largest)
      throw NumericalError("no affine dependency found: smallest singular value " +
                           std::to_string(smallest) + " vs largest " + std::to_string(largest));
  }
  Eigen::VectorXd alpha = svd.matrixV().col(n - 1);

  const double magnitude = alpha.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(alpha[i]) > 1e-12 * magnitude) {
      if (alpha[i] < 0.0) alpha = -alpha;
      break;
    }
  }

  AffineDependency dep;
  dep.indices.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) dep.indices.push_back(i);
  dep.coefficients = std::move(alpha);
  return dep;
}

// Shrinks a convex combination to at most d+1 support points with the same
// weighted mean. Each round eliminates the index minimizing w_i / alpha_i over
// positive coefficients (ties to the lowest index) and drops any weight that
// the update pushed below 1e-12.
inline SimplexWeights caratheodory_reduce(const std::vector<EmbeddingVector>& points,
                                          const SimplexWeights& w) {
  detail::check_equal_dims(points);
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  const Eigen::Index d = points.front().size();
  if (w.dimension() != n)
    throw ContractViolation("weights are over " + std::to_string(w.dimension()) +
                            " indices but there are " + std::to_string(n) + " points");

  std::vector<Eigen::Index> active = w.support();
  Eigen::VectorXd weights = w.to_dense();

  while (static_cast<Eigen::Index>(active.size()) > d + 1) {
    std::vector<EmbeddingVector> active_points;
    active_points.reserve(active.size());
    for (Eigen::Index i : active) active_points.push_back(points[static_cast<std::size_t>(i)]);
    Eigen::VectorXd alpha = find_affine_dependency(active_points).coefficients;

    bool has_positive = false;
    for (Eigen::Index j = 0; j < alpha.size(); ++j)
      if (alpha[j] > 0.0) has_positive = true;
    if (!has_positive) alpha = -alpha;
    has_positive = false;
    for (Eigen::Index j = 0; j < alpha.size(); ++j)
      if (alpha[j] > 0.0) has_positive = true;
    if (!has_positive) throw NumericalError("affine dependency has no positive coefficient");

    std::size_t eliminate = 0;
    double best_ratio = 0.0;
    bool found = false;
    for (std::size_t j = 0; j < active.size(); ++j) {
      if (alpha[static_cast<Eigen::Index>(j)] <= 0.0) continue;
      const double ratio = weights[active[j]] / alpha[static_cast<Eigen::Index>(j)];
      if (!found || ratio < best_ratio) {
        best_ratio = ratio;
        eliminate = j;
        found = true;
      }
    }

    const double gamma = best_ratio;
    for (std::size_t j = 0; j < active.size(); ++j)
      weights[active[j]] -= gamma * alpha[static_cast<Eigen::Index>(j)];
    weights[active[eliminate]] = 0.0;

    std::vector<Eigen::Index> next;
    next.reserve(active.size() - 1);
    for (std::size_t j = 0; j < active.size(); ++j) {
      if (j == eliminate) continue;
      if (weights[active[j]] < 1e-12) continue;
      next.push_back(active[j]);
    }
    active = std::move(next);
    if (active.empty()) throw NumericalError("elimination removed every support point");
  }

  double sum = 0.0;
  for (Eigen::Index i : active) sum += weights[i];
  std::vector<SimplexWeights::Entry> entries;
  entries.reserve(active.size());
  for (Eigen::Index i : active) entries.push_back({i, weights[i] / sum});
  return SimplexWeights(std::move(entries), n);
}

}  // namespace hullft
