#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hullft/errors.hpp"
#include "hullft/geometry.hpp"

namespace hullft {

// Tuning knobs for the conditional-gradient solve. Unset support_cap falls
// back to the pool size; unset max_iters to 10x the resolved cap.
struct FWConfig {
  double epsilon = 1e-5;
  std::optional<int> support_cap;
  std::optional<int> max_iters;
  double gap_tolerance = 1e-12;
  // Restrict every vertex pick to never-chosen indices and skip the epsilon
  // stop, so each iteration brings in a fresh point.
  bool forced_unique = false;
};

enum class FWStop { tolerance_met, cap_reached, gap_vanished, max_iters };

inline const char* to_string(FWStop s) {
  switch (s) {
    case FWStop::tolerance_met: return "tolerance_met";
    case FWStop::cap_reached: return "cap_reached";
    case FWStop::gap_vanished: return "gap_vanished";
    case FWStop::max_iters: return "max_iters";
  }
  return "unknown";
}

// One record per applied update. weight_sum and min_weight audit simplex
// feasibility; objective is the squared error after the step.
struct FWIteration {
  double objective;
  Eigen::Index vertex;
  double step;
  std::size_t support_size;
  double weight_sum;
  double min_weight;
};

using FWTrace = std::vector<FWIteration>;

struct FWResult {
  SimplexWeights weights;
  double final_error;
  int iterations;
  FWStop stop_reason;
  FWTrace trace;
};

namespace detail {

inline Eigen::Index argmax_lowest_tie(const Eigen::VectorXd& scores) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

}  // namespace detail

// Minimizes ||q - Pw||^2 over the simplex by conditional gradient with exact
// line search. Starts from the vertex maximizing <q, p_i> and stops on the
// first of: squared error <= epsilon (unless forced_unique), a Frank-Wolfe
// gap <= gap_tolerance, an update that would grow the support beyond the cap,
// or the iteration bound. Ties in both argmax selections go to the lowest
// index. The support cap bounds support size, never the number of refinement
// steps over already-active vertices.
inline FWResult frank_wolfe(const EmbeddingVector& q, const CandidatePool& pool, const FWConfig& cfg) {
  const Eigen::Index K = pool.size();
  if (q.size() != pool.dim())
    throw ContractViolation("query dimension " + std::to_string(q.size()) +
                            " does not match pool dimension " + std::to_string(pool.dim()));
  if (cfg.epsilon < 0.0) throw ContractViolation("epsilon must be >= 0");
  if (cfg.gap_tolerance < 0.0) throw ContractViolation("gap_tolerance must be >= 0");
  const int cap = cfg.support_cap.value_or(static_cast<int>(K));
  if (cap < 1) throw ContractViolation("support_cap must be >= 1");
  const long long max_iters = cfg.max_iters ? static_cast<long long>(*cfg.max_iters)
                                            : 10LL * static_cast<long long>(cap);
  if (max_iters < 1) throw ContractViolation("max_iters must be >= 1");

  Eigen::VectorXd w = Eigen::VectorXd::Zero(K);
  const Eigen::Index start = detail::argmax_lowest_tie(pool.rows() * q);
  w[start] = 1.0;
  EmbeddingVector point = pool.row(start).transpose();
  std::vector<bool> chosen(static_cast<std::size_t>(K), false);
  chosen[static_cast<std::size_t>(start)] = true;

  double error = (q - point).squaredNorm();
  std::size_t support = 1;
  FWTrace trace;
  int iterations = 0;
  FWStop reason = FWStop::max_iters;

  while (true) {
    if (!cfg.forced_unique && error <= cfg.epsilon) {
      reason = FWStop::tolerance_met;
      break;
    }
    if (iterations >= max_iters) {
      reason = FWStop::max_iters;
      break;
    }

    const EmbeddingVector residual = q - point;
    const Eigen::VectorXd scores = pool.rows() * residual;
    Eigen::Index vertex = -1;
    for (Eigen::Index i = 0; i < K; ++i) {
      if (cfg.forced_unique && chosen[static_cast<std::size_t>(i)]) continue;
      if (vertex < 0 || scores[i] > scores[vertex]) vertex = i;
    }
    if (vertex < 0) {
      // forced_unique exhausted the pool; no admissible direction remains.
      reason = FWStop::gap_vanished;
      break;
    }

    const double gap = scores[vertex] - residual.dot(point);
    if (gap <= cfg.gap_tolerance) {
      reason = FWStop::gap_vanished;
      break;
    }
    if (support >= static_cast<std::size_t>(cap) && w[vertex] == 0.0) {
      reason = FWStop::cap_reached;
      break;
    }

    const EmbeddingVector direction = pool.row(vertex).transpose() - point;
    const double dd = direction.squaredNorm();
    if (dd == 0.0) {
      reason = FWStop::gap_vanished;
      break;
    }
    const double step = std::clamp(gap / dd, 0.0, 1.0);

    const EmbeddingVector next_point = (1.0 - step) * point + step * pool.row(vertex).transpose();
    const double next_error = (q - next_point).squaredNorm();
    if (next_error >= error) {
      // Exact line search cannot increase the objective; a non-improving
      // update means the iterate sits at the numerical floor.
      reason = FWStop::gap_vanished;
      break;
    }

    w *= (1.0 - step);
    w[vertex] += step;
    point = next_point;
    error = next_error;
    chosen[static_cast<std::size_t>(vertex)] = true;
    support = 0;
    for (Eigen::Index i = 0; i < K; ++i)
      if (w[i] > 0.0) ++support;
    ++iterations;
    trace.push_back({error, vertex, step, support, w.sum(), w.minCoeff()});
  }

  // Strict simplex membership on output: clamp any drift and renormalize.
  Eigen::VectorXd clamped = w.cwiseMax(0.0);
  clamped /= clamped.sum();
  SimplexWeights weights = SimplexWeights::from_dense(clamped);
  const double final_error = reconstruction_error(q, pool, weights);
  return FWResult{std::move(weights), final_error, iterations, reason, std::move(trace)};
}

}  // namespace hullft
