#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "hullft/errors.hpp"
#include "hullft/geometry.hpp"

namespace hullft {

// Integer counts over support indices, summing exactly to the budget.
// Zero-count entries are kept so fidelity can be reported over the full
// originating support; serialization drops them.
struct SupportMultiset {
  std::vector<Eigen::Index> support;
  std::vector<long long> counts;
  long long budget = 0;

  long long total() const { return std::accumulate(counts.begin(), counts.end(), 0LL); }

  friend bool operator==(const SupportMultiset& a, const SupportMultiset& b) {
    return a.support == b.support && a.counts == b.counts && a.budget == b.budget;
  }
};

// Distance between fractional weights and the empirical weights c/N.
struct FidelityReport {
  double l2_distance = 0.0;
  // One deviation per index of the originating support, in ascending index order.
  std::vector<double> per_index_deviation;
};

// Objective values after the floor stage and after every fill or swap, for
// auditing the refinement.
struct IntegerizeLog {
  std::vector<double> objective;
};

namespace detail {

struct SupportView {
  std::vector<Eigen::Index> indices;
  std::vector<double> weights;
};

inline SupportView support_view(const SimplexWeights& w) {
  SupportView v;
  v.indices.reserve(w.entries().size());
  v.weights.reserve(w.entries().size());
  for (const auto& [index, weight] : w.entries()) {
    v.indices.push_back(index);
    v.weights.push_back(weight);
  }
  return v;
}

inline double multiset_error(const EmbeddingVector& q, const EmbeddingVector& count_sum, long long n) {
  return (q - count_sum / static_cast<double>(n)).squaredNorm();
}

}  // namespace detail

// Error of the multiset's uniform mean against the query.
inline double multiset_reconstruction_error(const EmbeddingVector& q, const CandidatePool& pool,
                                            const SupportMultiset& ms) {
  if (q.size() != pool.dim()) throw ContractViolation("query/pool dimension mismatch");
  EmbeddingVector sum = EmbeddingVector::Zero(pool.dim());
  for (std::size_t j = 0; j < ms.support.size(); ++j)
    sum.noalias() += static_cast<double>(ms.counts[j]) * pool.row(ms.support[j]).transpose();
  return detail::multiset_error(q, sum, ms.budget);
}

// Converts fractional weights into counts summing to N in three stages:
// floor allocation, greedy fill of the leftover units into whichever support
// point yields the smallest post-increment error, and up to T first-improvement
// passes moving single units between ordered pairs. Ties go to the lowest
// support position.
inline SupportMultiset integerize(const EmbeddingVector& q, const CandidatePool& pool,
                                  const SimplexWeights& w, long long n, int swap_passes = 2,
                                  IntegerizeLog* log = nullptr) {
  if (q.size() != pool.dim()) throw ContractViolation("query/pool dimension mismatch");
  if (w.dimension() != pool.size()) throw ContractViolation("weights/pool size mismatch");
  if (n < 1) throw ContractViolation("budget must be >= 1");
  if (swap_passes < 0) throw ContractViolation("swap passes must be >= 0");

  const auto view = detail::support_view(w);
  const std::size_t s = view.indices.size();
  const double budget = static_cast<double>(n);

  std::vector<long long> counts(s);
  EmbeddingVector count_sum = EmbeddingVector::Zero(pool.dim());
  long long allocated = 0;
  for (std::size_t j = 0; j < s; ++j) {
    counts[j] = static_cast<long long>(std::floor(budget * view.weights[j]));
    allocated += counts[j];
    if (counts[j] > 0)
      count_sum.noalias() += static_cast<double>(counts[j]) * pool.row(view.indices[j]).transpose();
  }

  double error = detail::multiset_error(q, count_sum, n);
  if (log) log->objective.push_back(error);

  for (long long unit = allocated; unit < n; ++unit) {
    std::size_t best = 0;
    double best_error = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < s; ++j) {
      const double candidate =
          detail::multiset_error(q, count_sum + pool.row(view.indices[j]).transpose(), n);
      if (candidate < best_error) {
        best_error = candidate;
        best = j;
      }
    }
    ++counts[best];
    count_sum.noalias() += pool.row(view.indices[best]).transpose();
    error = best_error;
    if (log) log->objective.push_back(error);
  }

  for (int pass = 0; pass < swap_passes; ++pass) {
    bool improved = false;
    for (std::size_t j = 0; j < s; ++j) {
      for (std::size_t k = 0; k < s; ++k) {
        if (j == k || counts[j] == 0) continue;
        const EmbeddingVector moved = count_sum - pool.row(view.indices[j]).transpose() +
                                      pool.row(view.indices[k]).transpose();
        const double candidate = detail::multiset_error(q, moved, n);
        if (candidate < error) {
          --counts[j];
          ++counts[k];
          count_sum = moved;
          error = candidate;
          improved = true;
          if (log) log->objective.push_back(error);
        }
      }
    }
    if (!improved) break;
  }

  return SupportMultiset{view.indices, std::move(counts), n};
}

// Floor allocation plus largest-remainder fill. Remainder ties resolve to the
// earlier support position via stable sort.
inline SupportMultiset pad_by_weights(const SimplexWeights& w, long long n) {
  if (n < 1) throw ContractViolation("budget must be >= 1");
  const auto view = detail::support_view(w);
  const std::size_t s = view.indices.size();
  const double budget = static_cast<double>(n);

  std::vector<long long> counts(s);
  std::vector<double> remainders(s);
  long long allocated = 0;
  for (std::size_t j = 0; j < s; ++j) {
    const double scaled = budget * view.weights[j];
    counts[j] = static_cast<long long>(std::floor(scaled));
    remainders[j] = scaled - static_cast<double>(counts[j]);
    allocated += counts[j];
  }

  std::vector<std::size_t> order(s);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (long long unit = allocated; unit < n; ++unit)
    ++counts[order[static_cast<std::size_t>(unit - allocated)]];

  return SupportMultiset{view.indices, std::move(counts), n};
}

// Exhaustive minimizer over all compositions of N on the support, for small
// instances only. Compositions are scanned in lexicographically descending
// order with strict improvement, so ties return the lexicographically largest
// count vector. That matches the greedy fill's preference for earlier support
// positions.
inline SupportMultiset brute_force_integerize(const EmbeddingVector& q, const CandidatePool& pool,
                                              const SimplexWeights& w, long long n) {
  if (q.size() != pool.dim()) throw ContractViolation("query/pool dimension mismatch");
  if (w.dimension() != pool.size()) throw ContractViolation("weights/pool size mismatch");
  if (n < 1) throw ContractViolation("budget must be >= 1");
  const auto view = detail::support_view(w);
  const std::size_t s = view.indices.size();
  if (s > 5) throw ContractViolation("brute force supports at most 5 support points, got " +
                                     std::to_string(s));
  if (n > 12) throw ContractViolation("brute force supports budgets up to 12, got " + std::to_string(n));

  std::vector<long long> current(s, 0);
  std::vector<long long> best(s, 0);
  double best_error = std::numeric_limits<double>::infinity();

  auto recurse = [&](auto&& self, std::size_t j, long long remaining,
                     const EmbeddingVector& partial) -> void {
    if (j + 1 == s) {
      current[j] = remaining;
      const EmbeddingVector total =
          partial + static_cast<double>(remaining) * pool.row(view.indices[j]).transpose();
      const double err = detail::multiset_error(q, total, n);
      if (err < best_error) {
        best_error = err;
        best = current;
      }
      return;
    }
    for (long long c = remaining; c >= 0; --c) {
      current[j] = c;
      self(self, j + 1, remaining - c,
           partial + static_cast<double>(c) * pool.row(view.indices[j]).transpose());
    }
  };
  recurse(recurse, 0, n, EmbeddingVector::Zero(pool.dim()));

  return SupportMultiset{view.indices, std::move(best), n};
}

// ||w - c/N||_2 over the originating support. Indices missing from the
// multiset contribute their full weight.
inline FidelityReport fidelity(const SimplexWeights& w, const SupportMultiset& ms) {
  std::vector<double> empirical(w.entries().size(), 0.0);
  const auto view = detail::support_view(w);
  for (std::size_t j = 0; j < ms.support.size(); ++j) {
    const auto it = std::lower_bound(view.indices.begin(), view.indices.end(), ms.support[j]);
    if (it == view.indices.end() || *it != ms.support[j])
      throw ContractViolation("multiset index " + std::to_string(ms.support[j]) +
                              " is not in the weight support");
    empirical[static_cast<std::size_t>(it - view.indices.begin())] =
        static_cast<double>(ms.counts[j]) / static_cast<double>(ms.budget);
  }

  FidelityReport report;
  report.per_index_deviation.reserve(view.weights.size());
  double sum_sq = 0.0;
  for (std::size_t j = 0; j < view.weights.size(); ++j) {
    const double dev = std::abs(view.weights[j] - empirical[j]);
    report.per_index_deviation.push_back(dev);
    sum_sq += dev * dev;
  }
  report.l2_distance = std::sqrt(sum_sq);
  return report;
}

}  // namespace hullft
