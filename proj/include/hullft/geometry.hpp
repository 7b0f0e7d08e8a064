#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hullft/errors.hpp"

namespace hullft {

// Embedding coordinates are unitless reals; all accumulation happens in double
// regardless of how vectors were stored on disk.
using EmbeddingVector = Eigen::VectorXd;

// Candidate matrices are row-major contiguous: the dominant kernel is
// residual-times-pool products over all K rows.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kSimplexSumTolerance = 1e-9;

// K candidate embeddings of equal dimension with stable, unique ids.
// Immutable after construction; safe to share across concurrent selections.
class CandidatePool {
 public:
  CandidatePool(RowMatrix vectors, std::vector<std::string> ids)
      : rows_(std::move(vectors)), ids_(std::move(ids)) {
    validate();
  }

  // Ids default to the decimal row index.
  explicit CandidatePool(RowMatrix vectors) : rows_(std::move(vectors)), ids_(default_ids(rows_.rows())) {
    validate();
  }

  static std::vector<std::string> default_ids(Eigen::Index k) {
    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) ids.push_back(std::to_string(i));
    return ids;
  }

  Eigen::Index size() const { return rows_.rows(); }
  Eigen::Index dim() const { return rows_.cols(); }
  const RowMatrix& rows() const { return rows_; }
  auto row(Eigen::Index i) const { return rows_.row(i); }
  const std::string& id(Eigen::Index i) const { return ids_[static_cast<std::size_t>(i)]; }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  void validate() const {
    if (rows_.rows() < 1) throw ContractViolation("candidate pool must contain at least one vector");
    if (rows_.cols() < 1) throw ContractViolation("candidate vectors must have dimension >= 1");
    if (!rows_.allFinite()) throw ContractViolation("candidate pool contains non-finite entries");
    if (static_cast<Eigen::Index>(ids_.size()) != rows_.rows())
      throw ContractViolation("pool has " + std::to_string(rows_.rows()) + " vectors but " +
                              std::to_string(ids_.size()) + " ids");
    std::unordered_set<std::string> seen;
    for (const auto& id : ids_) {
      if (!seen.insert(id).second) throw ContractViolation("duplicate candidate id \"" + id + "\"");
    }
  }

  RowMatrix rows_;
  std::vector<std::string> ids_;
};

// Sparse point of the K-simplex: strictly positive weights on distinct indices
// in [0, K), summing to 1 within kSimplexSumTolerance. Entries are kept sorted
// by index so iteration order is deterministic.
class SimplexWeights {
 public:
  using Entry = std::pair<Eigen::Index, double>;

  SimplexWeights(std::vector<Entry> entries, Eigen::Index dimension)
      : entries_(std::move(entries)), dimension_(dimension) {
    if (dimension_ < 1) throw ContractViolation("simplex dimension must be >= 1");
    if (entries_.empty()) throw ContractViolation("simplex weights must have at least one entry");
    std::sort(entries_.begin(), entries_.end(),
              [](const Entry& a, const Entry& b) { return a.first < b.first; });
    double sum = 0.0;
    Eigen::Index prev = -1;
    for (const auto& [index, weight] : entries_) {
      if (index < 0 || index >= dimension_)
        throw ContractViolation("weight index " + std::to_string(index) + " outside [0, " +
                                std::to_string(dimension_) + ")");
      if (index == prev) throw ContractViolation("duplicate weight index " + std::to_string(index));
      if (!(weight > 0.0) || !std::isfinite(weight))
        throw ContractViolation("weights must be finite and strictly positive");
      sum += weight;
      prev = index;
    }
    if (std::abs(sum - 1.0) > kSimplexSumTolerance)
      throw ContractViolation("weights sum to " + std::to_string(sum) + ", expected 1");
  }

  static SimplexWeights unit(Eigen::Index index, Eigen::Index dimension) {
    return SimplexWeights({{index, 1.0}}, dimension);
  }

  // Keeps strictly positive coordinates of a dense vector.
  static SimplexWeights from_dense(const Eigen::VectorXd& w) {
    std::vector<Entry> entries;
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (w[i] > 0.0) entries.push_back({i, w[i]});
    return SimplexWeights(std::move(entries), w.size());
  }

  Eigen::Index dimension() const { return dimension_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t support_size() const { return entries_.size(); }

  // 0 for indices outside the support.
  double weight(Eigen::Index index) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                               [](const Entry& e, Eigen::Index i) { return e.first < i; });
    return (it != entries_.end() && it->first == index) ? it->second : 0.0;
  }

  double sum() const {
    double s = 0.0;
    for (const auto& e : entries_) s += e.second;
    return s;
  }

  Eigen::VectorXd to_dense() const {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(dimension_);
    for (const auto& [index, weight] : entries_) w[index] = weight;
    return w;
  }

  std::vector<Eigen::Index> support() const {
    std::vector<Eigen::Index> s;
    s.reserve(entries_.size());
    for (const auto& e : entries_) s.push_back(e.first);
    return s;
  }

  friend bool operator==(const SimplexWeights& a, const SimplexWeights& b) {
    return a.dimension_ == b.dimension_ && a.entries_ == b.entries_;
  }

 private:
  std::vector<Entry> entries_;
  Eigen::Index dimension_;
};

// Pw for sparse w, accumulated in index order.
inline EmbeddingVector convex_combination(const CandidatePool& pool, const SimplexWeights& w) {
  if (w.dimension() != pool.size())
    throw ContractViolation("weights are over " + std::to_string(w.dimension()) +
                            " indices but pool has " + std::to_string(pool.size()));
  EmbeddingVector acc = EmbeddingVector::Zero(pool.dim());
  for (const auto& [index, weight] : w.entries()) acc.noalias() += weight * pool.row(index).transpose();
  return acc;
}

// Squared distance between the query and the weighted combination of the pool.
inline double reconstruction_error(const EmbeddingVector& q, const CandidatePool& pool,
                                   const SimplexWeights& w) {
  if (q.size() != pool.dim())
    throw ContractViolation("query dimension " + std::to_string(q.size()) +
                            " does not match pool dimension " + std::to_string(pool.dim()));
  return (q - convex_combination(pool, w)).squaredNorm();
}

// Scales every row to unit Euclidean norm, preserving ids. Rejects exact zero
// rows, naming the offending index.
inline CandidatePool normalize_rows(const CandidatePool& pool) {
  RowMatrix scaled = pool.rows();
  for (Eigen::Index i = 0; i < scaled.rows(); ++i) {
    const double norm = scaled.row(i).norm();
    if (norm == 0.0)
      throw ContractViolation("cannot normalize zero vector at pool index " + std::to_string(i));
    scaled.row(i) /= norm;
  }
  return CandidatePool(std::move(scaled), pool.ids());
}

}  // namespace hullft
