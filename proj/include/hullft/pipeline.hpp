#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hullft/caratheodory.hpp"
#include "hullft/errors.hpp"
#include "hullft/frank_wolfe.hpp"
#include "hullft/geometry.hpp"
#include "hullft/integerize.hpp"

namespace hullft {

enum class Selector { fw, fw_no_epsilon, caratheodory };
enum class Integerizer { geometric, pad_by_weights, none };
enum class KnnMetric { inner_product, euclidean };

inline const char* to_string(Selector s) {
  switch (s) {
    case Selector::fw: return "fw";
    case Selector::fw_no_epsilon: return "fw_no_epsilon";
    case Selector::caratheodory: return "caratheodory";
  }
  return "unknown";
}

inline const char* to_string(Integerizer i) {
  switch (i) {
    case Integerizer::geometric: return "geometric";
    case Integerizer::pad_by_weights: return "pad_by_weights";
    case Integerizer::none: return "none";
  }
  return "unknown";
}

struct SelectionRequest {
  EmbeddingVector query;
  long long budget = 1;
  FWConfig fw_config;
  int swap_passes = 2;
  Selector selector = Selector::fw;
  Integerizer integerizer = Integerizer::geometric;
  std::optional<Eigen::Index> pca_dim;
};

struct SelectionMetrics {
  double fw_error = 0.0;
  std::optional<double> integer_error;
  std::optional<double> fidelity_l2;
  std::size_t support_size = 0;
  int iterations = 0;
  FWStop stop_reason = FWStop::tolerance_met;
  std::map<std::string, double> stage_seconds;
  // Present only for PCA-reduced selection, where the main errors live in the
  // reduced space.
  std::optional<double> original_fw_error;
  std::optional<double> original_integer_error;
};

struct SelectionResult {
  std::optional<SupportMultiset> multiset;
  SimplexWeights fractional;
  SelectionMetrics metrics;
  bool fractional_only_warning = false;
};

// Exact brute-force top-K by score: inner product by default, negated squared
// Euclidean distance otherwise. Output is score-descending with ties broken
// by the lower original index; ids carry over.
inline CandidatePool knn_preselect(const CandidatePool& corpus, const EmbeddingVector& q,
                                   Eigen::Index k, KnnMetric metric = KnnMetric::inner_product) {
  if (q.size() != corpus.dim()) throw ContractViolation("query/corpus dimension mismatch");
  if (k < 1) throw ContractViolation("preselection size must be >= 1");

  Eigen::VectorXd scores;
  if (metric == KnnMetric::inner_product) {
    scores = corpus.rows() * q;
  } else {
    scores.resize(corpus.size());
    for (Eigen::Index i = 0; i < corpus.size(); ++i)
      scores[i] = -(corpus.row(i).transpose() - q).squaredNorm();
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(corpus.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  const Eigen::Index kept = std::min(k, corpus.size());
  RowMatrix rows(kept, corpus.dim());
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(kept));
  for (Eigen::Index r = 0; r < kept; ++r) {
    rows.row(r) = corpus.row(order[static_cast<std::size_t>(r)]);
    ids.push_back(corpus.id(order[static_cast<std::size_t>(r)]));
  }
  return CandidatePool(std::move(rows), std::move(ids));
}

namespace detail {

class StageTimer {
 public:
  explicit StageTimer(std::map<std::string, double>& out) : out_(out) {}

  template <typename F>
  auto time(const std::string& stage, F&& f) {
    const auto start = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      record(stage, start);
    } else {
      auto value = f();
      record(stage, start);
      return value;
    }
  }

 private:
  void record(const std::string& stage, std::chrono::steady_clock::time_point start) {
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    out_[stage] += elapsed.count();
    out_["total"] += elapsed.count();
  }

  std::map<std::string, double>& out_;
};

// Dense weights over the pool from a combination defined on a subset of rows.
inline SimplexWeights lift_to_pool(const SimplexWeights& local,
                                   const std::vector<Eigen::Index>& pool_indices,
                                   Eigen::Index pool_size) {
  std::vector<SimplexWeights::Entry> entries;
  entries.reserve(local.entries().size());
  for (const auto& [index, weight] : local.entries())
    entries.push_back({pool_indices[static_cast<std::size_t>(index)], weight});
  return SimplexWeights(std::move(entries), pool_size);
}

inline SimplexWeights run_selector(const SelectionRequest& req, const CandidatePool& pool,
                                   SelectionMetrics& metrics) {
  FWConfig cfg = req.fw_config;
  if (!cfg.support_cap) cfg.support_cap = static_cast<int>(req.budget);

  switch (req.selector) {
    case Selector::fw:
    case Selector::fw_no_epsilon: {
      cfg.forced_unique = req.selector == Selector::fw_no_epsilon;
      FWResult r = frank_wolfe(req.query, pool, cfg);
      metrics.iterations = r.iterations;
      metrics.stop_reason = r.stop_reason;
      return r.weights;
    }
    case Selector::caratheodory: {
      // High-accuracy uncapped solve, then exact reduction of its support.
      FWConfig hi;
      hi.epsilon = 1e-10;
      hi.support_cap = static_cast<int>(pool.size());
      hi.max_iters = 5000;
      hi.gap_tolerance = req.fw_config.gap_tolerance;
      FWResult r = frank_wolfe(req.query, pool, hi);
      metrics.iterations = r.iterations;
      metrics.stop_reason = r.stop_reason;

      const std::vector<Eigen::Index> support = r.weights.support();
      std::vector<EmbeddingVector> points;
      points.reserve(support.size());
      std::vector<SimplexWeights::Entry> local;
      local.reserve(support.size());
      for (std::size_t j = 0; j < support.size(); ++j) {
        points.push_back(pool.row(support[j]).transpose());
        local.push_back({static_cast<Eigen::Index>(j), r.weights.entries()[j].second});
      }
      const SimplexWeights reduced =
          caratheodory_reduce(points, SimplexWeights(std::move(local), static_cast<Eigen::Index>(support.size())));
      return lift_to_pool(reduced, support, pool.size());
    }
  }
  throw ContractViolation("unknown selector");
}

inline SimplexWeights empirical_weights(const SupportMultiset& ms, Eigen::Index dimension) {
  std::vector<SimplexWeights::Entry> entries;
  for (std::size_t j = 0; j < ms.support.size(); ++j)
    if (ms.counts[j] > 0)
      entries.push_back({ms.support[j],
                         static_cast<double>(ms.counts[j]) / static_cast<double>(ms.budget)});
  return SimplexWeights(std::move(entries), dimension);
}

}  // namespace detail

// Runs the configured selector, then the configured integerizer, over a pool
// that is typically the output of knn_preselect.
inline SelectionResult hullft_select(const SelectionRequest& req, const CandidatePool& pool) {
  if (req.budget < 1) throw ContractViolation("budget must be >= 1");
  if (req.swap_passes < 0) throw ContractViolation("swap passes must be >= 0");
  if (req.query.size() != pool.dim()) throw ContractViolation("query/pool dimension mismatch");

  SelectionMetrics metrics;
  detail::StageTimer timer(metrics.stage_seconds);

  SimplexWeights fractional =
      timer.time("select", [&] { return detail::run_selector(req, pool, metrics); });
  metrics.fw_error = reconstruction_error(req.query, pool, fractional);
  metrics.support_size = fractional.support_size();

  SelectionResult result{std::nullopt, std::move(fractional), {}, false};
  if (req.integerizer == Integerizer::none) {
    result.fractional_only_warning = true;
  } else {
    SupportMultiset ms = timer.time("integerize", [&] {
      return req.integerizer == Integerizer::geometric
                 ? integerize(req.query, pool, result.fractional, req.budget, req.swap_passes)
                 : pad_by_weights(result.fractional, req.budget);
    });
    metrics.integer_error = reconstruction_error(
        req.query, pool, detail::empirical_weights(ms, pool.size()));
    metrics.fidelity_l2 = fidelity(result.fractional, ms).l2_distance;
    result.multiset = std::move(ms);
  }

  result.metrics = std::move(metrics);
  return result;
}

// Centering plus the top principal directions of pool rows and query jointly.
struct PcaModel {
  Eigen::VectorXd mean;
  // d x d' orthonormal columns; directions past the data rank are zero.
  Eigen::MatrixXd directions;
};

// Fits on the given rows (callers append the query row). Each direction's
// largest-magnitude entry is made positive so the transform is deterministic.
inline PcaModel fit_pca(const RowMatrix& data, Eigen::Index target_dim) {
  if (target_dim < 1 || target_dim > data.cols())
    throw ContractViolation("pca dimension must be in [1, " + std::to_string(data.cols()) + "]");
  PcaModel model;
  model.mean = data.colwise().mean();
  RowMatrix centered = data.rowwise() - model.mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::Index available = std::min(target_dim, svd.matrixV().cols());
  model.directions = Eigen::MatrixXd::Zero(data.cols(), target_dim);
  model.directions.leftCols(available) = svd.matrixV().leftCols(available);

  for (Eigen::Index c = 0; c < available; ++c) {
    Eigen::Index largest = 0;
    model.directions.col(c).cwiseAbs().maxCoeff(&largest);
    if (model.directions(largest, c) < 0.0) model.directions.col(c) = -model.directions.col(c);
  }
  return model;
}

inline EmbeddingVector pca_transform(const PcaModel& model, const EmbeddingVector& v) {
  return model.directions.transpose() * (v - model.mean);
}

inline CandidatePool pca_transform_pool(const PcaModel& model, const CandidatePool& pool) {
  RowMatrix reduced = (pool.rows().rowwise() - model.mean.transpose()) * model.directions;
  return CandidatePool(std::move(reduced), pool.ids());
}

// Fits PCA on pool plus query, runs the selector and integerizer in the
// reduced space, and reports errors in both spaces. Support indices are
// shared between spaces because the transform preserves row order.
inline SelectionResult pca_select(const SelectionRequest& req, const CandidatePool& pool,
                                  PcaModel* fitted = nullptr) {
  if (!req.pca_dim) throw ContractViolation("pca_select requires pca_dim");
  if (req.query.size() != pool.dim()) throw ContractViolation("query/pool dimension mismatch");

  std::map<std::string, double> pca_seconds;
  detail::StageTimer timer(pca_seconds);
  auto [reduced_query, reduced_pool] = timer.time("pca", [&] {
    RowMatrix data(pool.size() + 1, pool.dim());
    data.topRows(pool.size()) = pool.rows();
    data.row(pool.size()) = req.query.transpose();
    PcaModel model = fit_pca(data, *req.pca_dim);
    auto pair = std::make_pair(pca_transform(model, req.query), pca_transform_pool(model, pool));
    if (fitted) *fitted = std::move(model);
    return pair;
  });

  SelectionRequest reduced_req = req;
  reduced_req.query = reduced_query;
  reduced_req.pca_dim.reset();
  SelectionResult result = hullft_select(reduced_req, reduced_pool);

  for (const auto& [stage, seconds] : pca_seconds)
    if (stage != "total") result.metrics.stage_seconds[stage] += seconds;
  result.metrics.stage_seconds["total"] += pca_seconds.at("total");

  result.metrics.original_fw_error = reconstruction_error(req.query, pool, result.fractional);
  if (result.multiset)
    result.metrics.original_integer_error = reconstruction_error(
        req.query, pool, detail::empirical_weights(*result.multiset, pool.size()));
  return result;
}

}  // namespace hullft
