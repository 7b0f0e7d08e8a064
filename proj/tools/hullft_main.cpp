// Command-line front end: selection, scheduling, toy training, and a small
// selector benchmark over the binary pool format.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hullft/errors.hpp"
#include "hullft/frank_wolfe.hpp"
#include "hullft/geometry.hpp"
#include "hullft/io.hpp"
#include "hullft/pipeline.hpp"
#include "hullft/random.hpp"
#include "hullft/schedule.hpp"
#include "hullft/toy_trainer.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;
constexpr int kExitNumerical = 4;

void emit(const std::optional<std::string>& out_path, const std::string& content) {
  if (out_path)
    hullft::write_text(*out_path, content);
  else
    std::cout << content;
}

hullft::CandidatePool load_pool(const std::string& path) {
  hullft::PoolReadInfo info;
  hullft::CandidatePool pool = hullft::read_pool(path, &info);
  for (const auto& warning : info.warnings) std::cerr << "warning: " << path << ": " << warning << "\n";
  return pool;
}

// Queries travel in the same pool format, as a single-row file.
std::pair<hullft::EmbeddingVector, std::string> load_query(const std::string& path) {
  hullft::CandidatePool q = load_pool(path);
  if (q.size() != 1)
    throw hullft::FormatError("\"" + path + "\": query file must contain exactly one row, got " +
                              std::to_string(q.size()));
  return {q.row(0).transpose(), q.id(0)};
}

struct SelectOptions {
  std::string pool_path;
  std::string corpus_path;
  std::string query_path;
  long long budget = 1;
  long long k_pool = 200;
  std::string knn_metric = "inner-product";
  double epsilon = 1e-5;
  double gap_tolerance = 1e-12;
  std::optional<int> support_cap;
  std::optional<int> max_iters;
  int swap_passes = 2;
  hullft::Selector selector = hullft::Selector::fw;
  hullft::Integerizer integerizer = hullft::Integerizer::geometric;
  std::optional<long long> pca_dim;
  std::optional<std::string> out_path;
};

void run_select(const SelectOptions& opt) {
  auto [query, query_id] = load_query(opt.query_path);

  std::optional<hullft::CandidatePool> pool;
  if (!opt.corpus_path.empty()) {
    const hullft::CandidatePool corpus = load_pool(opt.corpus_path);
    const auto metric = opt.knn_metric == "euclidean" ? hullft::KnnMetric::euclidean
                                                      : hullft::KnnMetric::inner_product;
    pool = hullft::knn_preselect(corpus, query, static_cast<Eigen::Index>(opt.k_pool), metric);
  } else {
    pool = load_pool(opt.pool_path);
  }

  hullft::SelectionRequest req;
  req.query = query;
  req.budget = opt.budget;
  req.fw_config.epsilon = opt.epsilon;
  req.fw_config.gap_tolerance = opt.gap_tolerance;
  req.fw_config.support_cap = opt.support_cap;
  req.fw_config.max_iters = opt.max_iters;
  req.swap_passes = opt.swap_passes;
  req.selector = opt.selector;
  req.integerizer = opt.integerizer;
  if (opt.pca_dim) req.pca_dim = static_cast<Eigen::Index>(*opt.pca_dim);

  const hullft::SelectionResult result =
      req.pca_dim ? hullft::pca_select(req, *pool) : hullft::hullft_select(req, *pool);
  if (result.fractional_only_warning)
    std::cerr << "warning: integerizer is none; emitting fractional weights only\n";

  const hullft::SelectionDocument doc = hullft::make_selection_document(req, result, *pool, query_id);
  emit(opt.out_path, hullft::serialize_selection(doc));
}

struct ScheduleOptions {
  std::string selection_path;
  std::string sequence_path;
  int refresh = 2;
  std::string transform = "none";
  std::string block_order = "count-descending";
  std::optional<std::string> out_path;
};

void run_schedule(const ScheduleOptions& opt) {
  hullft::TrainingSchedule schedule;
  if (!opt.selection_path.empty()) {
    const hullft::SelectionDocument doc = hullft::read_selection(opt.selection_path);
    if (doc.fractional_only)
      throw hullft::ContractViolation("selection file carries fractional weights only; integerize first");
    hullft::SupportMultiset ms;
    std::vector<std::string> ids;
    for (const auto& entry : doc.support) {
      ms.support.push_back(static_cast<Eigen::Index>(entry.pool_index));
      ms.counts.push_back(entry.count.value());
      ids.push_back(entry.id);
    }
    ms.budget = doc.budget;
    const auto order = opt.block_order == "support-order" ? hullft::BlockOrder::support_order
                                                          : hullft::BlockOrder::count_descending;
    schedule = hullft::build_reuse_schedule(ms, ids, opt.refresh, order);
  } else {
    const std::vector<std::string> sequence = hullft::read_sequence(opt.sequence_path);
    hullft::GroupedSequence grouped;
    if (opt.transform == "global-dedup") {
      grouped = hullft::global_dedup(sequence);
    } else if (opt.transform == "consecutive") {
      grouped = hullft::consecutive_group(sequence);
    } else {
      // No transform: every occurrence trains as its own block, so each step
      // refreshes and no gradient is reused.
      for (const auto& id : sequence) grouped.blocks.push_back({id, 1});
    }
    schedule = hullft::schedule_from_groups(grouped, opt.refresh);
  }
  emit(opt.out_path, hullft::serialize_schedule(schedule));
}

struct ToytrainOptions {
  std::string schedule_path;
  std::string targets_path;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  double init_scale = 1.0;
  std::optional<std::string> out_path;
};

void run_toytrain(const ToytrainOptions& opt) {
  const hullft::TrainingSchedule schedule = hullft::read_schedule(opt.schedule_path);
  hullft::ToyModel model;
  model.targets = hullft::read_targets(opt.targets_path);
  for (const auto& step : schedule.steps)
    if (!model.targets.contains(step.example_id))
      throw hullft::FormatError("no target for scheduled id \"" + step.example_id + "\"");

  const Eigen::Index dim = model.targets.empty() ? 1 : model.targets.begin()->second.size();
  hullft::Rng rng(opt.seed);
  model.parameters = opt.init_scale * rng.normal_vector(dim);

  const hullft::TrainResult result = hullft::grad_reuse_train(model, schedule, opt.learning_rate);
  nlohmann::json j{{"total_steps", static_cast<long long>(schedule.steps.size())},
                   {"fb_passes", result.fb_passes},
                   {"final_loss", result.final_loss},
                   {"loss_trace", result.loss_trace}};
  emit(opt.out_path, j.dump(2) + "\n");
}

struct BenchOptions {
  std::string pool_path;
  std::string query_path;
  long long synth_k = 200;
  long long synth_d = 768;
  std::uint64_t seed = 0;
  long long n_min = 1;
  long long n_max = 50;
  long long n_step = 1;
  std::vector<std::string> selectors{"fw", "caratheodory"};
  std::vector<std::string> integerizers{"geometric"};
  int swap_passes = 2;
  double epsilon = 1e-5;
  std::optional<std::string> out_path;
};

hullft::Selector parse_selector(const std::string& name) {
  if (name == "fw") return hullft::Selector::fw;
  if (name == "fw-no-epsilon" || name == "fw_no_epsilon") return hullft::Selector::fw_no_epsilon;
  if (name == "caratheodory") return hullft::Selector::caratheodory;
  throw hullft::ContractViolation("unknown selector \"" + name + "\"");
}

hullft::Integerizer parse_integerizer(const std::string& name) {
  if (name == "geometric") return hullft::Integerizer::geometric;
  if (name == "pad-by-weights" || name == "pad_by_weights") return hullft::Integerizer::pad_by_weights;
  if (name == "none") return hullft::Integerizer::none;
  throw hullft::ContractViolation("unknown integerizer \"" + name + "\"");
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

void run_bench(const BenchOptions& opt) {
  std::optional<hullft::CandidatePool> pool;
  std::optional<hullft::EmbeddingVector> query;
  hullft::Rng rng(opt.seed);

  if (!opt.pool_path.empty()) {
    pool = load_pool(opt.pool_path);
  } else {
    hullft::RowMatrix rows(opt.synth_k, opt.synth_d);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      Eigen::VectorXd row = rng.normal_vector(opt.synth_d);
      rows.row(i) = row.transpose() / row.norm();
    }
    pool = hullft::CandidatePool(std::move(rows));
  }
  if (!opt.query_path.empty()) {
    query = load_query(opt.query_path).first;
  } else {
    // Synthetic query inside the hull keeps every selector busy.
    const Eigen::VectorXd weights = rng.simplex(pool->size());
    query = pool->rows().transpose() * weights;
  }

  std::ostringstream csv;
  csv << "selector,integerizer,budget,pool_size,dim,support_size,iterations,stop_reason,"
         "fw_error,integer_error,fidelity_l2,select_seconds,integerize_seconds,total_seconds\n";
  for (const auto& selector_name : opt.selectors) {
    for (const auto& integerizer_name : opt.integerizers) {
      for (long long n = opt.n_min; n <= opt.n_max; n += opt.n_step) {
        hullft::SelectionRequest req;
        req.query = *query;
        req.budget = n;
        req.fw_config.epsilon = opt.epsilon;
        req.swap_passes = opt.swap_passes;
        req.selector = parse_selector(selector_name);
        req.integerizer = parse_integerizer(integerizer_name);
        const hullft::SelectionResult result = hullft::hullft_select(req, *pool);
        const auto& m = result.metrics;
        const auto stage = [&](const char* name) {
          const auto it = m.stage_seconds.find(name);
          return it == m.stage_seconds.end() ? 0.0 : it->second;
        };
        csv << selector_name << ',' << integerizer_name << ',' << n << ',' << pool->size() << ','
            << pool->dim() << ',' << m.support_size << ',' << m.iterations << ','
            << hullft::to_string(m.stop_reason) << ',' << format_double(m.fw_error) << ','
            << (m.integer_error ? format_double(*m.integer_error) : "") << ','
            << (m.fidelity_l2 ? format_double(*m.fidelity_l2) : "") << ','
            << format_double(stage("select")) << ',' << format_double(stage("integerize")) << ','
            << format_double(stage("total")) << '\n';
      }
    }
  }
  emit(opt.out_path, csv.str());
}

struct PackOptions {
  std::string input_path;
  std::string out_path;
  std::string ids_path;
  bool normalize = false;
};

void run_pack(const PackOptions& opt) {
  std::ifstream in(opt.input_path);
  if (!in) throw hullft::FormatError("cannot open \"" + opt.input_path + "\"");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::vector<double> row;
    double v = 0.0;
    while (fields >> v) row.push_back(v);
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw hullft::FormatError("\"" + opt.input_path + "\": ragged row with " +
                                std::to_string(row.size()) + " values");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw hullft::FormatError("\"" + opt.input_path + "\": no rows");

  hullft::RowMatrix matrix(static_cast<Eigen::Index>(rows.size()),
                           static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];

  std::vector<std::string> ids;
  if (!opt.ids_path.empty()) {
    ids = hullft::read_sequence(opt.ids_path);
    if (ids.size() != rows.size())
      throw hullft::FormatError("\"" + opt.ids_path + "\": id count does not match row count");
  } else {
    ids = hullft::CandidatePool::default_ids(static_cast<Eigen::Index>(rows.size()));
  }

  hullft::CandidatePool pool(std::move(matrix), std::move(ids));
  std::uint32_t flags = 0;
  if (opt.normalize) {
    pool = hullft::normalize_rows(pool);
    flags |= hullft::kPoolFlagUnitNormalized;
  }
  hullft::write_pool(pool, opt.out_path, flags);
}

void apply_thread_cap() {
  if (const char* env = std::getenv("HULLFT_THREADS")) {
    char* end = nullptr;
    const long threads = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || threads < 1) {
      std::cerr << "warning: ignoring invalid HULLFT_THREADS value \"" << env << "\"\n";
      return;
    }
    Eigen::setNbThreads(static_cast<int>(threads));
  }
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();

  CLI::App app{"HullFT selection, scheduling, and gradient-reuse toy training"};
  app.require_subcommand(1);

  const std::map<std::string, hullft::Selector> selector_names{
      {"fw", hullft::Selector::fw},
      {"fw-no-epsilon", hullft::Selector::fw_no_epsilon},
      {"fw_no_epsilon", hullft::Selector::fw_no_epsilon},
      {"caratheodory", hullft::Selector::caratheodory}};
  const std::map<std::string, hullft::Integerizer> integerizer_names{
      {"geometric", hullft::Integerizer::geometric},
      {"pad-by-weights", hullft::Integerizer::pad_by_weights},
      {"pad_by_weights", hullft::Integerizer::pad_by_weights},
      {"none", hullft::Integerizer::none}};

  SelectOptions select_opt;
  auto* select = app.add_subcommand("select", "Select a training multiset for a query");
  auto* pool_opt = select->add_option("--pool", select_opt.pool_path, "Candidate pool file");
  auto* corpus_opt =
      select->add_option("--corpus", select_opt.corpus_path,
                         "Corpus pool file; enables nearest-neighbor preselection of --k-pool candidates");
  pool_opt->excludes(corpus_opt);
  select->add_option("--query", select_opt.query_path, "Query file (single-row pool file)")->required();
  select->add_option("--budget", select_opt.budget, "Training multiset size N")->required();
  select->add_option("--k-pool", select_opt.k_pool, "Preselection pool size")->capture_default_str();
  select->add_option("--knn-metric", select_opt.knn_metric, "Preselection score")->capture_default_str()
      ->check(CLI::IsMember({"inner-product", "euclidean"}));
  select->add_option("--epsilon", select_opt.epsilon, "Squared-error stopping tolerance")->capture_default_str();
  select->add_option("--gap-tolerance", select_opt.gap_tolerance, "Stationarity gap tolerance")->capture_default_str();
  select->add_option("--support-cap", select_opt.support_cap, "Support size cap (default: budget)");
  select->add_option("--max-iters", select_opt.max_iters, "Iteration bound (default: 10x cap)");
  select->add_option("--swap-passes", select_opt.swap_passes, "Refinement passes")->capture_default_str();
  select->add_option("--selector", select_opt.selector, "Selection algorithm")
      ->transform(CLI::CheckedTransformer(selector_names))
      ->default_str("fw");
  select->add_option("--integerizer", select_opt.integerizer, "Weight integerization")
      ->transform(CLI::CheckedTransformer(integerizer_names))
      ->default_str("geometric");
  select->add_option("--pca-dim", select_opt.pca_dim, "Run selection in a PCA-reduced space");
  select->add_option("--out", select_opt.out_path, "Output path (default: stdout)");

  ScheduleOptions schedule_opt;
  auto* schedule = app.add_subcommand("schedule", "Build a gradient-reuse training schedule");
  auto* selection_opt =
      schedule->add_option("--selection", schedule_opt.selection_path, "Selection file input");
  auto* sequence_opt =
      schedule->add_option("--sequence", schedule_opt.sequence_path, "Plain id-per-line sequence input");
  selection_opt->excludes(sequence_opt);
  schedule->add_option("--refresh", schedule_opt.refresh, "Refresh interval r")->capture_default_str()
      ->check(CLI::PositiveNumber);
  schedule->add_option("--transform", schedule_opt.transform,
                       "Sequence grouping: none schedules each occurrence alone")->capture_default_str()
      ->check(CLI::IsMember({"none", "global-dedup", "consecutive"}));
  schedule->add_option("--block-order", schedule_opt.block_order, "Block order for selections")->capture_default_str()
      ->check(CLI::IsMember({"count-descending", "support-order"}));
  schedule->add_option("--out", schedule_opt.out_path, "Output path (default: stdout)");

  ToytrainOptions toytrain_opt;
  auto* toytrain = app.add_subcommand("toytrain", "Run the toy quadratic trainer over a schedule");
  toytrain->add_option("--schedule", toytrain_opt.schedule_path, "Schedule file")->required();
  toytrain->add_option("--targets", toytrain_opt.targets_path, "Targets file (id then values per line)")
      ->required();
  toytrain->add_option("--lr", toytrain_opt.learning_rate, "Adam learning rate")->capture_default_str();
  toytrain->add_option("--seed", toytrain_opt.seed, "Seed for the initial parameters")->capture_default_str();
  toytrain->add_option("--init-scale", toytrain_opt.init_scale,
                       "Scale of the random initial parameters (0 starts at zero)")->capture_default_str();
  toytrain->add_option("--out", toytrain_opt.out_path, "Output path (default: stdout)");

  BenchOptions bench_opt;
  auto* bench = app.add_subcommand("bench", "Time selectors and integerizers across budgets");
  bench->add_option("--pool", bench_opt.pool_path, "Pool file (default: synthetic)");
  bench->add_option("--query", bench_opt.query_path, "Query file (default: synthetic in-hull query)");
  bench->add_option("--synth-k", bench_opt.synth_k, "Synthetic pool size")->capture_default_str();
  bench->add_option("--synth-d", bench_opt.synth_d, "Synthetic pool dimension")->capture_default_str();
  bench->add_option("--seed", bench_opt.seed, "Seed for synthetic data")->capture_default_str();
  bench->add_option("--n-min", bench_opt.n_min, "Smallest budget")->capture_default_str();
  bench->add_option("--n-max", bench_opt.n_max, "Largest budget")->capture_default_str();
  bench->add_option("--n-step", bench_opt.n_step, "Budget stride")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--selectors", bench_opt.selectors, "Selectors to time")->delimiter(',');
  bench->add_option("--integerizers", bench_opt.integerizers, "Integerizers to time")->delimiter(',');
  bench->add_option("--swap-passes", bench_opt.swap_passes, "Refinement passes")->capture_default_str();
  bench->add_option("--epsilon", bench_opt.epsilon, "Stopping tolerance")->capture_default_str();
  bench->add_option("--out", bench_opt.out_path, "Output path (default: stdout)");

  PackOptions pack_opt;
  auto* pack = app.add_subcommand("pack", "Convert a text matrix into a pool file");
  pack->add_option("--input", pack_opt.input_path, "Whitespace-separated matrix, one row per line")
      ->required();
  pack->add_option("--out", pack_opt.out_path, "Pool file to write")->required();
  pack->add_option("--ids", pack_opt.ids_path, "Id file, one per row");
  pack->add_flag("--normalize", pack_opt.normalize, "Normalize rows and set the unit-norm flag");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*select) {
      if (select_opt.pool_path.empty() && select_opt.corpus_path.empty())
        throw hullft::ContractViolation("select requires --pool or --corpus");
      run_select(select_opt);
    } else if (*schedule) {
      if (schedule_opt.selection_path.empty() && schedule_opt.sequence_path.empty())
        throw hullft::ContractViolation("schedule requires --selection or --sequence");
      run_schedule(schedule_opt);
    } else if (*toytrain) {
      run_toytrain(toytrain_opt);
    } else if (*bench) {
      run_bench(bench_opt);
    } else if (*pack) {
      run_pack(pack_opt);
    }
  } catch (const hullft::ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const hullft::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const hullft::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
