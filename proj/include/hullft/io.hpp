#pragma once

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hullft/errors.hpp"
#include "hullft/geometry.hpp"
#include "hullft/pipeline.hpp"
#include "hullft/schedule.hpp"

namespace hullft {

// Pool files: 20-byte header (magic "HFT1", u32 version = 1, u32 K, u32 d,
// u32 flags) followed by K*d little-endian 32-bit floats in row-major order.
// Ids live in an optional "<path>.ids" sidecar, one per line. Flag bit 0
// asserts unit-normalized rows and is verified on load.
inline constexpr std::uint32_t kPoolFlagUnitNormalized = 1u;
inline constexpr char kPoolMagic[4] = {'H', 'F', 'T', '1'};
inline constexpr std::uint32_t kPoolVersion = 1;

struct PoolReadInfo {
  std::uint32_t flags = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// Writers go through a temp file plus rename so concurrent readers never see
// a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open \"" + tmp.string() + "\" for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw FormatError("failed writing \"" + tmp.string() + "\"");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open \"" + path.string() + "\"");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

}  // namespace detail

inline std::filesystem::path pool_ids_path(const std::filesystem::path& pool_path) {
  return pool_path.string() + ".ids";
}

inline void write_pool(const CandidatePool& pool, const std::filesystem::path& path,
                       std::uint32_t flags = 0, bool with_ids = true) {
  std::string out;
  out.reserve(20 + static_cast<std::size_t>(pool.size()) * static_cast<std::size_t>(pool.dim()) * 4);
  out.append(kPoolMagic, 4);
  detail::put_u32_le(out, kPoolVersion);
  detail::put_u32_le(out, static_cast<std::uint32_t>(pool.size()));
  detail::put_u32_le(out, static_cast<std::uint32_t>(pool.dim()));
  detail::put_u32_le(out, flags);
  for (Eigen::Index i = 0; i < pool.size(); ++i)
    for (Eigen::Index j = 0; j < pool.dim(); ++j)
      detail::put_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(pool.rows()(i, j))));
  detail::write_file_atomic(path, out);

  if (with_ids) {
    std::string ids;
    for (const auto& id : pool.ids()) {
      ids += id;
      ids += '\n';
    }
    detail::write_file_atomic(pool_ids_path(path), ids);
  }
}

inline CandidatePool read_pool(const std::filesystem::path& path, PoolReadInfo* info = nullptr) {
  const std::string raw = detail::read_file(path);
  if (raw.size() < 20) throw FormatError("\"" + path.string() + "\": file shorter than the 20-byte header");
  const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data());
  if (std::string_view(raw.data(), 4) != std::string_view(kPoolMagic, 4))
    throw FormatError("\"" + path.string() + "\": bad magic, expected HFT1");
  const std::uint32_t version = detail::get_u32_le(bytes + 4);
  if (version != kPoolVersion)
    throw FormatError("\"" + path.string() + "\": unsupported version " + std::to_string(version));
  const std::uint32_t k = detail::get_u32_le(bytes + 8);
  const std::uint32_t d = detail::get_u32_le(bytes + 12);
  std::uint32_t flags = detail::get_u32_le(bytes + 16);
  if (k == 0 || d == 0)
    throw FormatError("\"" + path.string() + "\": K and d must both be >= 1");
  const std::uint64_t cells = static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(d);
  if (cells > (std::uint64_t{1} << 32))
    throw FormatError("\"" + path.string() + "\": K*d overflows the supported payload size");
  const std::uint64_t expected = cells * 4;
  const std::uint64_t actual = raw.size() - 20;
  if (actual != expected)
    throw FormatError("\"" + path.string() + "\": truncated payload, expected " +
                      std::to_string(expected) + " bytes, got " + std::to_string(actual));

  RowMatrix rows(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  const unsigned char* payload = bytes + 20;
  for (std::uint64_t cell = 0; cell < cells; ++cell) {
    const float value = std::bit_cast<float>(detail::get_u32_le(payload + cell * 4));
    if (!std::isfinite(value))
      throw FormatError("\"" + path.string() + "\": non-finite value at cell " + std::to_string(cell));
    rows(static_cast<Eigen::Index>(cell / d), static_cast<Eigen::Index>(cell % d)) =
        static_cast<double>(value);
  }

  std::vector<std::string> ids;
  const std::filesystem::path sidecar = pool_ids_path(path);
  if (std::filesystem::exists(sidecar)) {
    std::ifstream in(sidecar);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      ids.push_back(line);
    }
    if (ids.size() != k)
      throw FormatError("\"" + sidecar.string() + "\": has " + std::to_string(ids.size()) +
                        " ids but the pool has " + std::to_string(k) + " rows");
    std::unordered_set<std::string> seen;
    for (const auto& id : ids)
      if (!seen.insert(id).second)
        throw FormatError("\"" + sidecar.string() + "\": duplicate id \"" + id + "\"");
  } else {
    ids = CandidatePool::default_ids(static_cast<Eigen::Index>(k));
  }

  std::vector<std::string> warnings;
  if (flags & kPoolFlagUnitNormalized) {
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      const double norm = rows.row(i).norm();
      if (std::abs(norm - 1.0) > 1e-6) {
        warnings.push_back("row " + std::to_string(i) + " has norm " + std::to_string(norm) +
                           "; clearing the unit-normalized flag");
        flags &= ~kPoolFlagUnitNormalized;
        break;
      }
    }
  }

  if (info) {
    info->flags = flags;
    info->warnings = std::move(warnings);
  }
  return CandidatePool(std::move(rows), std::move(ids));
}

// ---------------------------------------------------------------------------
// Structured text documents. JSON keys serialize in sorted order, so output
// bytes are a pure function of the content.

struct SelectionDocument {
  std::string query_id;
  long long budget = 0;
  std::string selector;
  std::string integerizer;

  struct SupportEntry {
    long long pool_index = 0;
    std::string id;
    double weight = 0.0;
    std::optional<long long> count;
  };
  std::vector<SupportEntry> support;

  double fw_error = 0.0;
  std::optional<double> integer_error;
  std::optional<double> fidelity_l2;
  long long support_size = 0;
  long long iterations = 0;
  std::string stop_reason;
  std::map<std::string, double> stage_seconds;
  std::optional<long long> pca_dim;
  std::optional<double> original_fw_error;
  std::optional<double> original_integer_error;
  bool fractional_only = false;
};

inline SelectionDocument make_selection_document(const SelectionRequest& req,
                                                 const SelectionResult& result,
                                                 const CandidatePool& pool,
                                                 const std::string& query_id) {
  SelectionDocument doc;
  doc.query_id = query_id;
  doc.budget = req.budget;
  doc.selector = to_string(req.selector);
  doc.integerizer = to_string(req.integerizer);
  doc.fractional_only = result.fractional_only_warning;

  if (result.multiset) {
    // Zero-count support points are dropped at serialization.
    const SupportMultiset& ms = *result.multiset;
    for (std::size_t j = 0; j < ms.support.size(); ++j) {
      if (ms.counts[j] == 0) continue;
      doc.support.push_back({static_cast<long long>(ms.support[j]), pool.id(ms.support[j]),
                             result.fractional.weight(ms.support[j]), ms.counts[j]});
    }
  } else {
    for (const auto& [index, weight] : result.fractional.entries())
      doc.support.push_back({static_cast<long long>(index), pool.id(index), weight, std::nullopt});
  }

  const SelectionMetrics& m = result.metrics;
  doc.fw_error = m.fw_error;
  doc.integer_error = m.integer_error;
  doc.fidelity_l2 = m.fidelity_l2;
  doc.support_size = static_cast<long long>(m.support_size);
  doc.iterations = m.iterations;
  doc.stop_reason = to_string(m.stop_reason);
  doc.stage_seconds = m.stage_seconds;
  if (req.pca_dim) doc.pca_dim = static_cast<long long>(*req.pca_dim);
  doc.original_fw_error = m.original_fw_error;
  doc.original_integer_error = m.original_integer_error;
  return doc;
}

inline nlohmann::json to_json(const SelectionDocument& doc) {
  nlohmann::json metrics{{"fw_error", doc.fw_error},
                         {"iterations", doc.iterations},
                         {"stop_reason", doc.stop_reason},
                         {"support_size", doc.support_size},
                         {"stage_seconds", doc.stage_seconds}};
  if (doc.integer_error) metrics["integer_error"] = *doc.integer_error;
  if (doc.fidelity_l2) metrics["fidelity_l2"] = *doc.fidelity_l2;
  if (doc.pca_dim) metrics["pca_dim"] = *doc.pca_dim;
  if (doc.original_fw_error) metrics["original_fw_error"] = *doc.original_fw_error;
  if (doc.original_integer_error) metrics["original_integer_error"] = *doc.original_integer_error;

  nlohmann::json support = nlohmann::json::array();
  for (const auto& entry : doc.support) {
    nlohmann::json e{{"pool_index", entry.pool_index}, {"id", entry.id}, {"weight", entry.weight}};
    if (entry.count) e["count"] = *entry.count;
    support.push_back(std::move(e));
  }

  return nlohmann::json{{"query_id", doc.query_id},   {"budget", doc.budget},
                        {"selector", doc.selector},   {"integerizer", doc.integerizer},
                        {"fractional_only", doc.fractional_only}, {"support", std::move(support)},
                        {"metrics", std::move(metrics)}};
}

inline SelectionDocument parse_selection(const nlohmann::json& j) {
  try {
    SelectionDocument doc;
    doc.query_id = j.at("query_id").get<std::string>();
    doc.budget = j.at("budget").get<long long>();
    doc.selector = j.at("selector").get<std::string>();
    doc.integerizer = j.at("integerizer").get<std::string>();
    doc.fractional_only = j.at("fractional_only").get<bool>();
    for (const auto& e : j.at("support")) {
      SelectionDocument::SupportEntry entry;
      entry.pool_index = e.at("pool_index").get<long long>();
      entry.id = e.at("id").get<std::string>();
      entry.weight = e.at("weight").get<double>();
      if (e.contains("count")) entry.count = e.at("count").get<long long>();
      doc.support.push_back(std::move(entry));
    }
    const auto& m = j.at("metrics");
    doc.fw_error = m.at("fw_error").get<double>();
    doc.iterations = m.at("iterations").get<long long>();
    doc.stop_reason = m.at("stop_reason").get<std::string>();
    doc.support_size = m.at("support_size").get<long long>();
    doc.stage_seconds = m.at("stage_seconds").get<std::map<std::string, double>>();
    if (m.contains("integer_error")) doc.integer_error = m.at("integer_error").get<double>();
    if (m.contains("fidelity_l2")) doc.fidelity_l2 = m.at("fidelity_l2").get<double>();
    if (m.contains("pca_dim")) doc.pca_dim = m.at("pca_dim").get<long long>();
    if (m.contains("original_fw_error")) doc.original_fw_error = m.at("original_fw_error").get<double>();
    if (m.contains("original_integer_error"))
      doc.original_integer_error = m.at("original_integer_error").get<double>();

    if (!doc.fractional_only) {
      long long total = 0;
      for (const auto& entry : doc.support) {
        if (!entry.count)
          throw FormatError("selection entry for id \"" + entry.id + "\" is missing a count");
        total += *entry.count;
      }
      if (total != doc.budget)
        throw FormatError("selection counts sum to " + std::to_string(total) + " but budget is " +
                          std::to_string(doc.budget));
    }
    double weight_sum = 0.0;
    for (const auto& entry : doc.support) weight_sum += entry.weight;
    if (doc.fractional_only && std::abs(weight_sum - 1.0) > 1e-6)
      throw FormatError("serialized weights sum to " + std::to_string(weight_sum));
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed selection file: ") + e.what());
  }
}

inline std::string serialize_selection(const SelectionDocument& doc) {
  return to_json(doc).dump(2) + "\n";
}

inline SelectionDocument read_selection(const std::filesystem::path& path) {
  try {
    return parse_selection(nlohmann::json::parse(detail::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("\"" + path.string() + "\": " + e.what());
  }
}

inline nlohmann::json to_json(const TrainingSchedule& schedule) {
  const ScheduleStats stats = schedule_stats(schedule);
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& step : schedule.steps)
    steps.push_back({{"id", step.example_id}, {"action", to_string(step.action)}});
  return nlohmann::json{
      {"refresh_interval", schedule.refresh_interval},
      {"steps", std::move(steps)},
      {"stats",
       {{"total_steps", stats.total_steps},
        {"fb_passes", stats.fb_passes},
        {"reuse_steps", stats.reuse_steps},
        {"theoretical_speedup", stats.theoretical_speedup}}}};
}

inline std::string serialize_schedule(const TrainingSchedule& schedule) {
  return to_json(schedule).dump(2) + "\n";
}

// Stats are recomputed from the steps and must match the stored block.
inline TrainingSchedule parse_schedule(const nlohmann::json& j) {
  try {
    TrainingSchedule schedule;
    schedule.refresh_interval = j.at("refresh_interval").get<int>();
    if (schedule.refresh_interval < 1) throw FormatError("refresh_interval must be >= 1");
    for (const auto& s : j.at("steps")) {
      const std::string action = s.at("action").get<std::string>();
      if (action != "refresh" && action != "reuse")
        throw FormatError("unknown schedule action \"" + action + "\"");
      schedule.steps.push_back({s.at("id").get<std::string>(),
                                action == "refresh" ? StepAction::refresh : StepAction::reuse});
    }
    const ScheduleStats stats = schedule_stats(schedule);
    const auto& stored = j.at("stats");
    if (stored.at("total_steps").get<long long>() != stats.total_steps ||
        stored.at("fb_passes").get<long long>() != stats.fb_passes ||
        stored.at("reuse_steps").get<long long>() != stats.reuse_steps ||
        stored.at("theoretical_speedup").get<double>() != stats.theoretical_speedup)
      throw FormatError("schedule stats do not match the steps");
    return schedule;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed schedule file: ") + e.what());
  }
}

inline TrainingSchedule read_schedule(const std::filesystem::path& path) {
  try {
    return parse_schedule(nlohmann::json::parse(detail::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("\"" + path.string() + "\": " + e.what());
  }
}

// Targets: one "id v1 v2 ... vd" line per example; blank lines are ignored.
inline std::map<std::string, Eigen::VectorXd> read_targets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open \"" + path.string() + "\"");
  std::map<std::string, Eigen::VectorXd> targets;
  std::string line;
  Eigen::Index dim = -1;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    std::istringstream fields(line);
    std::string id;
    if (!(fields >> id)) continue;
    std::vector<double> values;
    double v = 0.0;
    while (fields >> v) values.push_back(v);
    if (values.empty())
      throw FormatError("\"" + path.string() + "\" line " + std::to_string(line_number) +
                        ": target for \"" + id + "\" has no values");
    if (dim < 0) dim = static_cast<Eigen::Index>(values.size());
    if (static_cast<Eigen::Index>(values.size()) != dim)
      throw FormatError("\"" + path.string() + "\" line " + std::to_string(line_number) +
                        ": expected " + std::to_string(dim) + " values, got " +
                        std::to_string(values.size()));
    if (targets.contains(id))
      throw FormatError("\"" + path.string() + "\": duplicate target id \"" + id + "\"");
    targets[id] = Eigen::Map<Eigen::VectorXd>(values.data(), dim);
  }
  return targets;
}

// Sequence files: one example id per line.
inline std::vector<std::string> read_sequence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open \"" + path.string() + "\"");
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  detail::write_file_atomic(path, content);
}

}  // namespace hullft
