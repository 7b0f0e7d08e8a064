#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hullft/errors.hpp"
#include "hullft/integerize.hpp"

namespace hullft {

enum class StepAction { refresh, reuse };

inline const char* to_string(StepAction a) { return a == StepAction::refresh ? "refresh" : "reuse"; }

struct ScheduleStep {
  std::string example_id;
  StepAction action;

  friend bool operator==(const ScheduleStep&, const ScheduleStep&) = default;
};

// Ordered training steps. Within every contiguous block the step at offset t
// refreshes iff t mod refresh_interval == 0.
struct TrainingSchedule {
  std::vector<ScheduleStep> steps;
  int refresh_interval = 1;
};

struct ScheduleStats {
  long long total_steps = 0;
  long long fb_passes = 0;
  long long reuse_steps = 0;
  double theoretical_speedup = 1.0;
};

struct GroupedBlock {
  std::string example_id;
  long long run_length = 0;

  friend bool operator==(const GroupedBlock&, const GroupedBlock&) = default;
};

// Interchange type for externally produced example sequences.
struct GroupedSequence {
  std::vector<GroupedBlock> blocks;
};

enum class BlockOrder { count_descending, support_order };

inline ScheduleStats schedule_stats(const TrainingSchedule& schedule) {
  ScheduleStats stats;
  stats.total_steps = static_cast<long long>(schedule.steps.size());
  for (const auto& step : schedule.steps)
    (step.action == StepAction::refresh ? stats.fb_passes : stats.reuse_steps) += 1;
  stats.theoretical_speedup =
      stats.fb_passes > 0 ? static_cast<double>(stats.total_steps) / static_cast<double>(stats.fb_passes)
                          : 1.0;
  return stats;
}

namespace detail {

inline void append_block(TrainingSchedule& schedule, const std::string& id, long long length, int r) {
  for (long long t = 0; t < length; ++t)
    schedule.steps.push_back({id, t % r == 0 ? StepAction::refresh : StepAction::reuse});
}

}  // namespace detail

// One contiguous block per support point with a positive count, refresh at
// offsets 0, r, 2r, ... in each block. count_descending front-loads the
// highest-count blocks; ties keep support order.
inline TrainingSchedule build_reuse_schedule(const SupportMultiset& ms,
                                             const std::vector<std::string>& ids, int refresh_interval,
                                             BlockOrder order = BlockOrder::count_descending) {
  if (refresh_interval < 1) throw ContractViolation("refresh interval must be >= 1");
  if (ids.size() != ms.support.size())
    throw ContractViolation("expected one id per support entry");

  std::vector<std::size_t> positions(ms.support.size());
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  if (order == BlockOrder::count_descending)
    std::stable_sort(positions.begin(), positions.end(),
                     [&](std::size_t a, std::size_t b) { return ms.counts[a] > ms.counts[b]; });

  TrainingSchedule schedule;
  schedule.refresh_interval = refresh_interval;
  for (std::size_t pos : positions)
    if (ms.counts[pos] > 0) detail::append_block(schedule, ids[pos], ms.counts[pos], refresh_interval);
  return schedule;
}

inline TrainingSchedule build_reuse_schedule(const SupportMultiset& ms, int refresh_interval,
                                             BlockOrder order = BlockOrder::count_descending) {
  std::vector<std::string> ids;
  ids.reserve(ms.support.size());
  for (Eigen::Index index : ms.support) ids.push_back(std::to_string(index));
  return build_reuse_schedule(ms, ids, refresh_interval, order);
}

// One block per unique id holding its total occurrence count, ordered by
// first occurrence.
inline GroupedSequence global_dedup(std::span<const std::string> sequence) {
  GroupedSequence grouped;
  std::unordered_map<std::string, std::size_t> block_of;
  for (const auto& id : sequence) {
    auto [it, inserted] = block_of.try_emplace(id, grouped.blocks.size());
    if (inserted)
      grouped.blocks.push_back({id, 1});
    else
      grouped.blocks[it->second].run_length += 1;
  }
  return grouped;
}

// Run-length encoding; expanding the blocks reproduces the sequence exactly.
inline GroupedSequence consecutive_group(std::span<const std::string> sequence) {
  GroupedSequence grouped;
  for (const auto& id : sequence) {
    if (!grouped.blocks.empty() && grouped.blocks.back().example_id == id)
      grouped.blocks.back().run_length += 1;
    else
      grouped.blocks.push_back({id, 1});
  }
  return grouped;
}

inline std::vector<std::string> expand(const GroupedSequence& grouped) {
  std::vector<std::string> sequence;
  for (const auto& block : grouped.blocks)
    for (long long t = 0; t < block.run_length; ++t) sequence.push_back(block.example_id);
  return sequence;
}

// Applies the per-block refresh rule to blocks in the given order, so
// fb_passes comes out as the sum over blocks of ceil(run_length / r).
inline TrainingSchedule schedule_from_groups(const GroupedSequence& grouped, int refresh_interval) {
  if (refresh_interval < 1) throw ContractViolation("refresh interval must be >= 1");
  TrainingSchedule schedule;
  schedule.refresh_interval = refresh_interval;
  for (const auto& block : grouped.blocks) {
    if (block.run_length < 1) throw ContractViolation("block run lengths must be >= 1");
    detail::append_block(schedule, block.example_id, block.run_length, refresh_interval);
  }
  return schedule;
}

}  // namespace hullft
