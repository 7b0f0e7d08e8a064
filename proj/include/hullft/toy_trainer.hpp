#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hullft/errors.hpp"
#include "hullft/schedule.hpp"

namespace hullft {

// Least-squares toy model: per-example loss 0.5 * ||theta - target||^2 with
// the analytic gradient theta - target. Cheap exact gradients keep the focus
// on the reuse mechanics.
struct ToyModel {
  Eigen::VectorXd parameters;
  std::map<std::string, Eigen::VectorXd> targets;
};

inline double toy_loss(const Eigen::VectorXd& parameters, const Eigen::VectorXd& target) {
  return 0.5 * (parameters - target).squaredNorm();
}

// Mean per-example loss over every target in the model.
inline double mean_target_loss(const ToyModel& model, const Eigen::VectorXd& parameters) {
  if (model.targets.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [id, target] : model.targets) sum += toy_loss(parameters, target);
  return sum / static_cast<double>(model.targets.size());
}

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  long long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double stability = 1e-8;
  double learning_rate = 0.05;

  static AdamState zeroed(Eigen::Index dim, double learning_rate) {
    AdamState state;
    state.first_moment = Eigen::VectorXd::Zero(dim);
    state.second_moment = Eigen::VectorXd::Zero(dim);
    state.learning_rate = learning_rate;
    return state;
  }
};

// Standard bias-corrected Adam update, applied in place.
inline void adam_step(AdamState& state, Eigen::VectorXd& parameters, const Eigen::VectorXd& gradient) {
  if (gradient.size() != parameters.size() || state.first_moment.size() != parameters.size())
    throw ContractViolation("gradient/parameter shape mismatch");
  if (!gradient.allFinite())
    throw NumericalError("non-finite gradient at step " + std::to_string(state.step_count + 1));
  state.step_count += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * gradient;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * gradient.cwiseProduct(gradient);
  const double first_correction = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double second_correction = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  const Eigen::VectorXd first_hat = state.first_moment / first_correction;
  const Eigen::VectorXd second_hat = state.second_moment / second_correction;
  parameters -=
      state.learning_rate *
      (first_hat.array() / (second_hat.array().sqrt() + state.stability)).matrix();
}

struct TrainResult {
  Eigen::VectorXd parameters;
  // Loss recorded at every forward-backward evaluation.
  std::vector<double> loss_trace;
  long long fb_passes = 0;
  // Mean loss over all model targets at the final parameters.
  double final_loss = 0.0;
};

// Executes a schedule with gradient caching: refresh steps evaluate the
// gradient (one forward-backward pass), reuse steps apply the cached value
// unchanged. One Adam state persists across all steps and blocks, and its
// step counter advances on every applied update.
inline TrainResult grad_reuse_train(const ToyModel& model, const TrainingSchedule& schedule,
                                    double learning_rate) {
  for (const auto& step : schedule.steps)
    if (!model.targets.contains(step.example_id))
      throw ContractViolation("schedule references id \"" + step.example_id +
                              "\" with no target in the model");

  TrainResult result;
  result.parameters = model.parameters;
  AdamState state = AdamState::zeroed(model.parameters.size(), learning_rate);

  Eigen::VectorXd cached_gradient;
  std::string cached_id;
  int cache_age = 0;

  for (const auto& step : schedule.steps) {
    if (step.action == StepAction::refresh) {
      const Eigen::VectorXd& target = model.targets.at(step.example_id);
      cached_gradient = result.parameters - target;
      cached_id = step.example_id;
      cache_age = 0;
      result.fb_passes += 1;
      result.loss_trace.push_back(0.5 * cached_gradient.squaredNorm());
    } else {
      if (cached_id.empty())
        throw ContractViolation("schedule starts a block with a reuse step");
      if (step.example_id != cached_id)
        throw ContractViolation("reuse step for id \"" + step.example_id +
                                "\" but the cached gradient is for \"" + cached_id + "\"");
      if (cache_age >= schedule.refresh_interval)
        throw ContractViolation("cached gradient older than the refresh interval");
    }
    adam_step(state, result.parameters, cached_gradient);
    cache_age += 1;
  }

  result.final_loss = mean_target_loss(model, result.parameters);
  return result;
}

// Reference loop that evaluates the gradient at every step. A schedule with
// refresh_interval 1 must reproduce this trajectory bit for bit.
inline TrainResult train_plain(const ToyModel& model, std::span<const std::string> sequence,
                               double learning_rate) {
  for (const auto& id : sequence)
    if (!model.targets.contains(id))
      throw ContractViolation("sequence references id \"" + id + "\" with no target in the model");

  TrainResult result;
  result.parameters = model.parameters;
  AdamState state = AdamState::zeroed(model.parameters.size(), learning_rate);

  for (const auto& id : sequence) {
    const Eigen::VectorXd& target = model.targets.at(id);
    const Eigen::VectorXd gradient = result.parameters - target;
    result.fb_passes += 1;
    result.loss_trace.push_back(0.5 * gradient.squaredNorm());
    adam_step(state, result.parameters, gradient);
  }

  result.final_loss = mean_target_loss(model, result.parameters);
  return result;
}

}  // namespace hullft
