#include <catch2/catch_amalgamated.hpp>

#include "hullft/random.hpp"
#include "hullft/toy_trainer.hpp"

using namespace hullft;

namespace {

ToyModel quadratic_model(Rng& rng, Eigen::Index dim, int targets) {
  ToyModel model;
  model.parameters = rng.normal_vector(dim);
  for (int t = 0; t < targets; ++t) model.targets["t" + std::to_string(t)] = rng.normal_vector(dim);
  return model;
}

std::vector<std::string> expand_schedule(const TrainingSchedule& schedule) {
  std::vector<std::string> ids;
  for (const auto& step : schedule.steps) ids.push_back(step.example_id);
  return ids;
}

}  // namespace

TEST_CASE("zero gradient from a zeroed state leaves parameters unchanged") {
  AdamState state = AdamState::zeroed(3, 0.1);
  Eigen::VectorXd theta = Eigen::VectorXd::Constant(3, 2.5);
  const Eigen::VectorXd before = theta;
  adam_step(state, theta, Eigen::VectorXd::Zero(3));
  CHECK(theta == before);
  CHECK(state.step_count == 1);
}

TEST_CASE("first scalar step matches the bias-corrected formula") {
  AdamState state = AdamState::zeroed(1, 0.1);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(1);
  Eigen::VectorXd gradient(1);
  gradient << 2.0;
  adam_step(state, theta, gradient);
  // Bias correction cancels exactly at t=1, so the update is -lr * g / (|g| + c).
  const double expected = -0.1 * 2.0 / (2.0 + 1e-8);
  CHECK(theta[0] == Catch::Approx(expected).margin(1e-15));
  CHECK(theta[0] == Catch::Approx(-0.09999999950).margin(1e-9));
}

TEST_CASE("adam rejects non-finite gradients with a diagnostic") {
  AdamState state = AdamState::zeroed(1, 0.1);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(1);
  Eigen::VectorXd gradient(1);
  gradient << std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(adam_step(state, theta, gradient), NumericalError);
}

TEST_CASE("adam steps are deterministic") {
  Rng rng(2);
  const Eigen::VectorXd gradient = rng.normal_vector(4);
  auto run = [&] {
    AdamState state = AdamState::zeroed(4, 0.05);
    Eigen::VectorXd theta = Eigen::VectorXd::Ones(4);
    for (int i = 0; i < 10; ++i) adam_step(state, theta, gradient);
    return theta;
  };
  CHECK(run() == run());
}

TEST_CASE("r=1 schedules reproduce the plain loop bit for bit") {
  Rng rng(20260810);
  for (int trial = 0; trial < 20; ++trial) {
    ToyModel model = quadratic_model(rng, 4, 3);
    SupportMultiset ms{{0, 1, 2},
                       {1 + static_cast<long long>(rng.integer(5)),
                        1 + static_cast<long long>(rng.integer(5)),
                        1 + static_cast<long long>(rng.integer(5))},
                       0};
    ms.budget = ms.total();
    const TrainingSchedule schedule = build_reuse_schedule(ms, {"t0", "t1", "t2"}, 1);

    const TrainResult reuse = grad_reuse_train(model, schedule, 0.05);
    const TrainResult plain = train_plain(model, expand_schedule(schedule), 0.05);
    CHECK(reuse.parameters == plain.parameters);
    CHECK(reuse.loss_trace == plain.loss_trace);
    CHECK(reuse.final_loss == plain.final_loss);
    CHECK(reuse.fb_passes == plain.fb_passes);
  }
}

TEST_CASE("single block of four with r=2 refreshes at steps 0 and 2") {
  Rng rng(5);
  ToyModel model = quadratic_model(rng, 3, 1);
  const SupportMultiset ms{{0}, {4}, 4};
  const TrainingSchedule schedule = build_reuse_schedule(ms, {"t0"}, 2);
  const TrainResult result = grad_reuse_train(model, schedule, 0.05);
  CHECK(result.fb_passes == 2);
  CHECK(schedule_stats(schedule).fb_passes == 2);
  REQUIRE(result.loss_trace.size() == 2);

  // Replay by hand: the second refresh must see the parameters after two
  // applications of the first cached gradient.
  const Eigen::VectorXd& target = model.targets.at("t0");
  AdamState state = AdamState::zeroed(3, 0.05);
  Eigen::VectorXd theta = model.parameters;
  const Eigen::VectorXd g0 = theta - target;
  CHECK(result.loss_trace[0] == 0.5 * g0.squaredNorm());
  adam_step(state, theta, g0);
  adam_step(state, theta, g0);
  CHECK(result.loss_trace[1] == 0.5 * (theta - target).squaredNorm());
}

TEST_CASE("composite schedule from counts (4,3,1) trains with five passes") {
  Rng rng(6);
  ToyModel model = quadratic_model(rng, 5, 3);
  const SupportMultiset ms{{0, 1, 2}, {4, 3, 1}, 8};
  const TrainingSchedule schedule = build_reuse_schedule(ms, {"t0", "t1", "t2"}, 2);
  const TrainResult result = grad_reuse_train(model, schedule, 0.05);
  CHECK(result.fb_passes == 5);
  CHECK(std::isfinite(result.final_loss));
}

TEST_CASE("schedules referencing unknown ids are rejected before any step") {
  Rng rng(7);
  ToyModel model = quadratic_model(rng, 2, 1);
  TrainingSchedule schedule;
  schedule.refresh_interval = 1;
  schedule.steps.push_back({"t0", StepAction::refresh});
  schedule.steps.push_back({"missing", StepAction::refresh});
  CHECK_THROWS_AS(grad_reuse_train(model, schedule, 0.05), ContractViolation);
}

TEST_CASE("malformed schedules are rejected") {
  Rng rng(8);
  ToyModel model = quadratic_model(rng, 2, 2);

  SECTION("reuse before any refresh") {
    TrainingSchedule schedule;
    schedule.refresh_interval = 2;
    schedule.steps.push_back({"t0", StepAction::reuse});
    CHECK_THROWS_AS(grad_reuse_train(model, schedule, 0.05), ContractViolation);
  }
  SECTION("reuse crossing an id boundary") {
    TrainingSchedule schedule;
    schedule.refresh_interval = 2;
    schedule.steps.push_back({"t0", StepAction::refresh});
    schedule.steps.push_back({"t1", StepAction::reuse});
    CHECK_THROWS_AS(grad_reuse_train(model, schedule, 0.05), ContractViolation);
  }
  SECTION("cached gradient older than the refresh interval") {
    TrainingSchedule schedule;
    schedule.refresh_interval = 2;
    schedule.steps.push_back({"t0", StepAction::refresh});
    schedule.steps.push_back({"t0", StepAction::reuse});
    schedule.steps.push_back({"t0", StepAction::reuse});
    CHECK_THROWS_AS(grad_reuse_train(model, schedule, 0.05), ContractViolation);
  }
}

TEST_CASE("empty schedules report the initial loss") {
  Rng rng(9);
  ToyModel model = quadratic_model(rng, 2, 2);
  const TrainResult result = grad_reuse_train(model, TrainingSchedule{{}, 2}, 0.05);
  CHECK(result.fb_passes == 0);
  CHECK(result.loss_trace.empty());
  CHECK(result.parameters == model.parameters);
  CHECK(result.final_loss == mean_target_loss(model, model.parameters));
}

TEST_CASE("measured passes equal schedule stats across refresh intervals") {
  Rng rng(20260810);
  for (int trial = 0; trial < 50; ++trial) {
    ToyModel model = quadratic_model(rng, 5, 3);
    SupportMultiset ms{{0, 1, 2}, {0, 0, 0}, 0};
    for (auto& c : ms.counts) c = 1 + static_cast<long long>(rng.integer(8));
    ms.budget = ms.total();
    const int r = 1 + static_cast<int>(rng.integer(4));
    const TrainingSchedule schedule = build_reuse_schedule(ms, {"t0", "t1", "t2"}, r);
    const TrainResult result = grad_reuse_train(model, schedule, 0.05);
    CHECK(result.fb_passes == schedule_stats(schedule).fb_passes);
  }
}

TEST_CASE("r=2 degrades the final loss by at most half over r=1") {
  Rng rng(424242);
  for (int trial = 0; trial < 100; ++trial) {
    ToyModel model = quadratic_model(rng, 5, 3);
    const SimplexWeights split = SimplexWeights::from_dense(rng.simplex(3));
    const SupportMultiset ms = pad_by_weights(split, 20);
    const TrainingSchedule r1 = build_reuse_schedule(ms, {"t0", "t1", "t2"}, 1);
    const TrainingSchedule r2 = build_reuse_schedule(ms, {"t0", "t1", "t2"}, 2);
    const double loss_r1 = grad_reuse_train(model, r1, 0.05).final_loss;
    const double loss_r2 = grad_reuse_train(model, r2, 0.05).final_loss;
    CHECK(loss_r2 <= 1.5 * loss_r1 + 1e-8);
  }
}
