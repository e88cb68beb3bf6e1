#include <chrono>

#include <gtest/gtest.h>

#include "ceropt/experiments.h"
#include "ceropt/io.h"

namespace ceropt {
namespace {

using M = JointMode;

TEST(ChecksTest, DefaultModelPassesEverything) {
  for (const CheckResult& r : run_checks(PlantParams{}, TranscriptionConfig{}))
    EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

TEST(ChecksTest, CorruptedStiffnessFailsEnergyButNotMassMatrix) {
  PlantParams p;
  p.stiffness = {-12.5, -14.5};
  bool pd = false, energy = true;
  for (const CheckResult& r : run_checks(p, TranscriptionConfig{})) {
    if (r.name == "mass_matrix_pd") pd = r.passed;
    if (r.name == "energy_conservation") energy = r.passed;
  }
  EXPECT_TRUE(pd);
  EXPECT_FALSE(energy);
}

TEST(MotionSignatureTest, CountermovementAndOrdering) {
  std::vector<double> t;
  std::vector<StateVector> x;
  for (int k = 0; k <= 100; ++k) {
    t.push_back(0.005 * k);
    StateVector s = StateVector::Zero();
    const double tk = t.back();
    s(kDqIdx) = tk < 0.2 ? -std::sin(M_PI * tk / 0.2) : 3.0 * std::sin(M_PI * (tk - 0.2) / 0.4);
    s(kDqIdx + 1) = 5.0 * tk * tk;
    x.push_back(s);
  }
  const MotionSignature sig = motion_signature(t, x);
  EXPECT_TRUE(sig.countermovement());
  EXPECT_TRUE(sig.proximo_distal());
  EXPECT_NEAR(sig.peak_dq1_time, 0.4, 1e-12);
  EXPECT_NEAR(sig.peak_dq2_time, 0.5, 1e-12);
  // Monotone motion has no countermovement.
  for (auto& s : x) s(kDqIdx) = std::abs(s(kDqIdx));
  EXPECT_FALSE(motion_signature(t, x).countermovement());
}

TEST(CrossValidationTest, BackwardEulerConvergesAtFirstOrder) {
  const PlantParams p;
  ModeSchedule s;
  s.horizon = 0.5;
  s.switch_times = {0.15, 0.3};
  s.patterns = {ClutchPattern::from_modes(M::kSEA, M::kSTG), ClutchPattern::from_modes(M::kSTG, M::kSEA),
                ClutchPattern::from_modes(M::kSEA, M::kSEA)};
  ZeroOrderHold u;
  u.dt = 0.005;
  for (int k = 0; k < 100; ++k) u.values.push_back(ControlVector(3.0 * std::sin(10.0 * k * u.dt), -2.0));
  const Trajectory tr = backward_euler_replay(p, HybridState{}, u, s, 100);
  const CrossValidation cv = cross_validate(p, tr, s);
  EXPECT_LE(cv.max_angle_deviation, 0.05);
  EXPECT_EQ(cv.replay_deviation[0], cv.max_angle_deviation);
  ASSERT_EQ(cv.ratios.size(), 2u);
  for (double r : cv.ratios) {
    EXPECT_GT(r, 1.6);
    EXPECT_LT(r, 2.4);
  }
}

ExperimentConfig smoke_config() {
  ExperimentConfig c;
  c.transcription.steps = 2;
  c.transcription.horizon = 0.01;
  c.guessed.schedule = guessed_schedule(0.01);
  c.optimize.starts = 1;
  c.optimize.min_speed = 0.0;
  c.guessed.starts = 1;
  return c;
}

TEST(OptimizeTest, SmokeScenarioIsFastAndDeterministic) {
  const ExperimentConfig c = smoke_config();
  const auto t0 = std::chrono::steady_clock::now();
  const OptimizeResult a = optimize_free(c);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.0);
  ASSERT_TRUE(a.found);
  EXPECT_EQ(a.trajectory.steps(), 2);
  const OptimizeResult b = optimize_free(c);
  const ArtifactTag tag{config_hash(c), c.seed};
  EXPECT_EQ(trajectory_csv(c.plant, a.trajectory, a.schedule, tag),
            trajectory_csv(c.plant, b.trajectory, b.schedule, tag));
  const TrajectoryTable table = parse_trajectory_csv(trajectory_csv(c.plant, a.trajectory, a.schedule, tag));
  EXPECT_EQ(table.times.size(), 3u);
}

TEST(OptimizeTest, GuessedSmokeUsesTheFixedSchedule) {
  const OptimizeResult r = optimize_guessed(smoke_config());
  ASSERT_TRUE(r.found);
  EXPECT_EQ(r.schedule.patterns.size(), 2u);
  EXPECT_LE(r.result.report.max_defect, 1e-8);
}

TEST(OptimizeTest, RestRolloutSimulatesToConstantState) {
  ZeroOrderHold u;
  u.dt = 0.005;
  u.values.assign(100, ControlVector::Zero());
  const Rollout r = rollout(PlantParams{}, HybridState{}, u, ModeSchedule::constant(ClutchPattern{}, 0.5));
  for (const auto& x : r.states) EXPECT_EQ(x, StateVector::Zero());
}

}  // namespace
}  // namespace ceropt
