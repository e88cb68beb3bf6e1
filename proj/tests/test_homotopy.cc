#include <gtest/gtest.h>

#include "ceropt/homotopy.h"
#include "ceropt/transcription.h"

namespace ceropt {
namespace {

TranscriptionConfig short_config(int steps) {
  TranscriptionConfig c;
  c.steps = steps;
  c.horizon = 0.005 * steps;
  return c;
}

Eigen::VectorXd seed_point(const TranscriptionProblem& p, unsigned seed) {
  const auto sea = ClutchPattern::from_modes(JointMode::kSEA, JointMode::kSEA);
  return p.pack(seed_trajectory(p.params(), p.config(), ModeSchedule::constant(sea, p.config().horizon), seed, 1.0));
}

TEST(HomotopyTest, ScheduleValidation) {
  EXPECT_NO_THROW(validate_epsilon_schedule({1e-1, 1e-2, 1e-6}));
  EXPECT_THROW(validate_epsilon_schedule({}), std::invalid_argument);
  EXPECT_THROW(validate_epsilon_schedule({1e-2, 1e-1, 1e-3}), std::invalid_argument);
  EXPECT_THROW(validate_epsilon_schedule({1e-1, 1e-1}), std::invalid_argument);
  EXPECT_THROW(validate_epsilon_schedule({1e-1, 0.0}), std::invalid_argument);
  TranscriptionProblem p(PlantParams{}, short_config(2));
  HomotopyOptions o;
  o.epsilons = {1e-3, 1e-2};
  EXPECT_THROW(solve_homotopy(p, seed_point(p, 1), o), std::invalid_argument);
}

TEST(HomotopyTest, SingleStageEqualsSolveRelaxed) {
  TranscriptionProblem p1(PlantParams{}, short_config(3));
  TranscriptionProblem p2(PlantParams{}, short_config(3));
  const Eigen::VectorXd z0 = seed_point(p1, 2);
  HomotopyOptions o;
  o.epsilons = {1e-3};
  const HomotopyResult h = solve_homotopy(p1, z0, o);
  const HomotopyResult r = solve_relaxed(p2, 1e-3, z0, o.solver);
  EXPECT_EQ(h.report.status, r.report.status);
  EXPECT_EQ(h.solution.x, r.solution.x);
  EXPECT_EQ(h.report.iterations, r.report.iterations);
  ASSERT_EQ(h.report.stages.size(), 1u);
}

TEST(HomotopyTest, DecadeScheduleConvergesWithMonotoneProducts) {
  TranscriptionProblem p(PlantParams{}, short_config(8));
  const HomotopyResult h = solve_homotopy(p, seed_point(p, 3));
  ASSERT_TRUE(h.report.converged()) << to_string(h.report.status) << " " << h.report.annotation;
  ASSERT_EQ(h.report.stages.size(), 6u);
  double previous = kInf;
  for (const StageReport& s : h.report.stages) {
    EXPECT_EQ(s.nlp.status, SolveStatus::kConverged);
    EXPECT_LE(s.max_product, s.epsilon * (1 + 1e-9));
    EXPECT_LE(s.max_product, previous * (1 + 1e-9));
    EXPECT_LE(s.max_defect, 1e-8);
    previous = s.max_product;
  }
  EXPECT_LE(h.report.max_product, 1e-6);
  EXPECT_LE(h.report.max_defect, 1e-8);
  EXPECT_EQ(h.report.eps_trace, HomotopyOptions{}.epsilons);
}

TEST(HomotopyTest, FixedScheduleIgnoresEpsilon) {
  const auto sched = ModeSchedule::constant(ClutchPattern::from_modes(JointMode::kSEA, JointMode::kSTG), 0.03);
  TranscriptionProblem p(PlantParams{}, short_config(6), sched);
  const Eigen::VectorXd z0 = p.pack(seed_trajectory(p.params(), p.config(), sched, 1, 1.0));
  HomotopyOptions o;
  o.epsilons = {1e-6};
  const HomotopyResult h = solve_homotopy(p, z0, o);
  EXPECT_TRUE(h.report.converged());
  EXPECT_LE(h.report.max_defect, 1e-8);
}

TEST(HomotopyTest, Deterministic) {
  TranscriptionProblem p1(PlantParams{}, short_config(5));
  TranscriptionProblem p2(PlantParams{}, short_config(5));
  const HomotopyResult a = solve_homotopy(p1, seed_point(p1, 4));
  const HomotopyResult b = solve_homotopy(p2, seed_point(p2, 4));
  EXPECT_EQ(a.solution.x, b.solution.x);
  EXPECT_EQ(a.report.iterations, b.report.iterations);
}

}  // namespace
}  // namespace ceropt
