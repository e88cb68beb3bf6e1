#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "ceropt/derivatives.h"
#include "ceropt/mode_logic.h"
#include "test_util.h"

namespace ceropt {
namespace {

using Traj = Eigen::Matrix<double, Eigen::Dynamic, 4>;

TEST(RelativeSpeedsTest, RestIsZero) { EXPECT_TRUE(relative_speeds(HybridState{}).isZero(0.0)); }

TEST(RelativeSpeedsTest, EngagedClutchSpeedsVanish) {
  HybridState s;
  s.dpsi = {1.0, 2.0};
  s.dq = {1.0, 2.0};
  EXPECT_EQ(relative_speeds(s), Eigen::Vector4d(1.0, 0.0, 2.0, 0.0));
}

TEST(RelativeSpeedsTest, GammaTimesVelocity) {
  std::mt19937 rng(2);
  for (int i = 0; i < 20; ++i) {
    const HybridState s = testing::random_state(rng);
    const Eigen::Vector4d v = s.dxi();
    const Eigen::Vector4d expected(v(0), v(0) - v(2), v(1), v(1) - v(3));
    EXPECT_TRUE((relative_speed_matrix() * v).isApprox(expected, 1e-15));
    EXPECT_TRUE(relative_speeds(s).isApprox(expected, 1e-15));
  }
}

TEST(ConstraintJacobianTest, DecoupledIsEmpty) {
  const auto c = constraint_jacobian(ClutchPattern::from_modes(JointMode::kDEC, JointMode::kDEC));
  EXPECT_EQ(c.rows(), 0);
  EXPECT_EQ(c.cols(), 4);
}

TEST(ConstraintJacobianTest, BrakedJointRowsMatchDifferentiatedSpeeds) {
  const auto c = constraint_jacobian(ClutchPattern::from_modes(JointMode::kBRK, JointMode::kDEC));
  Eigen::Matrix<double, 2, 4> expected;
  expected << 1, 0, 0, 0, 1, 0, -1, 0;
  EXPECT_EQ(c, expected);
  // d phi / d xi' through the derivative provider.
  const auto r = jacobian<4>(
      [](const auto& v) { return std::array{v[0], v[0] - v[2], v[1], v[1] - v[3]}; }, {0.3, -0.2, 1.1, 0.7});
  EXPECT_EQ(Eigen::MatrixXd(r.jacobian.topRows<2>()), Eigen::MatrixXd(expected));
}

TEST(ConstraintJacobianTest, SeaSeaGram) {
  const auto c = constraint_jacobian(ClutchPattern::from_modes(JointMode::kSEA, JointMode::kSEA));
  EXPECT_EQ(Eigen::MatrixXd(c * c.transpose()), Eigen::MatrixXd(Eigen::Vector2d(2.0, 2.0).asDiagonal()));
}

TEST(ConstraintJacobianTest, EveryPatternHasFullRowRank) {
  for (int idx = 0; idx < 16; ++idx) {
    const ClutchPattern p = ClutchPattern::from_index(idx);
    const auto c = constraint_jacobian(p);
    ASSERT_EQ(c.rows(), p.num_engaged());
    if (c.rows() == 0) continue;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(c);
    EXPECT_EQ(lu.rank(), c.rows()) << "pattern " << idx;
  }
}

TEST(ClutchPatternTest, ModesRoundTripThroughTableTwo) {
  const JointMode all[] = {JointMode::kDEC, JointMode::kSEA, JointMode::kSTG, JointMode::kBRK};
  for (JointMode a : all)
    for (JointMode b : all) {
      const auto p = ClutchPattern::from_modes(a, b);
      EXPECT_EQ(p.joint_mode(0), a);
      EXPECT_EQ(p.joint_mode(1), b);
      EXPECT_EQ(ClutchPattern::from_index(p.index()), p);
    }
  const auto sea = ClutchPattern::from_modes(JointMode::kSEA, JointMode::kSTG);
  EXPECT_EQ(sea.engaged, (std::array<bool, 4>{false, true, true, false}));
  EXPECT_EQ(joint_mode_from_string("BRK"), JointMode::kBRK);
  EXPECT_THROW(joint_mode_from_string("XYZ"), std::invalid_argument);
}

TEST(EngagementIndicatorTest, KnownValues) {
  EXPECT_DOUBLE_EQ(engagement_indicator(0.0, 100.0), 0.5);
  EXPECT_NEAR(engagement_indicator(1e3, 100.0), -0.5, 1e-15);
  // exp(-1) - 1/2 to 17 digits.
  EXPECT_NEAR(engagement_indicator(0.1, 100.0), -0.13212055882855767, 1e-15);
  EXPECT_THROW(engagement_indicator(0.1, 0.0), std::invalid_argument);
}

TEST(EngagementIndicatorTest, EvenAndStrictlyDecreasingInMagnitude) {
  double prev = engagement_indicator(0.0, 100.0);
  for (int i = 1; i <= 200; ++i) {
    const double z = 0.002 * i;
    const double s = engagement_indicator(z, 100.0);
    EXPECT_LT(s, prev);
    EXPECT_EQ(s, engagement_indicator(-z, 100.0));
    EXPECT_GT(s, -0.5);
    EXPECT_LE(s, 0.5);
    prev = s;
  }
}

TEST(ExtractScheduleTest, NoTorqueIsDecoupled) {
  Traj zeta = Traj::Zero(50, 4);
  Traj phi = Traj::Constant(50, 4, 0.3);
  const ModeSchedule s = extract_schedule(zeta, phi, 0.01);
  EXPECT_TRUE(s.switch_times.empty());
  ASSERT_EQ(s.patterns.size(), 1u);
  EXPECT_EQ(s.patterns[0], ClutchPattern{});
  EXPECT_DOUBLE_EQ(s.horizon, 0.5);
}

TEST(ExtractScheduleTest, TorqueWindowMapsToSeaWindow) {
  const int n = 40;
  const double dt = 0.005;
  Traj zeta = Traj::Zero(n, 4);
  Traj phi = Traj::Constant(n, 4, 0.5);
  for (int k = 10; k <= 20; ++k) {
    zeta(k, 1) = 1.0;
    phi(k, 1) = 0.0;
  }
  const ModeSchedule s = extract_schedule(zeta, phi, dt);
  ASSERT_EQ(s.switch_times.size(), 2u);
  EXPECT_DOUBLE_EQ(s.switch_times[0], 10 * dt);
  EXPECT_DOUBLE_EQ(s.switch_times[1], 21 * dt);
  EXPECT_EQ(s.patterns[1].joint_mode(0), JointMode::kSEA);
  EXPECT_EQ(s.patterns[1].joint_mode(1), JointMode::kDEC);
  EXPECT_EQ(s.patterns[2], ClutchPattern{});
}

TEST(ExtractScheduleTest, HysteresisHoldsStickingClutch) {
  Traj zeta = Traj::Zero(10, 4);
  Traj phi = Traj::Constant(10, 4, 0.5);
  zeta(2, 0) = 2.0;
  phi.col(0).segment(2, 5).setZero();  // sticks through row 6 with no torque
  const ModeSchedule s = extract_schedule(zeta, phi, 0.1);
  ASSERT_EQ(s.switch_times.size(), 2u);
  EXPECT_DOUBLE_EQ(s.switch_times[0], 0.2);
  EXPECT_DOUBLE_EQ(s.switch_times[1], 0.7);
}

// Per-step patterns, zeta and phi consistent with a given schedule.
void synthesize(const ModeSchedule& sched, int n, double dt, std::mt19937& rng, Traj& zeta, Traj& phi) {
  std::uniform_real_distribution<double> mag(0.2, 3.0);
  std::bernoulli_distribution sign(0.5);
  zeta = Traj::Zero(n, 4);
  phi = Traj::Zero(n, 4);
  for (int k = 0; k < n; ++k) {
    const ClutchPattern& p = sched.pattern_at((k + 1) * dt);
    for (int i = 0; i < 4; ++i) {
      if (p.engaged[i]) {
        zeta(k, i) = (sign(rng) ? 1 : -1) * mag(rng);
      } else {
        phi(k, i) = (sign(rng) ? 1 : -1) * mag(rng);
      }
    }
  }
}

TEST(ExtractScheduleTest, RecoversOptimizedSequenceSwitchTimes) {
  // Both SEA; J2 -> STG at 0.11 s, J1 -> STG at 0.14 s, J1 -> SEA at 0.27 s,
  // J2 -> SEA at 0.41 s.
  using M = JointMode;
  ModeSchedule truth;
  truth.horizon = 0.5;
  truth.switch_times = {0.11, 0.14, 0.27, 0.41};
  truth.patterns = {ClutchPattern::from_modes(M::kSEA, M::kSEA), ClutchPattern::from_modes(M::kSEA, M::kSTG),
                    ClutchPattern::from_modes(M::kSTG, M::kSTG), ClutchPattern::from_modes(M::kSEA, M::kSTG),
                    ClutchPattern::from_modes(M::kSEA, M::kSEA)};
  truth.validate();
  const int n = 100;
  const double dt = 0.005;
  std::mt19937 rng(4);
  Traj zeta, phi;
  synthesize(truth, n, dt, rng, zeta, phi);
  const ModeSchedule s = extract_schedule(zeta, phi, dt);
  ASSERT_EQ(s.switch_times.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_LE(std::abs(s.switch_times[i] - truth.switch_times[i]), dt + 1e-12);
  EXPECT_EQ(s.patterns, truth.patterns);
}

TEST(ExtractScheduleTest, IdempotentOnGridAlignedSchedules) {
  std::mt19937 rng(9);
  const int n = 60;
  const double dt = 0.01;
  for (int trial = 0; trial < 50; ++trial) {
    ModeSchedule truth;
    truth.horizon = n * dt;
    std::uniform_int_distribution<int> pat(0, 15), gap(1, 12);
    truth.patterns.push_back(ClutchPattern::from_index(pat(rng)));
    int k = gap(rng);
    while (k < n) {
      ClutchPattern next;
      do next = ClutchPattern::from_index(pat(rng));
      while (next == truth.patterns.back());
      truth.switch_times.push_back(k * dt);
      truth.patterns.push_back(next);
      k += gap(rng);
    }
    Traj zeta, phi;
    synthesize(truth, n, dt, rng, zeta, phi);
    const ModeSchedule s = extract_schedule(zeta, phi, dt);
    ASSERT_EQ(s.patterns, truth.patterns);
    ASSERT_EQ(s.switch_times.size(), truth.switch_times.size());
    for (std::size_t i = 0; i < s.switch_times.size(); ++i)
      EXPECT_NEAR(s.switch_times[i], truth.switch_times[i], 1e-12);
    const ModeSchedule again = extract_schedule(zeta, phi, dt);
    EXPECT_EQ(again.patterns, s.patterns);
  }
}

TEST(ModeScheduleTest, ValidationAndLookup) {
  ModeSchedule s;
  s.horizon = 1.0;
  s.switch_times = {0.5};
  s.patterns = {ClutchPattern::from_index(1), ClutchPattern::from_index(2)};
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.pattern_at(0.0).index(), 1);
  EXPECT_EQ(s.pattern_at(0.5).index(), 1);
  EXPECT_EQ(s.pattern_at(0.5000001).index(), 2);
  s.patterns[1] = s.patterns[0];
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.patterns[1] = ClutchPattern::from_index(3);
  s.switch_times = {1.2};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_THROW(extract_schedule(Traj::Zero(3, 4), Traj::Zero(3, 4), 0.1, {0.0, 1e-3}), std::invalid_argument);
}

}  // namespace
}  // namespace ceropt
