#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "ceropt/derivatives.h"
#include "ceropt/event_sim.h"
#include "ceropt/plant.h"
#include "test_util.h"

namespace ceropt {
namespace {

using testing::central_difference;
using testing::max_relative_error;
using testing::random_state;

// Lagrangian built from link CoM velocities and rotational inertias, without
// going through the closed-form mass matrix.
double lagrangian(const PlantParams& p, const Eigen::Vector2d& q, const Eigen::Vector2d& dq) {
  const double l1 = p.link_length[0];
  const double r1 = p.link_com[0], r2 = p.link_com[1];
  const Eigen::Vector2d c1(r1 * std::sin(q(0)), -r1 * std::cos(q(0)));
  const Eigen::Vector2d c2(l1 * std::sin(q(0)) + r2 * std::sin(q(0) + q(1)),
                           -l1 * std::cos(q(0)) - r2 * std::cos(q(0) + q(1)));
  const Eigen::Vector2d v1(r1 * std::cos(q(0)) * dq(0), r1 * std::sin(q(0)) * dq(0));
  const double w2 = dq(0) + dq(1);
  const Eigen::Vector2d v2(l1 * std::cos(q(0)) * dq(0) + r2 * std::cos(q(0) + q(1)) * w2,
                           l1 * std::sin(q(0)) * dq(0) + r2 * std::sin(q(0) + q(1)) * w2);
  const double kinetic = 0.5 * p.link_mass[0] * v1.squaredNorm() + 0.5 * p.link_mass[1] * v2.squaredNorm() +
                         0.5 * p.link_inertia[0] * dq(0) * dq(0) + 0.5 * p.link_inertia[1] * w2 * w2;
  const double potential = p.gravity * (p.link_mass[0] * c1(1) + p.link_mass[1] * c2(1));
  return kinetic - potential;
}

TEST(PlantTest, DefaultsMatchPublishedParameters) {
  const PlantParams p;
  EXPECT_DOUBLE_EQ(p.spring_inertia[0], 6.20e-4);
  EXPECT_DOUBLE_EQ(p.spring_inertia[1], 6.15e-4);
  EXPECT_DOUBLE_EQ(p.motor_inertia[0], 2.38e-5);
  EXPECT_DOUBLE_EQ(p.link_inertia[0], 1.12e-1);
  EXPECT_DOUBLE_EQ(p.link_inertia[1], 4.4e-3);
  EXPECT_DOUBLE_EQ(p.link_mass[0], 9.92);
  EXPECT_DOUBLE_EQ(p.link_mass[1], 0.95);
  EXPECT_DOUBLE_EQ(p.link_com[0], 9.87e-2);
  EXPECT_DOUBLE_EQ(p.link_com[1], 1.74e-1);
  EXPECT_DOUBLE_EQ(p.coulomb_link[0], 0.2);
  EXPECT_DOUBLE_EQ(p.coulomb_link[1], 0.6);
  EXPECT_DOUBLE_EQ(p.visc_link[0], 0.1);
  EXPECT_DOUBLE_EQ(p.visc_link[1], 0.08);
  EXPECT_DOUBLE_EQ(p.coulomb_spring[1], 0.2);
  EXPECT_DOUBLE_EQ(p.visc_spring[1], 0.1);
  EXPECT_DOUBLE_EQ(p.stiffness[0], 12.5);
  EXPECT_DOUBLE_EQ(p.stiffness[1], 14.5);
  EXPECT_DOUBLE_EQ(p.limits.joint_angle_max, 1.2);
  EXPECT_DOUBLE_EQ(p.limits.spring_deflection_max, 0.3);
  EXPECT_DOUBLE_EQ(p.limits.spring_torque_max[0], 3.75);
  EXPECT_DOUBLE_EQ(p.limits.spring_torque_max[1], 4.35);
  EXPECT_DOUBLE_EQ(p.limits.motor_torque_max, 10.0);
  EXPECT_NO_THROW(p.validate());
}

TEST(PlantTest, ValidationNamesBadField) {
  PlantParams p;
  p.stiffness[1] = -1.0;
  try {
    p.validate();
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("'K'"), std::string::npos);
  }
}

TEST(PlantTest, SpringBlockOfMassMatrix) {
  std::mt19937 rng(1);
  const PlantParams p;
  for (int i = 0; i < 10; ++i) {
    const auto e = eval_model(p, random_state(rng));
    EXPECT_DOUBLE_EQ(e.Pi(0, 0), 6.20e-4);
    EXPECT_DOUBLE_EQ(e.Pi(1, 1), 6.15e-4);
    EXPECT_DOUBLE_EQ(e.Pi(0, 1), 0.0);
    EXPECT_EQ(e.eta(0), 0.0);
    EXPECT_EQ(e.eta(1), 0.0);
    EXPECT_EQ(e.tau(2), 0.0);
    EXPECT_EQ(e.tau(3), 0.0);
    EXPECT_TRUE(e.Pi.isApprox(e.Pi.transpose(), 0.0));
  }
}

TEST(PlantTest, ZeroVelocityLeavesOnlyGravity) {
  const PlantParams p;
  HybridState s;
  s.q = {0.4, -0.9};
  const auto e = eval_model(p, s);
  EXPECT_TRUE(e.tau_f.isZero(0.0));
  const double g = p.gravity, m1 = p.link_mass[0], m2 = p.link_mass[1];
  const double r1 = p.link_com[0], r2 = p.link_com[1], l1 = p.link_length[0];
  EXPECT_NEAR(e.eta(2), g * ((m1 * r1 + m2 * l1) * std::sin(0.4) + m2 * r2 * std::sin(-0.5)), 1e-14);
  EXPECT_NEAR(e.eta(3), g * m2 * r2 * std::sin(-0.5), 1e-14);
}

TEST(PlantTest, LinkDynamicsMatchLagrangianOracle) {
  std::mt19937 rng(7);
  const PlantParams p;
  const double h = 1e-4;
  for (int trial = 0; trial < 25; ++trial) {
    const HybridState s = random_state(rng);
    const Eigen::Vector2d q(s.q[0], s.q[1]), dq(s.dq[0], s.dq[1]);
    // dL/dq and d2L/(dqdot dq) qdot by central differences.
    auto dl_dq = [&](const Eigen::Vector2d& qq, const Eigen::Vector2d& vv) {
      Eigen::Vector2d g;
      for (int i = 0; i < 2; ++i) {
        Eigen::Vector2d e = Eigen::Vector2d::Zero();
        e(i) = h;
        g(i) = (lagrangian(p, qq + e, vv) - lagrangian(p, qq - e, vv)) / (2 * h);
      }
      return g;
    };
    auto dl_dv = [&](const Eigen::Vector2d& qq, const Eigen::Vector2d& vv) {
      Eigen::Vector2d g;
      for (int i = 0; i < 2; ++i) {
        Eigen::Vector2d e = Eigen::Vector2d::Zero();
        e(i) = h;
        g(i) = (lagrangian(p, qq, vv + e) - lagrangian(p, qq, vv - e)) / (2 * h);
      }
      return g;
    };
    // Along q(t) = q + t dq with zero acceleration, d/dt dL/dqdot = d/dq(dL/dqdot) dq.
    const Eigen::Vector2d ddt = (dl_dv(q + h * dq, dq) - dl_dv(q - h * dq, dq)) / (2 * h);
    const Eigen::Vector2d h_oracle = ddt - dl_dq(q, dq);

    HybridState no_friction_state = s;
    PlantParams frictionless = p;
    frictionless.coulomb_link = {0, 0};
    frictionless.visc_link = {0, 0};
    const auto e = eval_model(frictionless, no_friction_state);
    EXPECT_LT(testing::relative_error(e.eta(2), h_oracle(0), 1e-6), 1e-6) << e.eta(2) << " vs " << h_oracle(0);
    EXPECT_LT(testing::relative_error(e.eta(3), h_oracle(1), 1e-6), 1e-6) << e.eta(3) << " vs " << h_oracle(1);

    // Mass matrix = d2L/dqdot2.
    Eigen::Matrix2d m_oracle;
    for (int i = 0; i < 2; ++i) {
      Eigen::Vector2d e2 = Eigen::Vector2d::Zero();
      e2(i) = h;
      m_oracle.col(i) = (dl_dv(q, dq + e2) - dl_dv(q, dq - e2)) / (2 * h);
    }
    EXPECT_LT(max_relative_error(e.Pi.bottomRightCorner<2, 2>(), m_oracle, 1e-8), 1e-6);
  }
}

TEST(PlantTest, MassMatrixPositiveDefiniteOnGrid) {
  const PlantParams p;
  double min_eig = 1e300;
  for (int i = 0; i < 100; ++i) {
    for (int j = 0; j < 100; ++j) {
      HybridState s;
      s.q = {-M_PI + 2 * M_PI * i / 99.0, -M_PI + 2 * M_PI * j / 99.0};
      const auto e = eval_model(p, s);
      ASSERT_TRUE(e.Pi.isApprox(e.Pi.transpose(), 0.0));
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(e.Pi);
      min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
    }
  }
  EXPECT_GT(min_eig, 0.0);
}

TEST(PlantTest, FrictionIsDissipative) {
  std::mt19937 rng(3);
  std::normal_distribution<double> n(0.0, 0.05);
  const PlantParams p;
  for (int i = 0; i < 2000; ++i) {
    HybridState s;
    s.dpsi = {n(rng), 10 * n(rng)};
    s.dq = {n(rng), 40 * n(rng)};
    const auto e = eval_model(p, s);
    EXPECT_GE(s.dxi().dot(e.tau_f), 0.0);
  }
}

TEST(PlantTest, RejectsNonFiniteState) {
  HybridState s;
  s.q[0] = std::nan("");
  EXPECT_THROW(eval_model(PlantParams{}, s), std::invalid_argument);
  EXPECT_THROW(ee_kinematics(PlantParams{}, {0.0, INFINITY}, {0, 0}), std::invalid_argument);
}

TEST(KinematicsTest, ZeroJointVelocity) {
  const auto k = ee_kinematics(PlantParams{}, {0.3, 0.8}, {0.0, 0.0});
  EXPECT_TRUE(k.velocity.isZero(0.0));
}

TEST(KinematicsTest, UnitJointVelocityGivesJacobianColumn) {
  const auto k = ee_kinematics(PlantParams{}, {0.3, 0.8}, {1.0, 0.0});
  EXPECT_TRUE(k.velocity.isApprox(k.jacobian.col(0)));
}

TEST(KinematicsTest, VelocityMatchesFiniteDifferenceOfPosition) {
  std::mt19937 rng(11);
  const PlantParams p;
  for (int i = 0; i < 50; ++i) {
    const HybridState s = random_state(rng);
    const auto k = ee_kinematics(p, s.q, s.dq);
    const double h = 1e-6;
    const auto kp = ee_kinematics(p, {s.q[0] + h * s.dq[0], s.q[1] + h * s.dq[1]}, {0, 0});
    const auto km = ee_kinematics(p, {s.q[0] - h * s.dq[0], s.q[1] - h * s.dq[1]}, {0, 0});
    const Eigen::Vector2d fd = (kp.position - km.position) / (2 * h);
    EXPECT_NEAR(k.velocity.norm(), fd.norm(), 1e-8);
    EXPECT_LT(max_relative_error(k.velocity, fd), 1e-6);
  }
}

TEST(DerivativeProviderTest, VelocityJacobianIsKinematicJacobian) {
  const PlantParams p;
  const Pair q{0.2, -0.7};
  const auto r = jacobian<2>(
      [&](const auto& dq) {
        using S = std::remove_cvref_t<decltype(dq[0])>;
        return ee_velocity<S>(p, S(q[0]), S(q[1]), dq[0], dq[1]);
      },
      {0.5, 1.5});
  EXPECT_LT(max_relative_error(r.jacobian, ee_kinematics(p, q, {0.5, 1.5}).jacobian), 1e-14);
}

TEST(DerivativeProviderTest, ModelJacobianMatchesFiniteDifferences) {
  std::mt19937 rng(5);
  const PlantParams p;
  // eta + tau + tau_f and the link mass entries, as functions of the state.
  auto model = [&](const auto& x) {
    using S = std::remove_cvref_t<decltype(x[0])>;
    const auto load = generalized_load<S>(p, {x[0], x[1]}, {x[2], x[3], x[4], x[5]}, {x[6], x[7], x[8], x[9]});
    const auto m = link_mass_matrix(p, x[5]);
    return std::array<S, 7>{load[0], load[1], load[2], load[3], m.m11, m.m12, m.m22};
  };
  for (int trial = 0; trial < 100; ++trial) {
    const StateVector x = random_state(rng).to_vector();
    std::array<double, 10> at;
    for (int i = 0; i < 10; ++i) at[i] = x(i);
    const auto r = jacobian<10>(model, at);
    const Eigen::MatrixXd fd = central_difference(
        [&](const Eigen::VectorXd& v) {
          std::array<double, 10> a;
          for (int i = 0; i < 10; ++i) a[i] = v(i);
          const auto out = model(a);
          return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(out.data(), 7));
        },
        x);
    EXPECT_LT(max_relative_error(r.jacobian, fd, 1e-7), 1e-6);
  }
}

}  // namespace
}  // namespace ceropt
