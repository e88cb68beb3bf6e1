// Dynamics of the two-joint pendulum driven by bi-stiffness actuators.
//
// Generalized coordinates are xi = (psi1, psi2, q1, q2): spring-inertia
// positions followed by link positions. The motor positions theta are driven
// kinematically (theta' = u). The full hybrid state is
//
//   x = (theta1, theta2, psi1, psi2, q1, q2, dpsi1, dpsi2, dq1, dq2).
//
// Equations of motion, with the clutch torque tau_c on the right:
//
//   Pi(xi) xi'' + eta(xi, xi') + tau(theta, psi) + tau_f(xi') = tau_c
//
//   Pi  = blockdiag(diag(B_psi), M(q))
//   eta = (0, 0, h(q, q'))             Coriolis/centrifugal + gravity
//   tau = (K (psi - theta), 0, 0)      spring acting on the spring inertia
//
// Link inertia (B_L about the link centre of mass, r_L from the joint axis):
//
//   M11 = B_L1 + m1 r1^2 + B_L2 + m2 (l1^2 + r2^2 + 2 l1 r2 cos q2)
//   M12 = B_L2 + m2 (r2^2 + l1 r2 cos q2)
//   M22 = B_L2 + m2 r2^2
//
// q = 0 is hanging straight down when gravity_angle = 0.
#pragma once

#include <array>
#include <cmath>

#include <Eigen/Core>

namespace ceropt {

inline constexpr int kStateDim = 10;
inline constexpr int kControlDim = 2;
inline constexpr int kGenDim = 4;

// Offsets into the state vector.
inline constexpr int kThetaIdx = 0;
inline constexpr int kPsiIdx = 2;
inline constexpr int kQIdx = 4;
inline constexpr int kXiIdx = 2;
inline constexpr int kDxiIdx = 6;
inline constexpr int kDpsiIdx = 6;
inline constexpr int kDqIdx = 8;

using StateVector = Eigen::Matrix<double, kStateDim, 1>;
using ControlVector = Eigen::Matrix<double, kControlDim, 1>;
using StateMatrix = Eigen::Matrix<double, kStateDim, kStateDim>;

using Pair = std::array<double, 2>;

struct PlantLimits {
  double joint_angle_max = 1.2;        // |theta| [rad]
  double spring_deflection_max = 0.3;  // |theta - psi| [rad]
  Pair spring_torque_max{3.75, 4.35};  // |K (theta - psi)| [N m]
  double motor_speed_max = 4.5;        // |u| [rad/s]
  double motor_torque_max = 10.0;      // [N m], informational in the reduced model
};

struct PlantParams {
  Pair motor_inertia{2.38e-5, 2.38e-5};
  Pair spring_inertia{6.20e-4, 6.15e-4};
  Pair link_inertia{1.12e-1, 4.4e-3};
  Pair link_mass{9.92, 9.5e-1};
  Pair link_com{9.87e-2, 1.74e-1};
  // Not part of the published parameter set; see README.
  Pair link_length{0.25, 0.35};
  Pair stiffness{12.5, 14.5};
  Pair coulomb_link{2.0e-1, 6.0e-1};
  Pair visc_link{1.0e-1, 8.0e-2};
  Pair coulomb_spring{2.0e-1, 2.0e-1};
  Pair visc_spring{1.0e-1, 1.0e-1};
  double gravity = 9.81;
  // Rotation of the gravity direction within the motion plane.
  double gravity_angle = 0.0;
  // Velocity scale of the tanh Coulomb model [rad/s].
  double friction_smoothing = 0.01;
  PlantLimits limits;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;

  // Bound on |theta_j - psi_j| from both the deflection and torque limits.
  double deflection_bound(int joint) const;
};

struct HybridState {
  Pair theta{};
  Pair psi{};
  Pair q{};
  Pair dpsi{};
  Pair dq{};

  StateVector to_vector() const;
  static HybridState from_vector(const StateVector& x);
  Eigen::Vector4d xi() const { return {psi[0], psi[1], q[0], q[1]}; }
  Eigen::Vector4d dxi() const { return {dpsi[0], dpsi[1], dq[0], dq[1]}; }
  bool all_finite() const;
};

struct GeneralizedModelEval {
  Eigen::Matrix4d Pi;
  Eigen::Vector4d eta;
  Eigen::Vector4d tau;
  Eigen::Vector4d tau_f;
};

struct EndEffectorKinematics {
  Eigen::Vector2d position;
  Eigen::Vector2d velocity;
  Eigen::Matrix2d jacobian;
};

GeneralizedModelEval eval_model(const PlantParams& params, const HybridState& state);

EndEffectorKinematics ee_kinematics(const PlantParams& params, const Pair& q, const Pair& dq);

// Kinetic + spring + gravitational energy.
double mechanical_energy(const PlantParams& params, const HybridState& state);

// ---------------------------------------------------------------------------
// Scalar-generic building blocks, shared by the simulator, the transcription
// and the linearization. S is double or a Dual type.

template <typename S>
struct LinkMass {
  S m11, m12, m22;
};

template <typename S>
LinkMass<S> link_mass_matrix(const PlantParams& p, const S& q2) {
  using std::cos;
  const double m1 = p.link_mass[0], m2 = p.link_mass[1];
  const double r1 = p.link_com[0], r2 = p.link_com[1];
  const double l1 = p.link_length[0];
  const double b1 = p.link_inertia[0], b2 = p.link_inertia[1];
  const S c2 = cos(q2);
  const double a = m2 * l1 * r2;
  const double m22 = b2 + m2 * r2 * r2;
  return {b1 + m1 * r1 * r1 + m22 + m2 * l1 * l1 + 2.0 * a * c2, m22 + a * c2, S(m22)};
}

// h(q, q') = C(q, q') q' + g(q).
template <typename S>
std::array<S, 2> link_bias(const PlantParams& p, const S& q1, const S& q2, const S& dq1, const S& dq2) {
  using std::sin;
  const double m1 = p.link_mass[0], m2 = p.link_mass[1];
  const double r1 = p.link_com[0], r2 = p.link_com[1];
  const double l1 = p.link_length[0];
  const double a = m2 * l1 * r2;
  const S s2 = sin(q2);
  const S s1g = sin(q1 - p.gravity_angle);
  const S s12g = sin(q1 + q2 - p.gravity_angle);
  const double g = p.gravity;
  return {-a * s2 * (2.0 * dq1 * dq2 + dq2 * dq2) + g * ((m1 * r1 + m2 * l1) * s1g + m2 * r2 * s12g),
          a * s2 * dq1 * dq1 + g * m2 * r2 * s12g};
}

template <typename S>
S smooth_friction(double coulomb, double viscous, double smoothing, const S& v) {
  using std::tanh;
  return coulomb * tanh(v / smoothing) + viscous * v;
}

template <typename S>
std::array<S, 4> friction_torque(const PlantParams& p, const std::array<S, 4>& dxi) {
  const double e = p.friction_smoothing;
  return {smooth_friction(p.coulomb_spring[0], p.visc_spring[0], e, dxi[0]),
          smooth_friction(p.coulomb_spring[1], p.visc_spring[1], e, dxi[1]),
          smooth_friction(p.coulomb_link[0], p.visc_link[0], e, dxi[2]),
          smooth_friction(p.coulomb_link[1], p.visc_link[1], e, dxi[3])};
}

// Everything on the left-hand side except Pi xi'': eta + tau + tau_f.
template <typename S>
std::array<S, 4> generalized_load(const PlantParams& p, const std::array<S, 2>& theta,
                                  const std::array<S, 4>& xi, const std::array<S, 4>& dxi) {
  const auto h = link_bias(p, xi[2], xi[3], dxi[2], dxi[3]);
  const auto f = friction_torque(p, dxi);
  return {p.stiffness[0] * (xi[0] - theta[0]) + f[0], p.stiffness[1] * (xi[1] - theta[1]) + f[1],
          h[0] + f[2], h[1] + f[3]};
}

template <typename S>
std::array<S, 4> mass_times(const PlantParams& p, const LinkMass<S>& m, const std::array<S, 4>& v) {
  return {p.spring_inertia[0] * v[0], p.spring_inertia[1] * v[1], m.m11 * v[2] + m.m12 * v[3],
          m.m12 * v[2] + m.m22 * v[3]};
}

template <typename S>
std::array<S, 4> mass_solve(const PlantParams& p, const LinkMass<S>& m, const std::array<S, 4>& rhs) {
  const S det = m.m11 * m.m22 - m.m12 * m.m12;
  return {rhs[0] / p.spring_inertia[0], rhs[1] / p.spring_inertia[1],
          (m.m22 * rhs[2] - m.m12 * rhs[3]) / det, (m.m11 * rhs[3] - m.m12 * rhs[2]) / det};
}

template <typename S>
std::array<S, 2> ee_position(const PlantParams& p, const S& q1, const S& q2) {
  using std::cos;
  using std::sin;
  const double l1 = p.link_length[0], l2 = p.link_length[1];
  const S c1 = cos(q1), s1 = sin(q1), c12 = cos(q1 + q2), s12 = sin(q1 + q2);
  const S x = l1 * s1 + l2 * s12;
  const S y = -(l1 * c1 + l2 * c12);
  return {x, y};
}

template <typename S>
std::array<S, 2> ee_velocity(const PlantParams& p, const S& q1, const S& q2, const S& dq1, const S& dq2) {
  using std::cos;
  using std::sin;
  const double l1 = p.link_length[0], l2 = p.link_length[1];
  const S c1 = cos(q1), s1 = sin(q1), c12 = cos(q1 + q2), s12 = sin(q1 + q2);
  return {(l1 * c1 + l2 * c12) * dq1 + l2 * c12 * dq2, (l1 * s1 + l2 * s12) * dq1 + l2 * s12 * dq2};
}

}  // namespace ceropt
