#include "ceropt/plant.h"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace ceropt {

namespace {

void require_positive(const Pair& v, const char* name) {
  for (double x : v)
    if (!(x > 0.0) || !std::isfinite(x))
      throw std::invalid_argument(std::string("plant parameter '") + name + "' must be positive and finite");
}

void require_nonnegative(const Pair& v, const char* name) {
  for (double x : v)
    if (!(x >= 0.0) || !std::isfinite(x))
      throw std::invalid_argument(std::string("plant parameter '") + name + "' must be non-negative and finite");
}

void require_positive(double x, const char* name) {
  if (!(x > 0.0) || !std::isfinite(x))
    throw std::invalid_argument(std::string("plant parameter '") + name + "' must be positive and finite");
}

}  // namespace

void PlantParams::validate() const {
  require_positive(motor_inertia, "B_theta");
  require_positive(spring_inertia, "B_psi");
  require_positive(link_inertia, "B_L");
  require_positive(link_mass, "m_L");
  require_positive(link_com, "r_L");
  require_positive(link_length, "l");
  require_positive(stiffness, "K");
  require_nonnegative(coulomb_link, "tau_C_q");
  require_nonnegative(visc_link, "d_q");
  require_nonnegative(coulomb_spring, "tau_C_psi");
  require_nonnegative(visc_spring, "d_psi");
  if (!(gravity >= 0.0) || !std::isfinite(gravity))
    throw std::invalid_argument("plant parameter 'g' must be non-negative and finite");
  if (!std::isfinite(gravity_angle)) throw std::invalid_argument("plant parameter 'gravity_angle' must be finite");
  require_positive(friction_smoothing, "friction_smoothing");
  require_positive(limits.joint_angle_max, "theta_max");
  require_positive(limits.spring_deflection_max, "phi_max");
  require_positive(limits.spring_torque_max, "tau_s_max");
  require_positive(limits.motor_speed_max, "u_max");
  require_positive(limits.motor_torque_max, "tau_m_max");
}

double PlantParams::deflection_bound(int joint) const {
  return std::min(limits.spring_deflection_max, limits.spring_torque_max[joint] / stiffness[joint]);
}

StateVector HybridState::to_vector() const {
  StateVector x;
  x << theta[0], theta[1], psi[0], psi[1], q[0], q[1], dpsi[0], dpsi[1], dq[0], dq[1];
  return x;
}

HybridState HybridState::from_vector(const StateVector& x) {
  HybridState s;
  s.theta = {x(0), x(1)};
  s.psi = {x(2), x(3)};
  s.q = {x(4), x(5)};
  s.dpsi = {x(6), x(7)};
  s.dq = {x(8), x(9)};
  return s;
}

bool HybridState::all_finite() const { return to_vector().allFinite(); }

GeneralizedModelEval eval_model(const PlantParams& params, const HybridState& state) {
  if (!state.all_finite()) throw std::invalid_argument("eval_model: state contains non-finite entries");

  const LinkMass<double> m = link_mass_matrix(params, state.q[1]);
  const auto h = link_bias(params, state.q[0], state.q[1], state.dq[0], state.dq[1]);
  const auto f = friction_torque<double>(params, {state.dpsi[0], state.dpsi[1], state.dq[0], state.dq[1]});

  GeneralizedModelEval e;
  e.Pi.setZero();
  e.Pi(0, 0) = params.spring_inertia[0];
  e.Pi(1, 1) = params.spring_inertia[1];
  e.Pi(2, 2) = m.m11;
  e.Pi(2, 3) = e.Pi(3, 2) = m.m12;
  e.Pi(3, 3) = m.m22;
  e.eta << 0.0, 0.0, h[0], h[1];
  e.tau << params.stiffness[0] * (state.psi[0] - state.theta[0]),
      params.stiffness[1] * (state.psi[1] - state.theta[1]), 0.0, 0.0;
  e.tau_f << f[0], f[1], f[2], f[3];
  return e;
}

EndEffectorKinematics ee_kinematics(const PlantParams& params, const Pair& q, const Pair& dq) {
  if (!std::isfinite(q[0]) || !std::isfinite(q[1]) || !std::isfinite(dq[0]) || !std::isfinite(dq[1]))
    throw std::invalid_argument("ee_kinematics: non-finite input");
  const double l1 = params.link_length[0], l2 = params.link_length[1];
  const double c1 = std::cos(q[0]), s1 = std::sin(q[0]);
  const double c12 = std::cos(q[0] + q[1]), s12 = std::sin(q[0] + q[1]);
  EndEffectorKinematics k;
  const auto p = ee_position(params, q[0], q[1]);
  k.position << p[0], p[1];
  k.jacobian << l1 * c1 + l2 * c12, l2 * c12, l1 * s1 + l2 * s12, l2 * s12;
  k.velocity = k.jacobian * Eigen::Vector2d(dq[0], dq[1]);
  return k;
}

double mechanical_energy(const PlantParams& params, const HybridState& s) {
  const GeneralizedModelEval e = eval_model(params, s);
  const Eigen::Vector4d v = s.dxi();
  double energy = 0.5 * v.dot(e.Pi * v);
  for (int j = 0; j < 2; ++j) {
    const double defl = s.theta[j] - s.psi[j];
    energy += 0.5 * params.stiffness[j] * defl * defl;
  }
  const double m1 = params.link_mass[0], m2 = params.link_mass[1];
  const double r1 = params.link_com[0], r2 = params.link_com[1];
  const double l1 = params.link_length[0];
  const double a = params.gravity_angle;
  energy -= params.gravity * ((m1 * r1 + m2 * l1) * std::cos(s.q[0] - a) + m2 * r2 * std::cos(s.q[0] + s.q[1] - a));
  return energy;
}

}  // namespace ceropt
