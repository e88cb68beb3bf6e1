// Event-driven hybrid simulation of the clutched pendulum.
//
// Within a mode the engaged clutch constraints C_p xi' = 0 are enforced at
// acceleration level by the constraint torque
//
//   lambda = (C Pi^-1 C^T)^-1 C Pi^-1 (eta + tau + tau_f),
//   xi''   = Pi^-1 (C^T lambda - eta - tau - tau_f).
//
// At a scheduled switch the velocities are projected onto the new
// constraint set in the Pi metric:
//
//   Lambda = -(C Pi^-1 C^T)^-1 C xi'^-,   xi'^+ = xi'^- + Pi^-1 C^T Lambda.
#pragma once

#include <array>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ceropt/dual.h"
#include "ceropt/mode_logic.h"
#include "ceropt/plant.h"

namespace ceropt {

class SingularConstraintError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, double last_time)
      : std::runtime_error(what), last_valid_time(last_time) {}
  double last_valid_time;
};

Eigen::VectorXd constraint_torque(const GeneralizedModelEval& eval, const Eigen::MatrixXd& c_p);

struct ImpactResult {
  Eigen::Vector4d dxi_plus;
  Eigen::VectorXd impulse;
};

ImpactResult impact(const GeneralizedModelEval& eval, const Eigen::MatrixXd& c_p_new,
                    const Eigen::Vector4d& dxi_minus);

HybridState reset_map(const PlantParams& params, const HybridState& state, const ClutchPattern& pattern_new);

// ---------------------------------------------------------------------------
// Scalar-generic forms used for linearization.

namespace detail {

// Solves G y = b for symmetric positive definite G (m <= 4, row-major).
template <typename S>
std::array<S, 4> cholesky_solve(std::array<S, 16> g, std::array<S, 4> b, int m) {
  using std::sqrt;
  for (int j = 0; j < m; ++j) {
    S diag = g[j * 4 + j];
    for (int k = 0; k < j; ++k) diag -= g[j * 4 + k] * g[j * 4 + k];
    if (!(value_of(diag) > 1e-300)) throw SingularConstraintError("constraint Gram matrix is singular");
    const S ljj = sqrt(diag);
    g[j * 4 + j] = ljj;
    for (int i = j + 1; i < m; ++i) {
      S s = g[i * 4 + j];
      for (int k = 0; k < j; ++k) s -= g[i * 4 + k] * g[j * 4 + k];
      g[i * 4 + j] = s / ljj;
    }
  }
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < i; ++k) b[i] -= g[i * 4 + k] * b[k];
    b[i] = b[i] / g[i * 4 + i];
  }
  for (int i = m - 1; i >= 0; --i) {
    for (int k = i + 1; k < m; ++k) b[i] -= g[k * 4 + i] * b[k];
    b[i] = b[i] / g[i * 4 + i];
  }
  return b;
}

template <typename S>
S dot4(const std::array<S, 4>& a, const Eigen::Vector4d& b) {
  return a[0] * b(0) + a[1] * b(1) + a[2] * b(2) + a[3] * b(3);
}

// Columns Pi^-1 Gamma_i^T for the engaged rows, plus their Gram matrix.
template <typename S>
struct ConstraintGeometry {
  int m = 0;
  std::array<int, 4> rows{};
  std::array<std::array<S, 4>, 4> pinv_ct{};
  std::array<S, 16> gram{};
};

template <typename S>
ConstraintGeometry<S> constraint_geometry(const PlantParams& p, const LinkMass<S>& mass,
                                          const ClutchPattern& pattern) {
  const Eigen::Matrix4d& gamma = relative_speed_matrix();
  ConstraintGeometry<S> geo;
  for (int i = 0; i < kNumClutchConstraints; ++i)
    if (pattern.engaged[i]) geo.rows[geo.m++] = i;
  for (int r = 0; r < geo.m; ++r) {
    const Eigen::Vector4d g = gamma.row(geo.rows[r]).transpose();
    geo.pinv_ct[r] = mass_solve<S>(p, mass, {S(g(0)), S(g(1)), S(g(2)), S(g(3))});
  }
  for (int r = 0; r < geo.m; ++r)
    for (int c = 0; c < geo.m; ++c)
      geo.gram[r * 4 + c] = dot4(geo.pinv_ct[c], gamma.row(geo.rows[r]).transpose());
  return geo;
}

}  // namespace detail

template <typename S>
struct ConstrainedAcceleration {
  std::array<S, 4> ddxi;
  std::array<S, 4> lambda;  // first m entries used
  int m = 0;
};

template <typename S>
ConstrainedAcceleration<S> constrained_acceleration(const PlantParams& p, const std::array<S, 2>& theta,
                                                    const std::array<S, 4>& xi, const std::array<S, 4>& dxi,
                                                    const ClutchPattern& pattern) {
  const LinkMass<S> mass = link_mass_matrix(p, xi[3]);
  const std::array<S, 4> load = generalized_load(p, theta, xi, dxi);
  const auto geo = detail::constraint_geometry(p, mass, pattern);
  ConstrainedAcceleration<S> out;
  out.m = geo.m;
  std::array<S, 4> rhs = load;
  if (geo.m > 0) {
    std::array<S, 4> b{};
    for (int r = 0; r < geo.m; ++r)
      b[r] = geo.pinv_ct[r][0] * load[0] + geo.pinv_ct[r][1] * load[1] + geo.pinv_ct[r][2] * load[2] +
             geo.pinv_ct[r][3] * load[3];
    out.lambda = detail::cholesky_solve(geo.gram, b, geo.m);
    const Eigen::Matrix4d& gamma = relative_speed_matrix();
    for (int r = 0; r < geo.m; ++r)
      for (int c = 0; c < 4; ++c) rhs[c] -= gamma(geo.rows[r], c) * out.lambda[r];
  }
  const auto acc = mass_solve(p, mass, rhs);
  for (int c = 0; c < 4; ++c) out.ddxi[c] = -acc[c];
  return out;
}

// x' = f_p(x, u) = (u, xi', xi'').
template <typename S>
std::array<S, kStateDim> hybrid_vector_field(const PlantParams& p, const std::array<S, kStateDim>& x,
                                             const std::array<S, kControlDim>& u, const ClutchPattern& pattern) {
  const std::array<S, 2> theta{x[0], x[1]};
  const std::array<S, 4> xi{x[2], x[3], x[4], x[5]};
  const std::array<S, 4> dxi{x[6], x[7], x[8], x[9]};
  const auto acc = constrained_acceleration(p, theta, xi, dxi, pattern);
  return {u[0], u[1], dxi[0], dxi[1], dxi[2], dxi[3], acc.ddxi[0], acc.ddxi[1], acc.ddxi[2], acc.ddxi[3]};
}

// g_p(x): positions pass through, velocities are projected.
template <typename S>
std::array<S, kStateDim> reset_map_generic(const PlantParams& p, const std::array<S, kStateDim>& x,
                                           const ClutchPattern& pattern) {
  std::array<S, kStateDim> out = x;
  const LinkMass<S> mass = link_mass_matrix(p, x[5]);
  const auto geo = detail::constraint_geometry(p, mass, pattern);
  if (geo.m == 0) return out;
  const Eigen::Matrix4d& gamma = relative_speed_matrix();
  std::array<S, 4> b{};
  for (int r = 0; r < geo.m; ++r) {
    const int i = geo.rows[r];
    b[r] = -(gamma(i, 0) * x[6] + gamma(i, 1) * x[7] + gamma(i, 2) * x[8] + gamma(i, 3) * x[9]);
  }
  const auto impulse = detail::cholesky_solve(geo.gram, b, geo.m);
  for (int r = 0; r < geo.m; ++r)
    for (int c = 0; c < 4; ++c) out[6 + c] += geo.pinv_ct[r][c] * impulse[r];
  return out;
}

StateVector vector_field(const PlantParams& params, const StateVector& x, const ControlVector& u,
                         const ClutchPattern& pattern);

// ---------------------------------------------------------------------------
// Rollout.

using ControlLaw = std::function<ControlVector(double t, const StateVector& x)>;

// u(t) = values[k] on (k dt, (k+1) dt]; t = 0 uses values[0].
struct ZeroOrderHold {
  double dt = 0.0;
  std::vector<ControlVector> values;

  ControlVector at(double t) const;
  double horizon() const { return dt * static_cast<double>(values.size()); }
  ControlLaw as_law() const;
  std::vector<double> breakpoints() const;
};

struct RolloutOptions {
  double abs_tol = 1e-8;
  double rel_tol = 1e-8;
  // > 0 selects classical RK4 with at most this step.
  double fixed_step = 0.0;
  double initial_step = 1e-4;
  double min_step = 1e-14;
  long max_steps = 50'000'000;
};

struct ImpulseRecord {
  double time = 0.0;
  int interval = 0;  // index of the pattern switched to
  StateVector state_minus;
  StateVector derivative_minus;
  StateVector state_plus;
  Eigen::VectorXd impulse;
};

struct Rollout {
  std::vector<double> times;
  std::vector<StateVector> states;
  std::vector<StateVector> derivatives;
  std::vector<Eigen::VectorXd> lambdas;
  std::vector<int> intervals;
  std::vector<ImpulseRecord> impulses;
  ModeSchedule schedule;

  // Cubic Hermite interpolation inside the mode interval containing t, using
  // (t_k, t_{k+1}] semantics; at a switch time this is the pre-reset state.
  StateVector state_at(double t) const;
  // Same interpolation restricted to mode interval k; t is clamped to the
  // interval, so its lower end yields the post-reset state.
  StateVector state_in(double t, int k) const;
  const StateVector& final_state() const { return states.back(); }
};

Rollout rollout(const PlantParams& params, const HybridState& x0, const ControlLaw& control,
                const ModeSchedule& schedule, double horizon, const RolloutOptions& options = {},
                const std::vector<double>& breakpoints = {});

Rollout rollout(const PlantParams& params, const HybridState& x0, const ZeroOrderHold& control,
                const ModeSchedule& schedule, const RolloutOptions& options = {});

}  // namespace ceropt
