// Clutch/brake mode algebra.
//
// Relative speeds, in canonical order, over xi' = (dpsi1, dpsi2, dq1, dq2):
//
//   phi = (dpsi1, dpsi1 - dq1, dpsi2, dpsi2 - dq2)
//
// Constraint i is engaged when its relative speed is forced to zero.
// Per joint j (constraints 2j, 2j+1 zero-based):
//
//   DEC  neither     SEA  only dpsi_j - dq_j
//   STG  only dpsi_j BRK  both
#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ceropt/plant.h"

namespace ceropt {

inline constexpr int kNumClutchConstraints = 4;

enum class JointMode { kDEC, kSEA, kSTG, kBRK };

const char* to_string(JointMode mode);
JointMode joint_mode_from_string(const std::string& name);

struct ClutchPattern {
  std::array<bool, kNumClutchConstraints> engaged{};

  static ClutchPattern from_modes(JointMode j1, JointMode j2);
  JointMode joint_mode(int joint) const;
  int num_engaged() const;
  // Patterns are indexed 0..15 with bit i set when constraint i is engaged.
  int index() const;
  static ClutchPattern from_index(int index);

  friend bool operator==(const ClutchPattern&, const ClutchPattern&) = default;
};

struct ModeSchedule {
  double horizon = 0.0;
  std::vector<double> switch_times;       // strictly increasing, inside (0, horizon)
  std::vector<ClutchPattern> patterns;    // switch_times.size() + 1 entries

  static ModeSchedule constant(const ClutchPattern& pattern, double horizon);
  // Throws std::invalid_argument when the invariants are violated.
  void validate() const;
  // Pattern active on (t_k, t_{k+1}]; t = 0 maps to the first interval.
  const ClutchPattern& pattern_at(double t) const;
  int interval_at(double t) const;
};

// Rows Gamma_i = d phi_i / d xi'.
const Eigen::Matrix4d& relative_speed_matrix();

Eigen::Vector4d relative_speeds(const HybridState& state);

// Rows of Gamma for the engaged constraints, in index order.
Eigen::MatrixXd constraint_jacobian(const ClutchPattern& pattern);

// exp(-alpha zeta^2) - 1/2: about +1/2 when disengaged, -1/2 when engaged.
double engagement_indicator(double zeta, double alpha);

template <typename S>
S engagement_indicator_generic(const S& zeta, double alpha) {
  using std::exp;
  return exp(-alpha * zeta * zeta) - 0.5;
}

struct ExtractionThresholds {
  double torque_eps = 1e-3;  // N m
  double speed_eps = 1e-3;   // rad/s
};

// Row k of the trajectories belongs to step k+1, i.e. the interval
// (k dt, (k+1) dt]. A constraint counts as engaged when it carries torque, or
// when it was engaged on the previous step and its relative speed is still
// below speed_eps.
ModeSchedule extract_schedule(const Eigen::Matrix<double, Eigen::Dynamic, 4>& zeta,
                              const Eigen::Matrix<double, Eigen::Dynamic, 4>& phi, double dt,
                              const ExtractionThresholds& thresholds = {});

}  // namespace ceropt
