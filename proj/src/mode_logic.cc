#include "ceropt/mode_logic.h"

#include <cmath>
#include <stdexcept>

namespace ceropt {

const char* to_string(JointMode mode) {
  switch (mode) {
    case JointMode::kDEC:
      return "DEC";
    case JointMode::kSEA:
      return "SEA";
    case JointMode::kSTG:
      return "STG";
    case JointMode::kBRK:
      return "BRK";
  }
  return "?";
}

JointMode joint_mode_from_string(const std::string& name) {
  if (name == "DEC") return JointMode::kDEC;
  if (name == "SEA") return JointMode::kSEA;
  if (name == "STG") return JointMode::kSTG;
  if (name == "BRK") return JointMode::kBRK;
  throw std::invalid_argument("unknown joint mode '" + name + "'");
}

ClutchPattern ClutchPattern::from_modes(JointMode j1, JointMode j2) {
  ClutchPattern p;
  const JointMode modes[2] = {j1, j2};
  for (int j = 0; j < 2; ++j) {
    p.engaged[2 * j] = modes[j] == JointMode::kSTG || modes[j] == JointMode::kBRK;
    p.engaged[2 * j + 1] = modes[j] == JointMode::kSEA || modes[j] == JointMode::kBRK;
  }
  return p;
}

JointMode ClutchPattern::joint_mode(int joint) const {
  const bool brake = engaged[2 * joint];
  const bool clutch = engaged[2 * joint + 1];
  if (brake && clutch) return JointMode::kBRK;
  if (brake) return JointMode::kSTG;
  if (clutch) return JointMode::kSEA;
  return JointMode::kDEC;
}

int ClutchPattern::num_engaged() const {
  int n = 0;
  for (bool e : engaged) n += e ? 1 : 0;
  return n;
}

int ClutchPattern::index() const {
  int idx = 0;
  for (int i = 0; i < kNumClutchConstraints; ++i)
    if (engaged[i]) idx |= 1 << i;
  return idx;
}

ClutchPattern ClutchPattern::from_index(int index) {
  if (index < 0 || index >= 16) throw std::out_of_range("clutch pattern index out of range");
  ClutchPattern p;
  for (int i = 0; i < kNumClutchConstraints; ++i) p.engaged[i] = (index >> i) & 1;
  return p;
}

ModeSchedule ModeSchedule::constant(const ClutchPattern& pattern, double horizon) {
  ModeSchedule s;
  s.horizon = horizon;
  s.patterns = {pattern};
  return s;
}

void ModeSchedule::validate() const {
  if (!(horizon > 0.0)) throw std::invalid_argument("mode schedule: horizon must be positive");
  if (patterns.size() != switch_times.size() + 1)
    throw std::invalid_argument("mode schedule: need exactly one more pattern than switch times");
  double prev = 0.0;
  for (double t : switch_times) {
    if (!(t > prev) || !(t < horizon))
      throw std::invalid_argument("mode schedule: switch times must increase strictly inside (0, T)");
    prev = t;
  }
  for (std::size_t k = 1; k < patterns.size(); ++k)
    if (patterns[k] == patterns[k - 1])
      throw std::invalid_argument("mode schedule: consecutive patterns must differ");
}

int ModeSchedule::interval_at(double t) const {
  int k = 0;
  while (k < static_cast<int>(switch_times.size()) && t > switch_times[k]) ++k;
  return k;
}

const ClutchPattern& ModeSchedule::pattern_at(double t) const { return patterns.at(interval_at(t)); }

const Eigen::Matrix4d& relative_speed_matrix() {
  static const Eigen::Matrix4d gamma = [] {
    Eigen::Matrix4d g;
    g << 1, 0, 0, 0,   //
        1, 0, -1, 0,   //
        0, 1, 0, 0,    //
        0, 1, 0, -1;
    return g;
  }();
  return gamma;
}

Eigen::Vector4d relative_speeds(const HybridState& state) { return relative_speed_matrix() * state.dxi(); }

Eigen::MatrixXd constraint_jacobian(const ClutchPattern& pattern) {
  Eigen::MatrixXd c(pattern.num_engaged(), 4);
  int r = 0;
  for (int i = 0; i < kNumClutchConstraints; ++i)
    if (pattern.engaged[i]) c.row(r++) = relative_speed_matrix().row(i);
  return c;
}

double engagement_indicator(double zeta, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("engagement_indicator: alpha must be positive");
  return engagement_indicator_generic(zeta, alpha);
}

ModeSchedule extract_schedule(const Eigen::Matrix<double, Eigen::Dynamic, 4>& zeta,
                              const Eigen::Matrix<double, Eigen::Dynamic, 4>& phi, double dt,
                              const ExtractionThresholds& th) {
  if (!(th.torque_eps > 0.0) || !(th.speed_eps > 0.0))
    throw std::invalid_argument("extract_schedule: thresholds must be positive");
  if (!(dt > 0.0)) throw std::invalid_argument("extract_schedule: dt must be positive");
  if (zeta.rows() != phi.rows() || zeta.rows() == 0)
    throw std::invalid_argument("extract_schedule: zeta and phi must have the same non-zero length");

  const int n = static_cast<int>(zeta.rows());
  ModeSchedule s;
  s.horizon = n * dt;
  ClutchPattern prev;
  for (int k = 0; k < n; ++k) {
    ClutchPattern cur;
    for (int i = 0; i < kNumClutchConstraints; ++i) {
      const bool loaded = std::abs(zeta(k, i)) > th.torque_eps;
      const bool held = k > 0 && prev.engaged[i] && std::abs(phi(k, i)) < th.speed_eps;
      cur.engaged[i] = loaded || held;
    }
    if (k == 0) {
      s.patterns.push_back(cur);
    } else if (!(cur == prev)) {
      s.switch_times.push_back(k * dt);
      s.patterns.push_back(cur);
    }
    prev = cur;
  }
  return s;
}

}  // namespace ceropt
