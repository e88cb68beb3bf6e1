#include "ceropt/config.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <Eigen/Cholesky>

namespace ceropt {
namespace {

using nlohmann::json;
using Setter = std::function<void(const json&)>;

// Applies one setter per key; unknown keys and type errors become
// ConfigError with the dotted path.
void apply(const json& j, const std::string& path, const std::map<std::string, Setter>& setters) {
  if (!j.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + where + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + where + "': " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError("bad value for '" + where + "': " + e.what());
    }
  }
}

Setter number(double& out) {
  return [&out](const json& v) {
    if (!v.is_number()) throw std::invalid_argument("expected a number");
    out = v.get<double>();
  };
}

Setter integer(int& out) {
  return [&out](const json& v) {
    if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
    out = v.get<int>();
  };
}

Setter boolean(bool& out) {
  return [&out](const json& v) {
    if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
    out = v.get<bool>();
  };
}

// A pair, or one number for both joints.
Setter pair(Pair& out) {
  return [&out](const json& v) {
    if (v.is_number()) {
      out = {v.get<double>(), v.get<double>()};
    } else if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
      out = {v[0].get<double>(), v[1].get<double>()};
    } else {
      throw std::invalid_argument("expected a number or a two-element array");
    }
  };
}

std::vector<double> number_list(const json& v) {
  if (!v.is_array()) throw std::invalid_argument("expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw std::invalid_argument("expected an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

// A diagonal (list of n numbers) or a full row-major n x n matrix.
template <typename Matrix>
Setter weight_matrix(Matrix& out) {
  return [&out](const json& v) {
    const int n = static_cast<int>(out.rows());
    const std::vector<double> values = number_list(v);
    if (static_cast<int>(values.size()) == n) {
      out.setZero();
      for (int i = 0; i < n; ++i) out(i, i) = values[i];
    } else if (static_cast<int>(values.size()) == n * n) {
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) out(r, c) = values[r * n + c];
    } else {
      throw std::invalid_argument("expected " + std::to_string(n) + " diagonal or " + std::to_string(n * n) +
                                  " row-major entries");
    }
  };
}

template <typename Matrix>
json matrix_json(const Matrix& m) {
  const bool diagonal = m.isDiagonal(0.0);
  json out = json::array();
  if (diagonal) {
    for (int i = 0; i < m.rows(); ++i) out.push_back(m(i, i));
  } else {
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

json pair_json(const Pair& p) { return json::array({p[0], p[1]}); }

json state_json(const HybridState& s) {
  return {{"theta", pair_json(s.theta)}, {"psi", pair_json(s.psi)}, {"q", pair_json(s.q)},
          {"dpsi", pair_json(s.dpsi)},   {"dq", pair_json(s.dq)}};
}

void read_state(const json& j, const std::string& path, HybridState& s) {
  apply(j, path,
        {{"theta", pair(s.theta)}, {"psi", pair(s.psi)}, {"q", pair(s.q)}, {"dpsi", pair(s.dpsi)}, {"dq", pair(s.dq)}});
}

json schedule_json(const ModeSchedule& s) {
  json modes = json::array();
  for (const auto& p : s.patterns) modes.push_back({to_string(p.joint_mode(0)), to_string(p.joint_mode(1))});
  return {{"switch_times", s.switch_times}, {"modes", modes}};
}

void read_schedule(const json& j, const std::string& path, ModeSchedule& s) {
  apply(j, path,
        {{"switch_times", [&s](const json& v) { s.switch_times = number_list(v); }},
         {"modes", [&s](const json& v) {
            if (!v.is_array()) throw std::invalid_argument("expected an array of mode pairs");
            s.patterns.clear();
            for (const auto& m : v) {
              if (!m.is_array() || m.size() != 2) throw std::invalid_argument("expected [\"J1MODE\", \"J2MODE\"]");
              s.patterns.push_back(ClutchPattern::from_modes(joint_mode_from_string(m[0].get<std::string>()),
                                                             joint_mode_from_string(m[1].get<std::string>())));
            }
          }}});
}

}  // namespace

ModeSchedule guessed_schedule(double horizon) {
  ModeSchedule s;
  s.horizon = horizon;
  s.switch_times = {0.82 * horizon};
  s.patterns = {ClutchPattern::from_modes(JointMode::kSEA, JointMode::kSTG),
                ClutchPattern::from_modes(JointMode::kDEC, JointMode::kSEA)};
  return s;
}

ExperimentConfig::ExperimentConfig() {
  guessed.schedule = guessed_schedule(transcription.horizon);
  // Above the torque sqrt(ln 2 / alpha) at which the smoothed indicator
  // crosses zero; see README, "Reading modes off the clutch torques".
  extraction.torque_eps = 0.25;
  track.perturbation(kQIdx) = 0.05;
}

void ExperimentConfig::validate() const {
  try {
    plant.validate();
    transcription.validate();
    validate_epsilon_schedule(homotopy.epsilons);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  auto require = [](bool ok, const std::string& field) {
    if (!ok) throw ConfigError("invalid setting '" + field + "'");
  };
  require(homotopy.solver.tol > 0 && homotopy.solver.feas_tol > 0, "homotopy.tol");
  require(homotopy.solver.max_iter > 0, "homotopy.max_iter");
  require(optimize.starts >= 1, "optimize.starts");
  require(optimize.amplitude >= 0 && std::isfinite(optimize.amplitude), "optimize.amplitude");
  require(optimize.presolve_epsilon > 0, "optimize.presolve_epsilon");
  require(optimize.min_speed >= 0, "optimize.min_speed");
  require(optimize.time_budget > 0, "optimize.time_budget");
  require(guessed.starts >= 1, "guessed.starts");
  require(guessed.amplitude >= 0, "guessed.amplitude");
  require(std::abs(guessed.schedule.horizon - transcription.horizon) < 1e-12, "guessed.horizon");
  try {
    guessed.schedule.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("guessed schedule: ") + e.what());
  }
  require(extraction.torque_eps > 0 && extraction.speed_eps > 0, "extraction");
  require(track.weights.R.llt().info() == Eigen::Success && track.weights.R.isApprox(track.weights.R.transpose()),
          "track.R");
  require(track.weights.Q.isApprox(track.weights.Q.transpose()), "track.Q");
  require(track.weights.P_T.isApprox(track.weights.P_T.transpose()), "track.P_T");
  require(track.perturbation.allFinite(), "track.perturbation");
  require(rollout.abs_tol > 0 && rollout.rel_tol > 0 && rollout.fixed_step >= 0, "rollout");
}

json to_json(const PlantParams& p) {
  return {{"B_theta", pair_json(p.motor_inertia)},
          {"B_psi", pair_json(p.spring_inertia)},
          {"B_L", pair_json(p.link_inertia)},
          {"m_L", pair_json(p.link_mass)},
          {"r_L", pair_json(p.link_com)},
          {"l_L", pair_json(p.link_length)},
          {"K", pair_json(p.stiffness)},
          {"tau_C_q", pair_json(p.coulomb_link)},
          {"d_q", pair_json(p.visc_link)},
          {"tau_C_psi", pair_json(p.coulomb_spring)},
          {"d_psi", pair_json(p.visc_spring)},
          {"g", p.gravity},
          {"gravity_angle", p.gravity_angle},
          {"friction_smoothing", p.friction_smoothing},
          {"theta_max", p.limits.joint_angle_max},
          {"phi_max", p.limits.spring_deflection_max},
          {"tau_s_max", pair_json(p.limits.spring_torque_max)},
          {"u_max", p.limits.motor_speed_max},
          {"tau_m_max", p.limits.motor_torque_max}};
}

PlantParams plant_from_json(const json& j, PlantParams p) {
  apply(j, "plant",
        {{"B_theta", pair(p.motor_inertia)},
         {"B_psi", pair(p.spring_inertia)},
         {"B_L", pair(p.link_inertia)},
         {"m_L", pair(p.link_mass)},
         {"r_L", pair(p.link_com)},
         {"l_L", pair(p.link_length)},
         {"K", pair(p.stiffness)},
         {"tau_C_q", pair(p.coulomb_link)},
         {"d_q", pair(p.visc_link)},
         {"tau_C_psi", pair(p.coulomb_spring)},
         {"d_psi", pair(p.visc_spring)},
         {"g", number(p.gravity)},
         {"gravity_angle", number(p.gravity_angle)},
         {"friction_smoothing", number(p.friction_smoothing)},
         {"theta_max", number(p.limits.joint_angle_max)},
         {"phi_max", number(p.limits.spring_deflection_max)},
         {"tau_s_max", pair(p.limits.spring_torque_max)},
         {"u_max", number(p.limits.motor_speed_max)},
         {"tau_m_max", number(p.limits.motor_torque_max)}});
  return p;
}

json to_json(const ExperimentConfig& c) {
  const TranscriptionConfig& t = c.transcription;
  const SolverOptions& s = c.homotopy.solver;
  std::vector<double> perturbation(c.track.perturbation.data(), c.track.perturbation.data() + kStateDim);
  json solver_max_seconds = std::isfinite(s.max_seconds) ? json(s.max_seconds) : json(nullptr);
  return {
      {"scenario", c.scenario},
      {"seed", c.seed},
      {"plant", to_json(c.plant)},
      {"transcription",
       {{"n", t.steps},
        {"T", t.horizon},
        {"w1", t.w_speed},
        {"w2", t.w_switch},
        {"w3", t.w_effort},
        {"w_slack", t.w_slack},
        {"alpha", t.alpha},
        {"beta", t.beta},
        {"zeta_max", t.zeta_max},
        {"x0", state_json(t.x0)}}},
      {"homotopy",
       {{"epsilons", c.homotopy.epsilons},
        {"tol", s.tol},
        {"feas_tol", s.feas_tol},
        {"max_iter", s.max_iter},
        {"max_seconds", solver_max_seconds},
        {"mu_init", s.mu_init},
        {"warm_mu_init", c.homotopy.warm_mu_init},
        {"warm_bound_push", c.homotopy.warm_bound_push}}},
      {"optimize",
       {{"starts", c.optimize.starts},
        {"amplitude", c.optimize.amplitude},
        {"presolve_epsilon", c.optimize.presolve_epsilon},
        {"min_speed", c.optimize.min_speed},
        {"time_budget", c.optimize.time_budget}}},
      {"guessed",
       {{"schedule", schedule_json(c.guessed.schedule)},
        {"starts", c.guessed.starts},
        {"amplitude", c.guessed.amplitude}}},
      {"extraction", {{"torque_eps", c.extraction.torque_eps}, {"speed_eps", c.extraction.speed_eps}}},
      {"lqr",
       {{"Q", matrix_json(c.track.weights.Q)},
        {"R", matrix_json(c.track.weights.R)},
        {"P_T", matrix_json(c.track.weights.P_T)},
        {"xi_only", c.track.weights.xi_only},
        {"perturbation", perturbation}}},
      {"rollout",
       {{"abs_tol", c.rollout.abs_tol}, {"rel_tol", c.rollout.rel_tol}, {"fixed_step", c.rollout.fixed_step}}},
  };
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  TranscriptionConfig& t = c.transcription;
  SolverOptions& s = c.homotopy.solver;
  bool guessed_given = false;
  apply(j, "",
        {{"scenario", [&](const json& v) { c.scenario = v.get<std::string>(); }},
         {"seed",
          [&](const json& v) {
            if (!v.is_number_unsigned()) throw std::invalid_argument("expected a non-negative integer");
            c.seed = v.get<unsigned>();
          }},
         {"plant", [&](const json& v) { c.plant = plant_from_json(v, c.plant); }},
         {"transcription",
          [&](const json& v) {
            apply(v, "transcription",
                  {{"n", integer(t.steps)},
                   {"T", number(t.horizon)},
                   {"w1", number(t.w_speed)},
                   {"w2", number(t.w_switch)},
                   {"w3", number(t.w_effort)},
                   {"w_slack", number(t.w_slack)},
                   {"alpha", number(t.alpha)},
                   {"beta", number(t.beta)},
                   {"zeta_max", number(t.zeta_max)},
                   {"x0", [&](const json& x) { read_state(x, "transcription.x0", t.x0); }}});
          }},
         {"homotopy",
          [&](const json& v) {
            apply(v, "homotopy",
                  {{"epsilons", [&](const json& e) { c.homotopy.epsilons = number_list(e); }},
                   {"tol", number(s.tol)},
                   {"feas_tol", number(s.feas_tol)},
                   {"max_iter", integer(s.max_iter)},
                   {"max_seconds",
                    [&](const json& e) { s.max_seconds = e.is_null() ? kInf : e.get<double>(); }},
                   {"mu_init", number(s.mu_init)},
                   {"warm_mu_init", number(c.homotopy.warm_mu_init)},
                   {"warm_bound_push", number(c.homotopy.warm_bound_push)}});
          }},
         {"optimize",
          [&](const json& v) {
            apply(v, "optimize",
                  {{"starts", integer(c.optimize.starts)},
                   {"amplitude", number(c.optimize.amplitude)},
                   {"presolve_epsilon", number(c.optimize.presolve_epsilon)},
                   {"min_speed", number(c.optimize.min_speed)},
                   {"time_budget", number(c.optimize.time_budget)}});
          }},
         {"guessed",
          [&](const json& v) {
            apply(v, "guessed",
                  {{"schedule",
                    [&](const json& e) {
                      guessed_given = true;
                      read_schedule(e, "guessed.schedule", c.guessed.schedule);
                    }},
                   {"starts", integer(c.guessed.starts)},
                   {"amplitude", number(c.guessed.amplitude)}});
          }},
         {"extraction",
          [&](const json& v) {
            apply(v, "extraction",
                  {{"torque_eps", number(c.extraction.torque_eps)}, {"speed_eps", number(c.extraction.speed_eps)}});
          }},
         {"lqr",
          [&](const json& v) {
            apply(v, "lqr",
                  {{"Q", weight_matrix(c.track.weights.Q)},
                   {"R", weight_matrix(c.track.weights.R)},
                   {"P_T", weight_matrix(c.track.weights.P_T)},
                   {"xi_only", boolean(c.track.weights.xi_only)},
                   {"perturbation", [&](const json& e) {
                      const std::vector<double> d = number_list(e);
                      if (d.size() != kStateDim) throw std::invalid_argument("expected 10 entries");
                      for (int i = 0; i < kStateDim; ++i) c.track.perturbation(i) = d[i];
                    }}});
          }},
         {"rollout", [&](const json& v) {
            apply(v, "rollout",
                  {{"abs_tol", number(c.rollout.abs_tol)},
                   {"rel_tol", number(c.rollout.rel_tol)},
                   {"fixed_step", number(c.rollout.fixed_step)}});
          }}});
  if (!guessed_given) {
    c.guessed.schedule = guessed_schedule(t.horizon);
  }
  c.guessed.schedule.horizon = t.horizon;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse config file '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(config).dump())));
  return buf;
}

}  // namespace ceropt
