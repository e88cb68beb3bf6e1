// Experiment configuration and its JSON form.
//
// Plant keys follow the symbols of the published parameter table
// (B_theta, B_psi, B_L, m_L, r_L, K, tau_C_q, d_q, tau_C_psi, d_psi,
// tau_m, theta_max, phi_max, tau_s_max) plus l_L, g, gravity_angle,
// friction_smoothing and u_max. Unknown keys are rejected everywhere.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ceropt/homotopy.h"
#include "ceropt/hybrid_lqr.h"
#include "ceropt/mode_logic.h"
#include "ceropt/plant.h"
#include "ceropt/transcription.h"

namespace ceropt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Multi-start settings of the free (contact-implicit) solve.
struct OptimizeSettings {
  int starts = 4;                 // seeds seed, seed + 1, ...
  double amplitude = 2.0;         // motor-speed amplitude of the seed rollouts [rad/s]
  double presolve_epsilon = 1e-1; // relaxation of the switch-free pre-solve
  double min_speed = 0.1;         // solutions slower than this are rejected [m/s]
  double time_budget = 540.0;     // no new start begins after this many seconds
};

// The hand-designed sequence compared against.
struct GuessedSettings {
  ModeSchedule schedule;
  int starts = 4;
  double amplitude = 2.0;
};

struct TrackSettings {
  LqrWeights weights;
  StateVector perturbation = StateVector::Zero();  // added to x0 for the tracking run
};

struct ExperimentConfig {
  std::string scenario = "speed_max_T0.5";
  unsigned seed = 1;
  PlantParams plant;
  TranscriptionConfig transcription;
  HomotopyOptions homotopy;
  OptimizeSettings optimize;
  GuessedSettings guessed;
  ExtractionThresholds extraction;
  TrackSettings track;
  RolloutOptions rollout;

  ExperimentConfig();
  // Throws ConfigError naming the offending field.
  void validate() const;
};

// The guessed sequence: J1 SEA / J2 STG, then J1 DEC / J2 SEA at 0.82 T
// (0.41 s for T = 0.5 s).
ModeSchedule guessed_schedule(double horizon = 0.5);

nlohmann::json to_json(const ExperimentConfig& config);
// Missing keys keep their defaults; unknown keys and bad values throw
// ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

nlohmann::json to_json(const PlantParams& params);
PlantParams plant_from_json(const nlohmann::json& j, PlantParams base = {});

// FNV-1a 64 over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);
std::uint64_t fnv1a64(const std::string& data);

}  // namespace ceropt
