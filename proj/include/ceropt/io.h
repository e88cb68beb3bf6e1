// Artifact persistence: versioned CSV tables and JSON documents.
//
// Every CSV starts with
//
//   # ceropt-csv v1 <kind>
//   # config_hash=<16 hex digits> seed=<n>
//   <column names>
//
// and readers reject other versions or kinds. Numbers are written with 17
// significant digits so that files round-trip exactly.
#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ceropt/event_sim.h"
#include "ceropt/homotopy.h"
#include "ceropt/hybrid_lqr.h"
#include "ceropt/mode_logic.h"
#include "ceropt/plant.h"
#include "ceropt/transcription.h"

namespace ceropt {

inline constexpr int kCsvVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ArtifactTag {
  std::string config_hash;
  unsigned seed = 0;
};

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

// Mode schedules: {"horizon", "switch_times", "modes": [["SEA","STG"], ...]}.
nlohmann::json to_json(const ModeSchedule& schedule);
ModeSchedule schedule_from_json(const nlohmann::json& j);

// State samples with the active modes and end-effector speed.
struct TrajectoryTable {
  ArtifactTag tag;
  std::vector<double> times;
  std::vector<StateVector> states;
  std::vector<ClutchPattern> patterns;
  std::vector<double> speed;
};

// Columns t, theta1, theta2, psi1, psi2, q1, q2, dpsi1, dpsi2, dq1, dq2,
// mode_j1, mode_j2, v_ee.
std::string trajectory_csv(const PlantParams& params, const std::vector<double>& times,
                           const std::vector<StateVector>& states, const std::vector<ClutchPattern>& patterns,
                           const ArtifactTag& tag);
// Rollout samples; the mode column is the interval each sample belongs to.
std::string trajectory_csv(const PlantParams& params, const Rollout& rollout, const ArtifactTag& tag);
// Transcription grid; modes from `schedule` at each grid time.
std::string trajectory_csv(const PlantParams& params, const Trajectory& traj, const ModeSchedule& schedule,
                           const ArtifactTag& tag);
TrajectoryTable parse_trajectory_csv(const std::string& text);

// Columns t0, u1, u2, zeta1..zeta4: one row per held interval [t0, t0 + dt).
std::string controls_csv(const Trajectory& traj, const ArtifactTag& tag);
std::string controls_csv(const ZeroOrderHold& controls, const ArtifactTag& tag);
ZeroOrderHold parse_controls_csv(const std::string& text);

// Columns t, err_closed, err_open (Euclidean state error to the reference).
std::string tracking_csv(const std::vector<double>& times, const std::vector<double>& closed,
                         const std::vector<double>& open, const ArtifactTag& tag);

// Gain schedule: per interval the time grid and row-major P and K, plus the
// jump records.
nlohmann::json to_json(const GainSchedule& gains);
GainSchedule gains_from_json(const nlohmann::json& j);

// Solver output for warm-start reuse.
struct SolutionSnapshot {
  ArtifactTag tag;
  int steps = 0;
  double horizon = 0.0;
  double epsilon = 0.0;
  std::string status;
  ObjectiveBreakdown objective;
  NlpSolution solution;
};

nlohmann::json to_json(const SolutionSnapshot& snapshot);
SolutionSnapshot snapshot_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ObjectiveBreakdown& objective);

}  // namespace ceropt
