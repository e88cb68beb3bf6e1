// Experiment orchestration shared by the command-line tool, the acceptance
// runner and the Python bindings.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ceropt/config.h"
#include "ceropt/event_sim.h"
#include "ceropt/homotopy.h"
#include "ceropt/hybrid_lqr.h"
#include "ceropt/mode_logic.h"
#include "ceropt/transcription.h"

namespace ceropt {

// Progress output. Level 0 is silent, 1 prints one line per solve, 2 adds
// the solver iteration log.
struct Logger {
  std::ostream* out = nullptr;
  int level = 1;

  // Level from CEROPT_LOG (default 1), writing to stderr.
  static Logger from_env();
  void line(const std::string& text) const;
  std::ostream* solver_log() const { return level >= 2 ? out : nullptr; }
};

struct StartRecord {
  unsigned seed = 0;
  SolveStatus status = SolveStatus::kNumericalError;
  double speed = 0.0;  // |v_EE(T)| [m/s]
  double wall_seconds = 0.0;
  bool accepted = false;  // converged and faster than min_speed
};

struct OptimizeResult {
  bool found = false;  // at least one start accepted
  unsigned seed = 0;   // seed of the returned start
  HomotopyResult result;
  Trajectory trajectory;
  ModeSchedule schedule;  // extracted from the clutch torques
  double speed = 0.0;
  std::vector<StartRecord> starts;
  double wall_seconds = 0.0;
};

// Contact-implicit solve. Per start: seed rollout under SEA/SEA, pre-solve
// without the switching term at presolve_epsilon, then the full homotopy.
// Returns the fastest accepted start.
OptimizeResult optimize_free(const ExperimentConfig& config, const Logger& log = {});

// Fixed-schedule solve of the guessed sequence, best over its starts.
OptimizeResult optimize_guessed(const ExperimentConfig& config, const Logger& log = {});

// One free start (exposed for tests and the bindings).
HomotopyResult solve_free_start(const ExperimentConfig& config, unsigned seed, const Logger& log = {});

// Time of every sign change of dq1 and the argmax times of |dq1|, |dq2|.
struct MotionSignature {
  std::vector<double> dq1_sign_changes;
  double peak_dq1_time = 0.0;
  double peak_dq2_time = 0.0;
  double peak_dq1 = 0.0;
  double peak_dq2 = 0.0;
  // A sign change precedes the final acceleration phase, which starts at the
  // last sign change of dq1 before its peak.
  bool countermovement() const;
  bool proximo_distal() const { return peak_dq1_time < peak_dq2_time; }
};

MotionSignature motion_signature(const std::vector<double>& times, const std::vector<StateVector>& states);

// Event-sim replay of the optimized controls under the extracted schedule.
struct CrossValidation {
  double max_angle_deviation = 0.0;  // transcription grid vs event-sim [rad]
  // Backward-Euler replay of the same controls and schedule at refined steps
  // against event-sim.
  std::vector<double> deltas;
  std::vector<double> replay_deviation;
  std::vector<double> ratios;  // deviation(delta) / deviation(delta / 2)
  Rollout rollout;
};

CrossValidation cross_validate(const PlantParams& params, const Trajectory& traj, const ModeSchedule& schedule,
                               const RolloutOptions& options = {}, const std::vector<int>& refinements = {1, 2, 4});

// Closed loop against open loop from the perturbed initial state.
struct TrackingExperiment {
  Reference reference;
  GainSchedule gains;
  TrackResult closed;
  TrackResult open;
  double improvement() const;  // 1 - closed.final_error / open.final_error
  std::vector<double> times;   // common sample grid for the error CSV
  std::vector<double> closed_error, open_error;
};

TrackingExperiment run_tracking(const PlantParams& params, const HybridState& x0, const ZeroOrderHold& controls,
                                const ModeSchedule& schedule, const TrackSettings& settings,
                                const RolloutOptions& options = {}, int error_samples = 501);

// Diagnostics battery.
struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Parameters are used as given (no validation), so corrupted models can be
// diagnosed.
std::vector<CheckResult> run_checks(const PlantParams& params, const TranscriptionConfig& transcription,
                                    unsigned seed = 1);

// Independent impact oracle: minimize |v - v-|^2 in the Pi metric subject to
// C v = 0, by a dense KKT solve.
Eigen::Vector4d projection_oracle(const Eigen::Matrix4d& Pi, const Eigen::MatrixXd& C, const Eigen::Vector4d& v_minus);

// Error of an analytic Jacobian against central differences, relative to the
// largest entry of each row (at least 1): rows of a dynamics Jacobian differ
// by orders of magnitude, and exact zeros carry difference noise.
double relative_jacobian_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric);

}  // namespace ceropt
