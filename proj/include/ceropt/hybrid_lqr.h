// Hybrid LQR tracking along a reference with time-scheduled switches.
//
// Within each mode interval P solves, backward from P(T) = P_T,
//
//   -P' = A^T P + P A - P S P + Q,   S = B R^-1 B^T,
//
// with A = df_p/dx and B = df_p/du along the reference. At a switch the
// reset map x+ = g_p(x-) gives the jump P(t-) = (I + H)^T P(t+) (I + H),
// H = dg_p/dx - I. Switching is time-scheduled, so the guard term of the
// general jump sensitivity vanishes and only H is needed. The feedback is
//
//   u = u_ref(t) - R^-1 B^T P(t) (x - x_ref(t)),
//
// clamped to the motor-speed bound.
#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ceropt/event_sim.h"
#include "ceropt/mode_logic.h"
#include "ceropt/plant.h"

namespace ceropt {

class RiccatiError : public std::runtime_error {
 public:
  RiccatiError(const std::string& what, int interval) : std::runtime_error(what), interval(interval) {}
  int interval;
};

// dg_p/dx - I at the pre-switch state x for the pattern switched to.
StateMatrix jump_sensitivity(const PlantParams& params, const StateVector& x_minus, const ClutchPattern& pattern_new);

// df_p/dx and df_p/du.
struct PlantLinearization {
  StateMatrix A;
  Eigen::Matrix<double, kStateDim, kControlDim> B;
};
PlantLinearization linearize(const PlantParams& params, const StateVector& x, const ControlVector& u,
                             const ClutchPattern& pattern);

struct GainInterval {
  double t0 = 0.0, t1 = 0.0;
  std::vector<double> times;          // increasing, from t0 to t1
  std::vector<Eigen::MatrixXd> P;     // Riccati solution at times
  std::vector<Eigen::MatrixXd> K;     // R^-1 B^T P at times
};

struct JumpRecord {
  double time = 0.0;
  Eigen::MatrixXd H;
  Eigen::MatrixXd P_plus;   // P(t+)
  Eigen::MatrixXd P_minus;  // (I + H)^T P(t+) (I + H)
};

struct GainSchedule {
  std::vector<GainInterval> intervals;  // one per mode interval, in time order
  std::vector<JumpRecord> jumps;        // one per switch, in time order
  Eigen::MatrixXd R;

  double horizon() const { return intervals.empty() ? 0.0 : intervals.back().t1; }
  // Linear interpolation inside the interval containing t, (t_k, t_k+1]
  // semantics.
  Eigen::MatrixXd riccati_at(double t) const;
  Eigen::MatrixXd gain_at(double t) const;
  int interval_at(double t) const;
};

struct RiccatiOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double initial_step = 1e-5;
  double max_norm = 1e12;  // blow-up cap on |P|
};

// Generic linear time-varying problem: A(t), B(t) on mode interval k, and
// H for every switch.
struct LinearHybridSystem {
  double horizon = 0.0;
  std::vector<double> switch_times;
  std::function<void(double t, int interval, Eigen::MatrixXd& A, Eigen::MatrixXd& B)> linearization;
  std::vector<Eigen::MatrixXd> jump_sensitivities;  // one per switch
};

GainSchedule riccati_sweep(const LinearHybridSystem& system, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                           const Eigen::MatrixXd& P_T, const RiccatiOptions& options = {});

// Open-loop reference: the event-sim rollout of ZOH controls under a
// schedule. The motor-speed reference is the control itself.
struct Reference {
  Rollout rollout;
  ZeroOrderHold controls;

  const ModeSchedule& schedule() const { return rollout.schedule; }
  StateVector state(double t) const { return rollout.state_at(t); }
  ControlVector control(double t) const { return controls.at(t); }
};

Reference make_reference(const PlantParams& params, const HybridState& x0, const ZeroOrderHold& controls,
                         const ModeSchedule& schedule, const RolloutOptions& options = {});

struct LqrWeights {
  StateMatrix Q = StateMatrix::Identity();
  Eigen::Matrix2d R = 0.1 * Eigen::Matrix2d::Identity();
  StateMatrix P_T = StateMatrix::Identity();
  // Feed back only the xi = (psi, q) error instead of the full state.
  bool xi_only = false;
};

GainSchedule riccati_sweep(const PlantParams& params, const Reference& reference, const LqrWeights& weights,
                           const RiccatiOptions& options = {});

struct FeedbackLaw {
  const Reference* reference = nullptr;
  const GainSchedule* gains = nullptr;
  double u_max = 4.5;
  bool xi_only = false;

  // Unclamped correction -K(t) (x - x_ref(t)).
  ControlVector correction(double t, const StateVector& x) const;
  ControlVector operator()(double t, const StateVector& x) const;
};

ControlVector feedback(const StateVector& x, double t, const Reference& reference, const GainSchedule& gains,
                       double u_max = 4.5, bool xi_only = false);

struct TrackResult {
  Rollout rollout;
  int saturated_samples = 0;     // samples where a motor command hit the bound
  double max_correction = 0.0;   // max |u - u_ref| over samples, after clamping
  double final_error = 0.0;      // |x(T) - x_ref(T)|
  double max_error = 0.0;        // max_t |x(t) - x_ref(t)|
};

TrackResult track(const PlantParams& params, const HybridState& x0, const Reference& reference,
                  const GainSchedule& gains, const LqrWeights& weights, const RolloutOptions& options = {});

// The same rollout without feedback, for comparison.
TrackResult open_loop(const PlantParams& params, const HybridState& x0, const Reference& reference,
                      const RolloutOptions& options = {});

}  // namespace ceropt
