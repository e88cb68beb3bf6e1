// Contact-implicit transcription of the speed-maximization problem.
//
// Backward-Euler steps k = 1..n over (t_{k-1}, t_k], t_k = k delta. Step k
// carries the end state x^k, the motor speed u^k and the clutch torques
// zeta^k; x^0 is fixed. Per step, scaled by 1/delta:
//
//   (theta^k - theta^{k-1}) / delta = u^k
//   (xi^k - xi^{k-1}) / delta       = xi'^k
//   Pi^k (xi'^k - xi'^{k-1}) / delta + eta^k + tau^k + tau_f^k = Gamma^T zeta^k
//
// Clutch torques split as zeta = pi - nu, with the relaxed complementarity
//
//   gamma + phi >= 0,  gamma - phi >= 0,  (gamma + phi) pi <= eps,  (gamma - phi) nu <= eps
//
// where phi^k = Gamma xi'^k. A fixed-schedule variant replaces the
// complementarity block by phi_i^k = 0 for engaged constraints and drops
// zeta for the disengaged ones.
#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "ceropt/event_sim.h"
#include "ceropt/mode_logic.h"
#include "ceropt/nlp_solver.h"
#include "ceropt/plant.h"

namespace ceropt {

struct TranscriptionConfig {
  int steps = 100;
  double horizon = 0.5;
  double w_speed = 1.0;
  double w_switch = 0.1;
  double w_effort = 1e-3;
  double alpha = 100.0;
  double beta = 500.0;
  double zeta_max = 50.0;
  double w_slack = 1e-4;  // linear weight on pi + nu + gamma; pins their free common mode
  double epsilon = 1e-1;
  HybridState x0;

  double delta() const { return horizon / steps; }
  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

using Matrix4Cols = Eigen::Matrix<double, Eigen::Dynamic, 4>;
using Matrix2Cols = Eigen::Matrix<double, Eigen::Dynamic, 2>;

// Unpacked decision vector. states has n + 1 entries (x^0 first); the
// per-step matrices have one row per step k = 1..n.
struct Trajectory {
  double dt = 0.0;
  std::vector<StateVector> states;
  Matrix2Cols controls;
  Matrix4Cols zeta, pi, nu, gamma;

  int steps() const { return static_cast<int>(controls.rows()); }
  Matrix4Cols phi() const;  // Gamma xi'^k
  ZeroOrderHold control_hold() const;
};

// Unscaled backward-Euler residual for one step (units of x).
Eigen::Matrix<double, kStateDim, 1> dynamics_defect(const PlantParams& params, const StateVector& x_prev,
                                                    const StateVector& x_next, const ControlVector& u,
                                                    const Eigen::Vector4d& zeta, double delta);

struct ComplementarityResiduals {
  Eigen::Vector4d slack_pos;     // gamma + phi      (>= 0)
  Eigen::Vector4d slack_neg;     // gamma - phi      (>= 0)
  Eigen::Vector4d product_pos;   // (gamma + phi) pi (<= eps)
  Eigen::Vector4d product_neg;   // (gamma - phi) nu (<= eps)
  Eigen::Vector4d pi, nu, gamma;

  bool feasible(double epsilon, double tol = 0.0) const;
  double max_product() const;
};

ComplementarityResiduals complementarity_residuals(const Eigen::Vector4d& phi, const Eigen::Vector4d& pi,
                                                   const Eigen::Vector4d& nu, const Eigen::Vector4d& gamma);

struct ObjectiveBreakdown {
  double speed = 0.0;      // -|v_EE(t_n)|^2
  double switching = 0.0;  // smoothed count of indicator sign changes
  double effort = 0.0;     // sum |u^k|^2
  double slack = 0.0;      // sum of pi + nu + gamma
  double total = 0.0;      // weighted sum
};

// Unweighted switching term over rows of zeta.
double switch_penalty(const Matrix4Cols& zeta, double alpha, double beta);

ObjectiveBreakdown objective(const PlantParams& params, const TranscriptionConfig& config, const Trajectory& traj);

// Variable indices of one step; -1 marks quantities that are not variables.
struct StepLayout {
  std::array<int, kStateDim> x;
  std::array<int, kControlDim> u;
  std::array<int, 4> zeta, pi, nu, gamma;
};

class TranscriptionProblem final : public NlpProblem {
 public:
  // Contact-implicit problem with free clutch torques.
  TranscriptionProblem(const PlantParams& params, const TranscriptionConfig& config);
  // Clutch pattern per step fixed by a schedule (pattern active at t_k).
  TranscriptionProblem(const PlantParams& params, const TranscriptionConfig& config, const ModeSchedule& schedule);

  const PlantParams& params() const { return params_; }
  const TranscriptionConfig& config() const { return config_; }
  bool fixed_schedule() const { return fixed_; }
  const StepLayout& layout(int k) const { return layout_[k - 1]; }
  const ClutchPattern& step_pattern(int k) const { return patterns_[k - 1]; }
  void set_epsilon(double epsilon);

  Trajectory unpack(const Eigen::VectorXd& z) const;
  // Quantities that are not variables in this layout are ignored.
  Eigen::VectorXd pack(const Trajectory& traj) const;

  // Warm start for a smaller epsilon: cancels common parts of pi and nu
  // (zeta unchanged) and lowers gamma toward |phi| so that both products
  // drop below `fraction` * epsilon where the current torques allow it.
  Eigen::VectorXd tighten_complementarity(const Eigen::VectorXd& z, double epsilon, double fraction = 0.5) const;

  double max_dynamics_defect(const Eigen::VectorXd& z) const;  // unscaled, inf-norm
  double max_complementarity_product(const Eigen::VectorXd& z) const;
  ObjectiveBreakdown objective_breakdown(const Eigen::VectorXd& z) const;

  int num_variables() const override { return num_vars_; }
  int num_constraints() const override { return num_rows_; }
  void bounds(Eigen::VectorXd& x_l, Eigen::VectorXd& x_u, Eigen::VectorXd& g_l,
              Eigen::VectorXd& g_u) const override;
  double objective(const Eigen::VectorXd& z) const override;
  void gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const override;
  void constraints(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override;
  std::vector<std::pair<int, int>> jacobian_structure() const override;
  void jacobian_values(const Eigen::VectorXd& z, Eigen::VectorXd& values) const override;
  std::vector<std::pair<int, int>> hessian_structure() const override;
  void hessian_values(const Eigen::VectorXd& z, double obj_factor, const Eigen::VectorXd& lambda,
                      Eigen::VectorXd& values) const override;

  // Row offsets, for tests and diagnostics.
  int defect_row(int k) const { return row_offset_[k - 1]; }

 private:
  void build(const std::vector<ClutchPattern>* patterns);
  StateVector state(const Eigen::VectorXd& z, int k) const;
  template <typename Emit>
  void jacobian_entries(const Eigen::VectorXd& z, Emit&& emit) const;
  template <typename Emit>
  void hessian_entries(const Eigen::VectorXd& z, double obj_factor, const Eigen::VectorXd& lambda,
                       Emit&& emit) const;

  PlantParams params_;
  TranscriptionConfig config_;
  bool fixed_ = false;
  std::vector<ClutchPattern> patterns_;
  std::vector<StepLayout> layout_;
  std::vector<int> row_offset_;
  int num_vars_ = 0;
  int num_rows_ = 0;
};

// Physically consistent seed: event-sim rollout under `schedule` with smooth
// pseudo-random motor speeds drawn from `seed`, sampled on the grid. Clutch
// torques come from the constraint torque, pi/nu are its positive and
// negative parts and gamma = |phi| + 0.1.
Trajectory seed_trajectory(const PlantParams& params, const TranscriptionConfig& config,
                           const ModeSchedule& schedule, unsigned seed, double amplitude = 0.5);

// Fixed-schedule replay: solves the backward-Euler step for given controls
// with the engaged constraints of each step enforced (Newton per step).
Trajectory backward_euler_replay(const PlantParams& params, const HybridState& x0, const ZeroOrderHold& controls,
                                 const ModeSchedule& schedule, int steps);

}  // namespace ceropt
