// Relaxation homotopy over the complementarity tolerance epsilon.
#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "ceropt/nlp_solver.h"
#include "ceropt/transcription.h"

namespace ceropt {

struct StageReport {
  double epsilon = 0.0;
  NlpReport nlp;
  ObjectiveBreakdown objective;
  double max_defect = 0.0;   // unscaled dynamics residual, inf-norm
  double max_product = 0.0;  // max complementarity product
};

struct SolveReport {
  SolveStatus status = SolveStatus::kNumericalError;
  std::string annotation;  // set when a stage failed and an earlier one is returned
  ObjectiveBreakdown objective;
  double max_defect = 0.0;
  double max_product = 0.0;
  std::vector<double> eps_trace;  // epsilon of every attempted stage
  std::vector<StageReport> stages;
  int iterations = 0;
  double wall_seconds = 0.0;

  bool converged() const { return status == SolveStatus::kConverged; }
};

struct HomotopyOptions {
  std::vector<double> epsilons = {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  SolverOptions solver;
  // Barrier parameter cap for warm-started stages; epsilon also caps it.
  double warm_mu_init = 1e-4;
  // Bound push for warm-started stages; small keeps the previous solution.
  double warm_bound_push = 1e-8;
};

struct HomotopyResult {
  NlpSolution solution;
  SolveReport report;
};

// Throws std::invalid_argument unless the schedule is non-empty, positive and
// strictly decreasing.
void validate_epsilon_schedule(const std::vector<double>& epsilons);

// One stage at the given epsilon. Fixed-schedule problems ignore epsilon.
HomotopyResult solve_relaxed(TranscriptionProblem& problem, double epsilon, const Eigen::VectorXd& z0,
                             const SolverOptions& options = {}, const WarmStart* warm = nullptr);

// Chains solve_relaxed over the schedule, warm-starting primal and dual
// variables. On a failed stage the last converged stage is returned with the
// failure status and an annotation. A warm start, when given, makes the first
// stage warm as well.
HomotopyResult solve_homotopy(TranscriptionProblem& problem, const Eigen::VectorXd& z0,
                              const HomotopyOptions& options = {}, const WarmStart* warm = nullptr);

}  // namespace ceropt
