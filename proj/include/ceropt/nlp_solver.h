// Primal-dual interior-point solver for sparse smooth NLPs
//
//   min f(x)  s.t.  g_l <= g(x) <= g_u,  x_l <= x <= x_u.
//
// Rows with g_l == g_u are equalities; every other row gets a bounded slack.
// Steps come from the regularized KKT system, factorized with a sparse LDL^T
// whose pivot signs give the inertia. Globalization is a filter line search
// with second-order corrections and a feasibility restoration phase.
#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace ceropt {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  virtual int num_variables() const = 0;
  virtual int num_constraints() const = 0;
  virtual void bounds(Eigen::VectorXd& x_l, Eigen::VectorXd& x_u, Eigen::VectorXd& g_l,
                      Eigen::VectorXd& g_u) const = 0;

  virtual double objective(const Eigen::VectorXd& x) const = 0;
  virtual void gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const = 0;
  virtual void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& g) const = 0;

  // Fixed sparsity, (row, col) per value. Duplicates are summed.
  virtual std::vector<std::pair<int, int>> jacobian_structure() const = 0;
  virtual void jacobian_values(const Eigen::VectorXd& x, Eigen::VectorXd& values) const = 0;

  // Lower triangle (row >= col) of obj_factor * H_f + sum_i lambda_i H_gi.
  virtual std::vector<std::pair<int, int>> hessian_structure() const = 0;
  virtual void hessian_values(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd& lambda,
                              Eigen::VectorXd& values) const = 0;
};

enum class SolveStatus { kConverged, kMaxIterations, kInfeasible, kRestorationFailed, kNumericalError, kUserStop };

const char* to_string(SolveStatus status);

struct SolverOptions {
  double tol = 1e-6;       // scaled stationarity and complementarity
  double feas_tol = 1e-8;  // max constraint violation, unscaled
  int max_iter = 3000;
  double max_seconds = kInf;

  double mu_init = 0.1;
  double mu_min = -1.0;  // < 0: tol / 10
  double kappa_eps = 10.0;
  double kappa_mu = 0.2;
  double theta_mu = 1.5;
  double tau_min = 0.99;
  double kappa_sigma = 1e10;

  double bound_push = 1e-2;
  double bound_frac = 1e-2;

  // KKT regularization.
  double delta_w_init = 1e-8;
  double delta_w_min = 1e-20;
  double delta_w_max = 1e40;
  double delta_c = 1e-8;  // dual regularization of the factorization
  int refinement_steps = 10;

  bool gradient_scaling = true;
  double scaling_max_gradient = 100.0;

  int max_soc = 4;
  bool allow_restoration = true;

  // Line-oriented iteration log; null disables.
  std::ostream* log = nullptr;
  std::string log_prefix;
};

// Multipliers use the sign convention L = f + lambda^T g - z_l^T (x - x_l) - z_u^T (x_u - x).
struct NlpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;
  Eigen::VectorXd z_lower;
  Eigen::VectorXd z_upper;
  double objective = 0.0;
};

struct NlpReport {
  SolveStatus status = SolveStatus::kNumericalError;
  int iterations = 0;
  int restoration_iterations = 0;
  int restoration_calls = 0;
  double objective = 0.0;
  double constraint_violation = 0.0;  // unscaled, inf-norm
  double dual_infeasibility = 0.0;    // scaled
  double complementarity = 0.0;       // scaled
  double final_mu = 0.0;
  double wall_seconds = 0.0;
};

// Per-iteration hook; returning true stops the solve with kUserStop.
struct IterateView {
  int iteration;
  const Eigen::VectorXd& x;
  const Eigen::VectorXd& slacks;  // one per inequality row, in row order
  double mu;
  double objective;  // scaled
  double infeasibility;
};
using IterationCallback = std::function<bool(const IterateView&)>;

struct WarmStart {
  Eigen::VectorXd lambda;   // optional, size m
  Eigen::VectorXd z_lower;  // optional, size n
  Eigen::VectorXd z_upper;  // optional, size n
};

std::pair<NlpSolution, NlpReport> solve_nlp(const NlpProblem& problem, const Eigen::VectorXd& x0,
                                            const SolverOptions& options = {}, const WarmStart* warm = nullptr,
                                            const IterationCallback& callback = nullptr);

// Unscaled max violation of bounds and constraints at x.
double constraint_violation(const NlpProblem& problem, const Eigen::VectorXd& x);

}  // namespace ceropt
