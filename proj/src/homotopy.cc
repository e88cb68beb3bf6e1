#include "ceropt/homotopy.h"

#include <algorithm>
#include <chrono>
#include <sstream>
#include <stdexcept>

namespace ceropt {

void validate_epsilon_schedule(const std::vector<double>& epsilons) {
  if (epsilons.empty()) throw std::invalid_argument("epsilon schedule is empty");
  for (size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0)) throw std::invalid_argument("epsilon schedule entries must be positive");
    if (i > 0 && !(epsilons[i] < epsilons[i - 1]))
      throw std::invalid_argument("epsilon schedule must be strictly decreasing");
  }
}

namespace {

StageReport stage_report(const TranscriptionProblem& problem, double epsilon, const NlpSolution& sol,
                         const NlpReport& nlp) {
  StageReport s;
  s.epsilon = epsilon;
  s.nlp = nlp;
  s.objective = problem.objective_breakdown(sol.x);
  s.max_defect = problem.max_dynamics_defect(sol.x);
  s.max_product = problem.max_complementarity_product(sol.x);
  return s;
}

void finish(SolveReport& r, const StageReport& s) {
  r.objective = s.objective;
  r.max_defect = s.max_defect;
  r.max_product = s.max_product;
}

}  // namespace

HomotopyResult solve_relaxed(TranscriptionProblem& problem, double epsilon, const Eigen::VectorXd& z0,
                             const SolverOptions& options, const WarmStart* warm) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("relaxation epsilon must be positive");
  problem.set_epsilon(epsilon);
  HomotopyResult out;
  auto [sol, nlp] = solve_nlp(problem, z0, options, warm);
  const StageReport s = stage_report(problem, epsilon, sol, nlp);
  out.solution = std::move(sol);
  out.report.status = nlp.status;
  out.report.eps_trace = {epsilon};
  out.report.stages = {s};
  out.report.iterations = nlp.iterations;
  out.report.wall_seconds = nlp.wall_seconds;
  finish(out.report, s);
  return out;
}

HomotopyResult solve_homotopy(TranscriptionProblem& problem, const Eigen::VectorXd& z0,
                              const HomotopyOptions& options, const WarmStart* warm0) {
  validate_epsilon_schedule(options.epsilons);
  const auto start = std::chrono::steady_clock::now();
  HomotopyResult best;
  bool have_best = false;
  SolveReport report;
  Eigen::VectorXd z = z0;
  WarmStart warm;
  if (warm0) warm = *warm0;
  for (size_t i = 0; i < options.epsilons.size(); ++i) {
    const double eps = options.epsilons[i];
    SolverOptions opt = options.solver;
    std::ostringstream prefix;
    prefix << options.solver.log_prefix << "eps=" << eps << " ";
    opt.log_prefix = prefix.str();
    const bool is_warm = i > 0 || warm0 != nullptr;
    if (is_warm) {
      opt.mu_init = std::min({opt.mu_init, options.warm_mu_init, eps});
      opt.bound_push = std::min(opt.bound_push, options.warm_bound_push);
      opt.bound_frac = std::min(opt.bound_frac, options.warm_bound_push);
    }
    if (is_warm) z = problem.tighten_complementarity(z, eps);
    HomotopyResult stage = solve_relaxed(problem, eps, z, opt, is_warm ? &warm : nullptr);
    report.eps_trace.push_back(eps);
    report.stages.push_back(stage.report.stages.front());
    report.iterations += stage.report.iterations;
    if (stage.report.status != SolveStatus::kConverged) {
      report.status = stage.report.status;
      std::ostringstream a;
      a << "stage eps=" << eps << " ended with " << to_string(stage.report.status);
      if (have_best) {
        a << "; returning stage eps=" << best.report.eps_trace.back();
        finish(report, best.report.stages.back());
      } else {
        best.solution = stage.solution;
        finish(report, stage.report.stages.front());
      }
      report.annotation = a.str();
      break;
    }
    best = stage;
    have_best = true;
    report.status = SolveStatus::kConverged;
    finish(report, stage.report.stages.front());
    z = stage.solution.x;
    warm.lambda = stage.solution.lambda;
    warm.z_lower = stage.solution.z_lower;
    warm.z_upper = stage.solution.z_upper;
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  problem.set_epsilon(report.eps_trace.empty() ? options.epsilons.back() : report.eps_trace.back());
  best.report = report;
  return best;
}

}  // namespace ceropt
