// End-to-end acceptance run on the default scenario. Prints one PASS/FAIL
// line per criterion and exits nonzero if any fails.
//
//   ceropt_acceptance [config.json]
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "ceropt/config.h"
#include "ceropt/experiments.h"
#include "ceropt/mode_logic.h"

namespace ceropt {
namespace {

std::string format(const char* fmt, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, a, b, c, d);
  return buf;
}

struct Line {
  int id;
  std::string name;
  bool passed;
  std::string detail;
};

const CheckResult* find(const std::vector<CheckResult>& checks, const std::string& name) {
  for (const CheckResult& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

Eigen::MatrixXd reset_difference(const PlantParams& p, const StateVector& x, const ClutchPattern& pattern) {
  const double h = 1e-6;
  Eigen::MatrixXd J(kStateDim, kStateDim);
  for (int i = 0; i < kStateDim; ++i) {
    StateVector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const StateVector fp = reset_map(p, HybridState::from_vector(xp), pattern).to_vector() - xp;
    const StateVector fm = reset_map(p, HybridState::from_vector(xm), pattern).to_vector() - xm;
    J.col(i) = (fp - fm) / (2 * h);
  }
  return J;
}

// Riccati sweep along the optimized reference: symmetric PSD P, jump
// updates on the scheduled switches and H against differences of the reset
// map at the pre-switch reference states.
Line riccati_on_reference(const ExperimentConfig& c, const TrackingExperiment& ex, const CheckResult* oracle) {
  const GainSchedule& g = ex.gains;
  double asym = 0.0, min_eig = kInf, h_err = 0.0, congruence = 0.0;
  int nontrivial = 0;
  for (const GainInterval& iv : g.intervals)
    for (const Eigen::MatrixXd& P : iv.P) {
      asym = std::max(asym, (P - P.transpose()).cwiseAbs().maxCoeff() / std::max(1.0, P.norm()));
      const Eigen::MatrixXd S = 0.5 * (P + P.transpose());
      min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S).eigenvalues().minCoeff() /
                                      std::max(1.0, S.norm()));
    }
  const ModeSchedule& s = ex.reference.schedule();
  for (std::size_t i = 0; i < g.jumps.size(); ++i) {
    const JumpRecord& j = g.jumps[i];
    const StateVector x_minus = ex.reference.rollout.state_at(j.time);
    const Eigen::MatrixXd fd = reset_difference(c.plant, x_minus, s.patterns[i + 1]);
    h_err = std::max(h_err, relative_jacobian_error(j.H, fd));
    if (j.H.cwiseAbs().maxCoeff() > 0.0) ++nontrivial;
    const Eigen::MatrixXd IH = Eigen::MatrixXd::Identity(j.H.rows(), j.H.cols()) + j.H;
    const Eigen::MatrixXd expect = IH.transpose() * j.P_plus * IH;
    congruence = std::max(congruence, (j.P_minus - expect).cwiseAbs().maxCoeff() / std::max(1.0, expect.norm()));
  }
  const bool ok = oracle && oracle->passed && asym <= 1e-9 && min_eig >= -1e-9 && nontrivial >= 3 &&
                  h_err <= 1e-5 && congruence <= 1e-12;
  std::string detail = oracle ? oracle->detail : "oracle missing";
  detail += format("; %g switches with nonzero H, max H rel err %.2e, max asymmetry %.1e, min scaled eig %.1e",
                   nontrivial, h_err, asym, min_eig);
  return {8, "Riccati oracle and jump updates", ok, detail};
}

int run(const std::string& config_path) {
  const ExperimentConfig c = load_config(config_path);
  Logger log = Logger::from_env();
  std::vector<Line> lines;

  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const OptimizeResult free = optimize_free(c, log);
  const double free_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  const OptimizeResult guessed = optimize_guessed(c, log);
  const bool faster = free.found && guessed.found && free.speed >= 1.1 * guessed.speed;
  lines.push_back({1, "comparative speed gain", faster && free_seconds <= 600.0,
                   format("free %.4f m/s vs guessed %.4f m/s (gain %.1f%%), free solve %.1f s", free.speed,
                          guessed.speed, 100.0 * (free.speed / guessed.speed - 1.0), free_seconds)});

  std::vector<double> times;
  for (std::size_t k = 0; k < free.trajectory.states.size(); ++k) times.push_back(k * free.trajectory.dt);
  const MotionSignature sig = motion_signature(times, free.trajectory.states);
  lines.push_back({2, "countermovement", free.found && sig.countermovement(),
                   format("%g dq1 sign changes, first at %.3f s, |dq1| peaks at %.3f s",
                          static_cast<double>(sig.dq1_sign_changes.size()),
                          sig.dq1_sign_changes.empty() ? -1.0 : sig.dq1_sign_changes.front(), sig.peak_dq1_time)});
  lines.push_back({3, "proximo-distal ordering", free.found && sig.proximo_distal(),
                   format("argmax |dq1| at %.3f s, argmax |dq2| at %.3f s", sig.peak_dq1_time, sig.peak_dq2_time)});

  const SolveReport& rep = free.result.report;
  lines.push_back({4, "complementarity feasibility",
                   rep.converged() && rep.max_product <= 1e-6 && rep.max_defect <= 1e-8,
                   format("final stage eps %.0e: max product %.2e, max defect %.2e",
                          rep.eps_trace.empty() ? 0.0 : rep.eps_trace.back(), rep.max_product, rep.max_defect)});

  const CrossValidation cv = cross_validate(c.plant, free.trajectory, free.schedule, c.rollout);
  bool linear = cv.ratios.size() == 2;
  for (double r : cv.ratios) linear = linear && r >= 1.5 && r <= 2.5;
  lines.push_back({5, "event-sim cross-validation", cv.max_angle_deviation <= 0.05 && linear,
                   format("max angle deviation %.4f rad at 5 ms; replay deviations %.4f, %.4f, %.4f rad",
                          cv.max_angle_deviation, cv.replay_deviation[0], cv.replay_deviation[1],
                          cv.replay_deviation[2]) +
                       format(" (ratios %.2f, %.2f)", cv.ratios[0], cv.ratios[1])});

  const std::vector<CheckResult> checks = run_checks(c.plant, c.transcription, c.seed);
  auto from_check = [&](int id, const std::string& label, const std::string& name) {
    const CheckResult* r = find(checks, name);
    lines.push_back({id, label, r && r->passed, r ? r->detail : "check missing"});
  };
  from_check(6, "impact-law oracle", "impact_oracle");
  from_check(7, "derivative correctness", "derivatives");

  const TrackingExperiment ex = run_tracking(c.plant, c.transcription.x0, free.trajectory.control_hold(),
                                             free.schedule, c.track, c.rollout);
  lines.push_back(riccati_on_reference(c, ex, find(checks, "riccati_oracle")));

  TrackSettings heavy = c.track;
  heavy.weights.R *= 100.0;
  const TrackingExperiment ex_heavy = run_tracking(c.plant, c.transcription.x0, free.trajectory.control_hold(),
                                                   free.schedule, heavy, c.rollout);
  const bool damped = ex_heavy.closed.max_correction < ex.closed.max_correction;
  lines.push_back({9, "tracking improvement", ex.improvement() >= 0.5 && damped,
                   format("final error closed %.4f vs open %.4f (%.1f%% lower); ", ex.closed.final_error,
                          ex.open.final_error, 100.0 * ex.improvement()) +
                       format("peak |u - u_ref| %.3f, %.3f with 100x R", ex.closed.max_correction,
                              ex_heavy.closed.max_correction)});

  from_check(10, "switch-count penalty fidelity", "switch_penalty");

  bool all = true;
  for (const Line& l : lines) {
    std::printf("[%s] %2d %s: %s\n", l.passed ? "PASS" : "FAIL", l.id, l.name.c_str(), l.detail.c_str());
    all = all && l.passed;
  }
  return all ? 0 : 1;
}

}  // namespace
}  // namespace ceropt

int main(int argc, char** argv) {
  const std::string path = argc > 1 ? argv[1] : std::string(CEROPT_SOURCE_DIR) + "/configs/speed_max_T0.5.json";
  try {
    return ceropt::run(path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance: %s\n", e.what());
    return 1;
  }
}
