#include "ceropt/experiments.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <random>
#include <sstream>

#include <Eigen/Dense>

namespace ceropt {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double end_speed(const ObjectiveBreakdown& o) { return std::sqrt(std::max(0.0, -o.speed)); }

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

HomotopyOptions with_log(HomotopyOptions options, const Logger& log, const std::string& prefix) {
  options.solver.log = log.solver_log();
  options.solver.log_prefix = prefix;
  return options;
}

Eigen::MatrixXd central_difference(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    jac.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return jac;
}

// Moderate velocities keep finite differences away from the friction knee.
HybridState random_state(std::mt19937& rng) {
  std::uniform_real_distribution<double> angle(-1.0, 1.0);
  std::uniform_real_distribution<double> speed(0.5, 3.0);
  std::bernoulli_distribution sign(0.5);
  auto v = [&] { return sign(rng) ? speed(rng) : -speed(rng); };
  HybridState s;
  s.theta = {angle(rng), angle(rng)};
  s.psi = {s.theta[0] + 0.2 * angle(rng), s.theta[1] + 0.2 * angle(rng)};
  s.q = {angle(rng), angle(rng)};
  s.dpsi = {v(), v()};
  s.dq = {v(), v()};
  return s;
}

Eigen::MatrixXd dense_jacobian(const NlpProblem& p, const Eigen::VectorXd& z) {
  const auto s = p.jacobian_structure();
  Eigen::VectorXd v(s.size());
  p.jacobian_values(z, v);
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(p.num_constraints(), p.num_variables());
  for (size_t e = 0; e < s.size(); ++e) j(s[e].first, s[e].second) += v(e);
  return j;
}

CheckResult check(const std::string& name, bool passed, const std::string& detail) { return {name, passed, detail}; }

CheckResult check_mass_matrix(const PlantParams& p) {
  double worst = kInf;
  bool symmetric = true;
  const int n = 100;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      HybridState s;
      s.q = {-M_PI + 2 * M_PI * a / (n - 1), -M_PI + 2 * M_PI * b / (n - 1)};
      const Eigen::Matrix4d Pi = eval_model(p, s).Pi;
      symmetric = symmetric && Pi.isApprox(Pi.transpose(), 1e-14);
      worst = std::min(worst, Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(Pi).eigenvalues().minCoeff());
    }
  }
  return check("mass_matrix_pd", symmetric && worst > 0, format("min eigenvalue %.3e on a 100x100 grid", worst));
}

CheckResult check_energy(PlantParams p) {
  p.coulomb_link = p.visc_link = p.coulomb_spring = p.visc_spring = {0.0, 0.0};
  HybridState s;
  s.theta = {0.05, -0.05};
  s.psi = {0.02, -0.02};
  s.q = {0.3, -0.4};
  RolloutOptions opt;
  opt.abs_tol = opt.rel_tol = 1e-10;
  double drift = kInf;
  std::string failure;
  try {
    const Rollout r = rollout(p, s, [](double, const StateVector&) { return ControlVector::Zero(); },
                              ModeSchedule::constant(ClutchPattern{}, 1.0), 1.0, opt);
    const double e0 = mechanical_energy(p, s);
    drift = 0.0;
    for (const auto& x : r.states)
      drift = std::max(drift, std::abs(mechanical_energy(p, HybridState::from_vector(x)) - e0) / std::abs(e0));
    if (!std::isfinite(drift)) drift = kInf;
  } catch (const std::exception& e) {
    drift = kInf;
    failure = std::string(": ") + e.what();
  }
  return check("energy_conservation", drift <= 1e-6,
               format("relative drift %.3e over 1 s, frictionless, clutches open", drift) + failure);
}

CheckResult check_friction(const PlantParams& p, std::mt19937& rng) {
  double worst = kInf;
  for (int i = 0; i < 1000; ++i) {
    const HybridState s = random_state(rng);
    worst = std::min(worst, s.dxi().dot(eval_model(p, s).tau_f));
  }
  return check("friction_dissipative", worst >= 0, format("min dxi . tau_f = %.3e", worst));
}

CheckResult check_impact(const PlantParams& p, std::mt19937& rng) {
  double err = 0.0, gain = -kInf, residual = 0.0;
  for (int i = 0; i < 100; ++i) {
    const HybridState s = random_state(rng);
    const auto e = eval_model(p, s);
    for (int idx = 0; idx < 16; ++idx) {
      const auto c = constraint_jacobian(ClutchPattern::from_index(idx));
      const Eigen::Vector4d v = impact(e, c, s.dxi()).dxi_plus;
      const Eigen::Vector4d oracle = projection_oracle(e.Pi, c, s.dxi());
      err = std::max(err, (v - oracle).cwiseAbs().maxCoeff());
      gain = std::max(gain, 0.5 * v.dot(e.Pi * v) - 0.5 * s.dxi().dot(e.Pi * s.dxi()));
      if (c.rows() > 0) residual = std::max(residual, (c * v).cwiseAbs().maxCoeff());
    }
  }
  return check("impact_oracle", err <= 1e-10 && gain <= 1e-12 && residual <= 1e-12,
               format("max |v+ - oracle| %.2e, max dKE %.2e, max |C v+| %.2e", err, gain, residual));
}

CheckResult check_derivatives(const PlantParams& p, const TranscriptionConfig& base, std::mt19937& rng) {
  double worst = 0.0;
  std::string where = "none";
  auto note = [&](double e, const char* what) {
    if (e > worst) {
      worst = e;
      where = what;
    }
  };
  // Plant linearization.
  for (int i = 0; i < 100; ++i) {
    const HybridState s = random_state(rng);
    const ClutchPattern pattern = ClutchPattern::from_index(i % 16);
    const ControlVector u(0.3 * (i % 3), -0.2);
    const PlantLinearization lin = linearize(p, s.to_vector(), u, pattern);
    const Eigen::MatrixXd fd_a = central_difference(
        [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(vector_field(p, x, u, pattern)); }, s.to_vector());
    const Eigen::MatrixXd fd_b = central_difference(
        [&](const Eigen::VectorXd& v) { return Eigen::VectorXd(vector_field(p, s.to_vector(), v, pattern)); }, u);
    note(relative_jacobian_error(lin.A, fd_a), "dynamics A");
    note(relative_jacobian_error(lin.B, fd_b), "dynamics B");
    const StateMatrix H = jump_sensitivity(p, s.to_vector(), pattern);
    const Eigen::MatrixXd fd_h = central_difference(
        [&](const Eigen::VectorXd& x) {
          return Eigen::VectorXd(reset_map(p, HybridState::from_vector(x), pattern).to_vector() - x);
        },
        s.to_vector());
    note(relative_jacobian_error(H, fd_h), "reset map");
  }
  // Objective and constraints of a short free transcription.
  TranscriptionConfig c = base;
  c.steps = 2;
  c.horizon = 2 * base.delta();
  c.x0 = HybridState{};
  const TranscriptionProblem prob(p, c);
  std::uniform_real_distribution<double> uni(-1.0, 1.0), mag(0.2, 2.0);
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd z(prob.num_variables());
    for (int i = 0; i < z.size(); ++i) z(i) = uni(rng);
    for (int k = 1; k <= c.steps; ++k) {
      const StateVector x = random_state(rng).to_vector();
      const StepLayout& l = prob.layout(k);
      for (int i = 0; i < kStateDim; ++i) z(l.x[i]) = x(i);
      for (int i = 0; i < 4; ++i) {
        z(l.zeta[i]) = 0.3 * uni(rng);
        z(l.pi[i]) = mag(rng);
        z(l.nu[i]) = mag(rng);
        z(l.gamma[i]) = mag(rng);
      }
    }
    Eigen::VectorXd grad;
    prob.gradient(z, grad);
    const Eigen::MatrixXd fd_grad = central_difference(
        [&](const Eigen::VectorXd& y) { return Eigen::VectorXd::Constant(1, prob.objective(y)); }, z);
    note(relative_jacobian_error(grad.transpose(), fd_grad), "objective gradient");
    const Eigen::MatrixXd fd_jac = central_difference(
        [&](const Eigen::VectorXd& y) {
          Eigen::VectorXd g;
          prob.constraints(y, g);
          return g;
        },
        z);
    note(relative_jacobian_error(dense_jacobian(prob, z), fd_jac), "constraint Jacobian");
  }
  return check("derivatives", worst <= 1e-5,
               format("max relative error %.2e (%s) over 100 states and 100 decision vectors", worst, where.c_str()));
}

CheckResult check_riccati() {
  LinearHybridSystem sys;
  sys.horizon = 50.0;
  sys.linearization = [](double, int, Eigen::MatrixXd& A, Eigen::MatrixXd& B) {
    A = Eigen::MatrixXd::Zero(1, 1);
    B = Eigen::MatrixXd::Ones(1, 1);
  };
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(1, 1);
  const GainSchedule g = riccati_sweep(sys, I, I, 5.0 * I);
  const double err = std::abs(g.riccati_at(0.0)(0, 0) - 1.0);
  return check("riccati_oracle", err <= 1e-6,
               format("|P(0) - 1| = %.2e for x' = u, Q = R = 1, P(T) = 5, T = 50", err));
}

CheckResult check_complementarity(const PlantParams& p, const TranscriptionConfig& base, unsigned seed) {
  TranscriptionConfig c = base;
  c.steps = 4;
  c.horizon = 4 * base.delta();
  try {
    TranscriptionProblem prob(p, c);
    const Trajectory start = seed_trajectory(
        p, c, ModeSchedule::constant(ClutchPattern::from_modes(JointMode::kSEA, JointMode::kSEA), c.horizon), seed,
        1.0);
    const HomotopyResult r = solve_homotopy(prob, prob.pack(start));
    const bool ok = r.report.converged() && r.report.max_product <= 1e-6 && r.report.max_defect <= 1e-8;
    return check("complementarity", ok,
                 format("n = 4 homotopy %s, max product %.2e, max defect %.2e", to_string(r.report.status),
                        r.report.max_product, r.report.max_defect));
  } catch (const std::exception& e) {
    return check("complementarity", false, e.what());
  }
}

CheckResult check_switch_penalty(const TranscriptionConfig& c) {
  double worst = 0.0;
  for (int m : {0, 1, 2, 5}) {
    Matrix4Cols zeta = Matrix4Cols::Zero(20, 4);
    // Alternate a single constraint between engaged and free m times.
    bool engaged = false;
    for (int k = 0; k < 20; ++k) {
      if (k > 0 && (k % 3) == 0 && k / 3 <= m) engaged = !engaged;
      zeta(k, 1) = engaged ? 2.0 : 0.0;
    }
    worst = std::max(worst, std::abs(switch_penalty(zeta, c.alpha, 500.0) - m));
  }
  return check("switch_penalty", worst <= 0.1, format("max |J2 - m| = %.2e for m in {0, 1, 2, 5}", worst));
}

}  // namespace

Logger Logger::from_env() {
  Logger log;
  log.out = &std::cerr;
  if (const char* v = std::getenv("CEROPT_LOG")) log.level = std::atoi(v);
  return log;
}

void Logger::line(const std::string& text) const {
  if (out && level >= 1) *out << text << '\n' << std::flush;
}

HomotopyResult solve_free_start(const ExperimentConfig& config, unsigned seed, const Logger& log) {
  const PlantParams& params = config.plant;
  const TranscriptionConfig& c = config.transcription;
  const ClutchPattern sea = ClutchPattern::from_modes(JointMode::kSEA, JointMode::kSEA);
  const Trajectory start =
      seed_trajectory(params, c, ModeSchedule::constant(sea, c.horizon), seed, config.optimize.amplitude);

  // Without the switching term the problem is far better conditioned; its
  // solution is a good start for the full homotopy.
  TranscriptionConfig c0 = c;
  c0.w_switch = 0.0;
  TranscriptionProblem pre(params, c0);
  HomotopyOptions pre_options = with_log(config.homotopy, log, "pre ");
  pre_options.epsilons = {config.optimize.presolve_epsilon};
  const HomotopyResult r0 = solve_homotopy(pre, pre.pack(start), pre_options);

  TranscriptionProblem prob(params, c);
  const Eigen::VectorXd z0 = r0.solution.x.size() == prob.num_variables() ? r0.solution.x : prob.pack(start);
  HomotopyResult r = solve_homotopy(prob, z0, with_log(config.homotopy, log, ""));
  r.report.iterations += r0.report.iterations;
  r.report.wall_seconds += r0.report.wall_seconds;
  return r;
}

OptimizeResult optimize_free(const ExperimentConfig& config, const Logger& log) {
  const auto t0 = Clock::now();
  OptimizeResult out;
  TranscriptionProblem prob(config.plant, config.transcription);
  double best_any = -1.0;
  for (int i = 0; i < config.optimize.starts; ++i) {
    if (i > 0 && seconds_since(t0) > config.optimize.time_budget) {
      log.line(format("optimize: time budget of %.0f s reached after %d starts", config.optimize.time_budget, i));
      break;
    }
    const unsigned seed = config.seed + static_cast<unsigned>(i);
    HomotopyResult r = solve_free_start(config, seed, log);
    StartRecord rec;
    rec.seed = seed;
    rec.status = r.report.status;
    rec.speed = end_speed(r.report.objective);
    rec.wall_seconds = r.report.wall_seconds;
    rec.accepted = r.report.converged() && rec.speed >= config.optimize.min_speed;
    out.starts.push_back(rec);
    log.line(format("optimize: seed %u %s |v_EE(T)| = %.4f m/s, %d iterations, %.1f s%s", seed,
                    to_string(rec.status), rec.speed, r.report.iterations, rec.wall_seconds,
                    rec.accepted ? "" : " (rejected)"));
    const bool better = rec.accepted ? (!out.found || rec.speed > out.speed)
                                     : (!out.found && r.solution.x.size() > 0 && rec.speed > best_any);
    if (better) {
      if (!rec.accepted) best_any = rec.speed;
      out.found = out.found || rec.accepted;
      out.seed = seed;
      out.speed = rec.speed;
      out.result = std::move(r);
    }
  }
  if (out.result.solution.x.size() == prob.num_variables()) {
    out.trajectory = prob.unpack(out.result.solution.x);
    out.schedule = extract_schedule(out.trajectory.zeta, out.trajectory.phi(), out.trajectory.dt, config.extraction);
  }
  out.wall_seconds = seconds_since(t0);
  return out;
}

OptimizeResult optimize_guessed(const ExperimentConfig& config, const Logger& log) {
  const auto t0 = Clock::now();
  OptimizeResult out;
  TranscriptionProblem prob(config.plant, config.transcription, config.guessed.schedule);
  HomotopyOptions options = with_log(config.homotopy, log, "guessed ");
  options.epsilons = {options.epsilons.back()};  // no complementarity block
  for (int i = 0; i < config.guessed.starts; ++i) {
    const unsigned seed = config.seed + static_cast<unsigned>(i);
    const Trajectory start =
        seed_trajectory(config.plant, config.transcription, config.guessed.schedule, seed, config.guessed.amplitude);
    HomotopyResult r = solve_homotopy(prob, prob.pack(start), options);
    StartRecord rec;
    rec.seed = seed;
    rec.status = r.report.status;
    rec.speed = end_speed(r.report.objective);
    rec.wall_seconds = r.report.wall_seconds;
    rec.accepted = r.report.converged();
    out.starts.push_back(rec);
    log.line(format("guessed: seed %u %s |v_EE(T)| = %.4f m/s, %d iterations, %.1f s", seed, to_string(rec.status),
                    rec.speed, r.report.iterations, rec.wall_seconds));
    if (rec.accepted && (!out.found || rec.speed > out.speed)) {
      out.found = true;
      out.seed = seed;
      out.speed = rec.speed;
      out.result = std::move(r);
    }
  }
  if (out.found) out.trajectory = prob.unpack(out.result.solution.x);
  out.schedule = config.guessed.schedule;
  out.wall_seconds = seconds_since(t0);
  return out;
}

bool MotionSignature::countermovement() const {
  return std::any_of(dq1_sign_changes.begin(), dq1_sign_changes.end(),
                     [&](double t) { return t < peak_dq1_time; });
}

MotionSignature motion_signature(const std::vector<double>& times, const std::vector<StateVector>& states) {
  MotionSignature sig;
  constexpr double kRest = 1e-3;  // rad/s; smaller speeds carry no sign
  double last_sign = 0.0;
  for (size_t i = 0; i < states.size(); ++i) {
    const double d1 = states[i](kDqIdx), d2 = states[i](kDqIdx + 1);
    if (std::abs(d1) > sig.peak_dq1) {
      sig.peak_dq1 = std::abs(d1);
      sig.peak_dq1_time = times[i];
    }
    if (std::abs(d2) > sig.peak_dq2) {
      sig.peak_dq2 = std::abs(d2);
      sig.peak_dq2_time = times[i];
    }
    if (std::abs(d1) > kRest) {
      const double s = d1 > 0 ? 1.0 : -1.0;
      if (last_sign != 0.0 && s != last_sign) sig.dq1_sign_changes.push_back(times[i]);
      last_sign = s;
    }
  }
  return sig;
}

CrossValidation cross_validate(const PlantParams& params, const Trajectory& traj, const ModeSchedule& schedule,
                               const RolloutOptions& options, const std::vector<int>& refinements) {
  CrossValidation cv;
  const ZeroOrderHold controls = traj.control_hold();
  const HybridState x0 = HybridState::from_vector(traj.states.front());
  cv.rollout = rollout(params, x0, controls, schedule, options);
  auto deviation = [&](const std::vector<StateVector>& states, double dt) {
    double dev = 0.0;
    for (size_t k = 0; k < states.size(); ++k) {
      const double t = static_cast<double>(k) * dt;
      const StateVector x = cv.rollout.state_in(t, schedule.interval_at(t));
      dev = std::max(dev, (x.head<6>() - states[k].head<6>()).cwiseAbs().maxCoeff());
    }
    return dev;
  };
  cv.max_angle_deviation = deviation(traj.states, traj.dt);
  for (int r : refinements) {
    const Trajectory replay = backward_euler_replay(params, x0, controls, schedule, traj.steps() * r);
    cv.deltas.push_back(replay.dt);
    cv.replay_deviation.push_back(deviation(replay.states, replay.dt));
  }
  for (size_t i = 1; i < cv.replay_deviation.size(); ++i)
    cv.ratios.push_back(cv.replay_deviation[i - 1] / cv.replay_deviation[i]);
  return cv;
}

double TrackingExperiment::improvement() const {
  return open.final_error > 0 ? 1.0 - closed.final_error / open.final_error : 0.0;
}

TrackingExperiment run_tracking(const PlantParams& params, const HybridState& x0, const ZeroOrderHold& controls,
                                const ModeSchedule& schedule, const TrackSettings& settings,
                                const RolloutOptions& options, int error_samples) {
  TrackingExperiment ex;
  ex.reference = make_reference(params, x0, controls, schedule, options);
  ex.gains = riccati_sweep(params, ex.reference, settings.weights);
  const HybridState xp = HybridState::from_vector(x0.to_vector() + settings.perturbation);
  ex.closed = track(params, xp, ex.reference, ex.gains, settings.weights, options);
  ex.open = open_loop(params, xp, ex.reference, options);
  const double T = schedule.horizon;
  for (int i = 0; i < error_samples; ++i) {
    const double t = T * i / (error_samples - 1);
    const int k = schedule.interval_at(t);
    const StateVector xr = ex.reference.rollout.state_in(t, k);
    ex.times.push_back(t);
    ex.closed_error.push_back((ex.closed.rollout.state_in(t, k) - xr).norm());
    ex.open_error.push_back((ex.open.rollout.state_in(t, k) - xr).norm());
  }
  return ex;
}

Eigen::Vector4d projection_oracle(const Eigen::Matrix4d& Pi, const Eigen::MatrixXd& C,
                                  const Eigen::Vector4d& v_minus) {
  const int m = static_cast<int>(C.rows());
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(4 + m, 4 + m);
  kkt.topLeftCorner<4, 4>() = Pi;
  kkt.topRightCorner(4, m) = C.transpose();
  kkt.bottomLeftCorner(m, 4) = C;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(4 + m);
  rhs.head<4>() = Pi * v_minus;
  return kkt.fullPivLu().solve(rhs).head<4>();
}

double relative_jacobian_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  if (analytic.rows() != numeric.rows() || analytic.cols() != numeric.cols()) return kInf;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.rows(); ++i) {
    const double scale = std::max(1.0, numeric.row(i).cwiseAbs().maxCoeff());
    worst = std::max(worst, (analytic.row(i) - numeric.row(i)).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

std::vector<CheckResult> run_checks(const PlantParams& params, const TranscriptionConfig& transcription,
                                    unsigned seed) {
  std::mt19937 rng(seed);
  std::vector<CheckResult> out;
  // A check that throws fails with the exception text.
  auto run = [&out](const std::string& name, const std::function<CheckResult()>& fn) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back(check(name, false, e.what()));
    }
  };
  run("mass_matrix_pd", [&] { return check_mass_matrix(params); });
  run("energy_conservation", [&] { return check_energy(params); });
  run("friction_dissipative", [&] { return check_friction(params, rng); });
  run("impact_oracle", [&] { return check_impact(params, rng); });
  run("derivatives", [&] { return check_derivatives(params, transcription, rng); });
  run("riccati_oracle", [&] { return check_riccati(); });
  run("complementarity", [&] { return check_complementarity(params, transcription, seed); });
  run("switch_penalty", [&] { return check_switch_penalty(transcription); });
  return out;
}

}  // namespace ceropt
