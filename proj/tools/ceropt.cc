// Command-line front end.
//
//   ceropt optimize      [--config F] [--out DIR] [--seed N] [--eps-schedule L] [--steps N]
//   ceropt simulate      [--schedule F] [--controls F]
//   ceropt track         [--reference DIR] [--r-scale S]
//   ceropt extract-modes [--solution F]
//   ceropt check
//
// Exit codes: 0 ok, 1 solver or check failure, 2 configuration or input error.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ceropt/config.h"
#include "ceropt/experiments.h"
#include "ceropt/io.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ceropt {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitSolver = 1;
constexpr int kExitConfig = 2;

struct CommonOptions {
  std::string config;
  std::string out = "out";
  int seed = -1;
  std::string eps_schedule;
  int steps = 0;
};

struct Context {
  ExperimentConfig config;
  ArtifactTag tag;
  fs::path out;
  Logger log;
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError("bad --eps-schedule entry '" + item + "'");
    }
  }
  return out;
}

Context make_context(const CommonOptions& o) {
  Context ctx;
  ctx.config = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed >= 0) ctx.config.seed = static_cast<unsigned>(o.seed);
  if (!o.eps_schedule.empty()) ctx.config.homotopy.epsilons = parse_list(o.eps_schedule);
  if (o.steps > 0) {
    // Keep the step length: the horizon is part of the scenario.
    ctx.config.transcription.steps = o.steps;
  } else if (o.steps < 0) {
    throw ConfigError("--steps must be positive");
  }
  ctx.config.validate();
  ctx.tag = {config_hash(ctx.config), ctx.config.seed};
  ctx.out = o.out;
  fs::create_directories(ctx.out);
  ctx.log = Logger::from_env();
  return ctx;
}

void write_json(const fs::path& path, json j, const ArtifactTag& tag) {
  j["config_hash"] = tag.config_hash;
  j["seed"] = tag.seed;
  write_text(path.string(), j.dump(2) + "\n");
}

json stage_json(const StageReport& s) {
  return {{"epsilon", s.epsilon},
          {"status", to_string(s.nlp.status)},
          {"iterations", s.nlp.iterations},
          {"max_defect", s.max_defect},
          {"max_product", s.max_product},
          {"objective", to_json(s.objective)}};
}

int cmd_optimize(const Context& ctx) {
  const bool guessed = ctx.config.scenario == "guessed";
  const OptimizeResult r = guessed ? optimize_guessed(ctx.config, ctx.log) : optimize_free(ctx.config, ctx.log);
  if (r.result.solution.x.size() == 0) {
    ctx.log.line("optimize: no start produced a solution");
    return kExitSolver;
  }
  const ExperimentConfig& c = ctx.config;
  write_json(ctx.out / "config.json", to_json(c), ctx.tag);
  SolutionSnapshot snap;
  snap.tag = {ctx.tag.config_hash, r.seed};
  snap.steps = c.transcription.steps;
  snap.horizon = c.transcription.horizon;
  snap.epsilon = r.result.report.eps_trace.empty() ? 0.0 : r.result.report.eps_trace.back();
  snap.status = to_string(r.result.report.status);
  snap.objective = r.result.report.objective;
  snap.solution = r.result.solution;
  write_text((ctx.out / "solution.json").string(), to_json(snap).dump() + "\n");
  write_text((ctx.out / "trajectory.csv").string(), trajectory_csv(c.plant, r.trajectory, r.schedule, ctx.tag));
  write_text((ctx.out / "controls.csv").string(), controls_csv(r.trajectory, ctx.tag));
  write_json(ctx.out / "schedule.json", to_json(r.schedule), ctx.tag);

  std::vector<double> times;
  for (size_t k = 0; k < r.trajectory.states.size(); ++k) times.push_back(static_cast<double>(k) * r.trajectory.dt);
  const MotionSignature sig = motion_signature(times, r.trajectory.states);
  json starts = json::array();
  for (const auto& s : r.starts)
    starts.push_back({{"seed", s.seed},
                      {"status", to_string(s.status)},
                      {"speed", s.speed},
                      {"wall_seconds", s.wall_seconds},
                      {"accepted", s.accepted}});
  json stages = json::array();
  for (const auto& s : r.result.report.stages) stages.push_back(stage_json(s));
  json report = {{"scenario", c.scenario},
                 {"converged", r.found},
                 {"status", to_string(r.result.report.status)},
                 {"annotation", r.result.report.annotation},
                 {"chosen_seed", r.seed},
                 {"end_effector_speed", r.speed},
                 {"max_defect", r.result.report.max_defect},
                 {"max_product", r.result.report.max_product},
                 {"objective", to_json(r.result.report.objective)},
                 {"switches", r.schedule.switch_times.size()},
                 {"countermovement", sig.countermovement()},
                 {"dq1_sign_changes", sig.dq1_sign_changes},
                 {"peak_dq1_time", sig.peak_dq1_time},
                 {"peak_dq2_time", sig.peak_dq2_time},
                 {"proximo_distal", sig.proximo_distal()},
                 {"starts", starts},
                 {"stages", stages},
                 {"wall_seconds", r.wall_seconds}};
  if (!guessed) {
    const CrossValidation cv = cross_validate(c.plant, r.trajectory, r.schedule, c.rollout);
    report["cross_validation"] = {{"max_angle_deviation", cv.max_angle_deviation},
                                  {"deltas", cv.deltas},
                                  {"replay_deviation", cv.replay_deviation},
                                  {"ratios", cv.ratios}};
  }
  write_json(ctx.out / "report.json", report, ctx.tag);
  std::printf("%s: %s, |v_EE(T)| = %.4f m/s, %zu switches, seed %u, %.1f s\n", c.scenario.c_str(),
              r.found ? "converged" : "not converged", r.speed, r.schedule.switch_times.size(), r.seed,
              r.wall_seconds);
  return r.found ? kExitOk : kExitSolver;
}

ModeSchedule load_schedule(const std::string& path) { return schedule_from_json(json::parse(read_text(path))); }

void check_horizon(const ModeSchedule& s, const ZeroOrderHold& u) {
  if (std::abs(s.horizon - u.horizon()) > 1e-9 * std::max(1.0, s.horizon))
    throw FormatError("schedule horizon and controls length differ");
}

int cmd_simulate(const Context& ctx, const std::string& schedule_path, const std::string& controls_path) {
  const ModeSchedule schedule = load_schedule(schedule_path);
  const ZeroOrderHold controls = parse_controls_csv(read_text(controls_path));
  check_horizon(schedule, controls);
  const Rollout r = rollout(ctx.config.plant, ctx.config.transcription.x0, controls, schedule, ctx.config.rollout);
  write_text((ctx.out / "simulation.csv").string(), trajectory_csv(ctx.config.plant, r, ctx.tag));
  const auto kin = ee_kinematics(ctx.config.plant, {r.final_state()(kQIdx), r.final_state()(kQIdx + 1)},
                                 {r.final_state()(kDqIdx), r.final_state()(kDqIdx + 1)});
  std::printf("simulate: %zu samples, %zu resets, |v_EE(T)| = %.4f m/s\n", r.times.size(), r.impulses.size(),
              kin.velocity.norm());
  return kExitOk;
}

int cmd_track(const Context& ctx, const std::string& reference_dir, double r_scale) {
  const fs::path dir = reference_dir.empty() ? ctx.out : fs::path(reference_dir);
  const ModeSchedule schedule = load_schedule((dir / "schedule.json").string());
  const ZeroOrderHold controls = parse_controls_csv(read_text((dir / "controls.csv").string()));
  check_horizon(schedule, controls);
  TrackSettings settings = ctx.config.track;
  settings.weights.R *= r_scale;
  const TrackingExperiment ex =
      run_tracking(ctx.config.plant, ctx.config.transcription.x0, controls, schedule, settings, ctx.config.rollout);
  write_text((ctx.out / "tracking.csv").string(), tracking_csv(ex.times, ex.closed_error, ex.open_error, ctx.tag));
  write_text((ctx.out / "closed_loop.csv").string(), trajectory_csv(ctx.config.plant, ex.closed.rollout, ctx.tag));
  write_json(ctx.out / "gains.json", to_json(ex.gains), ctx.tag);
  json summary = {{"closed_final_error", ex.closed.final_error},
                  {"closed_max_error", ex.closed.max_error},
                  {"open_final_error", ex.open.final_error},
                  {"open_max_error", ex.open.max_error},
                  {"improvement", ex.improvement()},
                  {"max_correction", ex.closed.max_correction},
                  {"saturated_samples", ex.closed.saturated_samples},
                  {"r_scale", r_scale}};
  write_json(ctx.out / "tracking_summary.json", summary, ctx.tag);
  std::printf(
      "track: final error closed %.4e open %.4e (improvement %.1f%%), max error closed %.4e open %.4e, "
      "max |u - u_ref| %.3f rad/s, %d saturated samples\n",
      ex.closed.final_error, ex.open.final_error, 100.0 * ex.improvement(), ex.closed.max_error, ex.open.max_error,
      ex.closed.max_correction, ex.closed.saturated_samples);
  return kExitOk;
}

int cmd_extract(const Context& ctx, const std::string& solution_path) {
  const SolutionSnapshot snap = snapshot_from_json(json::parse(read_text(solution_path)));
  TranscriptionConfig tc = ctx.config.transcription;
  tc.steps = snap.steps;
  tc.horizon = snap.horizon;
  const TranscriptionProblem prob(ctx.config.plant, tc);
  if (snap.solution.x.size() != prob.num_variables())
    throw FormatError("solution does not match a free transcription with " + std::to_string(snap.steps) + " steps");
  const Trajectory tr = prob.unpack(snap.solution.x);
  const ModeSchedule s = extract_schedule(tr.zeta, tr.phi(), tr.dt, ctx.config.extraction);
  write_json(ctx.out / "schedule.json", to_json(s), ctx.tag);
  std::printf("extract-modes: %zu switches\n", s.switch_times.size());
  for (size_t i = 0; i < s.patterns.size(); ++i)
    std::printf("  %.4f  %s/%s\n", i == 0 ? 0.0 : s.switch_times[i - 1], to_string(s.patterns[i].joint_mode(0)),
                to_string(s.patterns[i].joint_mode(1)));
  return kExitOk;
}

int cmd_check(const Context& ctx) {
  const auto results = run_checks(ctx.config.plant, ctx.config.transcription, ctx.config.seed);
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-22s %s  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitSolver;
}

}  // namespace
}  // namespace ceropt

int main(int argc, char** argv) {
  using namespace ceropt;
  CLI::App app{"Trajectory optimization, simulation and tracking for clutched-elastic robots"};
  app.require_subcommand(1);
  CommonOptions common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--seed", common.seed, "Random seed")->check(CLI::NonNegativeNumber);
    sub->add_option("--eps-schedule", common.eps_schedule, "Comma-separated relaxation schedule");
    sub->add_option("--steps", common.steps, "Number of transcription steps");
  };
  auto* optimize = app.add_subcommand("optimize", "Solve the speed-maximization problem");
  add_common(optimize);
  std::string schedule_path, controls_path, reference_dir, solution_path;
  double r_scale = 1.0;
  auto* simulate = app.add_subcommand("simulate", "Event-driven rollout of stored controls and schedule");
  add_common(simulate);
  simulate->add_option("--schedule", schedule_path, "Schedule JSON (default OUT/schedule.json)");
  simulate->add_option("--controls", controls_path, "Controls CSV (default OUT/controls.csv)");
  auto* track = app.add_subcommand("track", "Hybrid LQR tracking of a stored reference");
  add_common(track);
  track->add_option("--reference", reference_dir, "Directory with schedule.json and controls.csv (default OUT)");
  track->add_option("--r-scale", r_scale, "Scale applied to the input weight R")->check(CLI::PositiveNumber);
  auto* extract = app.add_subcommand("extract-modes", "Read the mode schedule off a stored solution");
  add_common(extract);
  extract->add_option("--solution", solution_path, "Solution JSON (default OUT/solution.json)");
  auto* checks = app.add_subcommand("check", "Run the diagnostics battery");
  add_common(checks);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const Context ctx = make_context(common);
    auto in_out = [&ctx](const std::string& given, const char* name) {
      return given.empty() ? (ctx.out / name).string() : given;
    };
    if (*optimize) return cmd_optimize(ctx);
    if (*simulate) return cmd_simulate(ctx, in_out(schedule_path, "schedule.json"), in_out(controls_path, "controls.csv"));
    if (*track) return cmd_track(ctx, reference_dir, r_scale);
    if (*extract) return cmd_extract(ctx, in_out(solution_path, "solution.json"));
    if (*checks) return cmd_check(ctx);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSolver;
  }
  return kExitOk;
}
