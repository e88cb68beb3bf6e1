// Python bindings. Configurations, schedules and reports cross the boundary
// as JSON text; the ceropt package wraps them in dicts.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ceropt/config.h"
#include "ceropt/experiments.h"
#include "ceropt/io.h"
#include "ceropt/transcription.h"

namespace py = pybind11;
using nlohmann::json;

namespace ceropt {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

ExperimentConfig parse_config(const std::string& text) {
  return config_from_json(text.empty() ? json::object() : json::parse(text));
}

RowMatrix stack(const std::vector<StateVector>& states) {
  RowMatrix m(states.size(), kStateDim);
  for (std::size_t i = 0; i < states.size(); ++i) m.row(i) = states[i].transpose();
  return m;
}

ZeroOrderHold hold(const RowMatrix& controls, double dt) {
  if (controls.cols() != kControlDim) throw std::invalid_argument("controls must have two columns");
  ZeroOrderHold u;
  u.dt = dt;
  for (Eigen::Index k = 0; k < controls.rows(); ++k) u.values.emplace_back(controls(k, 0), controls(k, 1));
  return u;
}

py::dict py_optimize(const std::string& config_text, bool guessed) {
  const ExperimentConfig c = parse_config(config_text);
  OptimizeResult r;
  {
    py::gil_scoped_release release;
    r = guessed ? optimize_guessed(c, Logger{}) : optimize_free(c, Logger{});
  }
  std::vector<double> times;
  for (std::size_t k = 0; k < r.trajectory.states.size(); ++k) times.push_back(k * r.trajectory.dt);
  const MotionSignature sig = motion_signature(times, r.trajectory.states);
  py::dict out;
  out["found"] = r.found;
  out["seed"] = r.seed;
  out["speed"] = r.speed;
  out["status"] = to_string(r.result.report.status);
  out["max_product"] = r.result.report.max_product;
  out["max_defect"] = r.result.report.max_defect;
  out["wall_seconds"] = r.wall_seconds;
  out["times"] = times;
  out["states"] = stack(r.trajectory.states);
  out["controls"] = RowMatrix(r.trajectory.controls);
  out["zeta"] = RowMatrix(r.trajectory.zeta);
  out["dt"] = r.trajectory.dt;
  out["schedule"] = to_json(r.schedule).dump();
  out["countermovement"] = sig.countermovement();
  out["proximo_distal"] = sig.proximo_distal();
  return out;
}

py::dict py_simulate(const std::string& config_text, const std::string& schedule_text, const RowMatrix& controls,
                  double dt) {
  const ExperimentConfig c = parse_config(config_text);
  const ModeSchedule s = schedule_from_json(json::parse(schedule_text));
  const Rollout r = rollout(c.plant, c.transcription.x0, hold(controls, dt), s, c.rollout);
  py::dict out;
  out["times"] = r.times;
  out["states"] = stack(r.states);
  out["intervals"] = r.intervals;
  return out;
}

py::dict py_track(const std::string& config_text, const std::string& schedule_text, const RowMatrix& controls,
               double dt) {
  const ExperimentConfig c = parse_config(config_text);
  const ModeSchedule s = schedule_from_json(json::parse(schedule_text));
  const TrackingExperiment ex = run_tracking(c.plant, c.transcription.x0, hold(controls, dt), s, c.track, c.rollout);
  py::dict out;
  out["improvement"] = ex.improvement();
  out["closed_final_error"] = ex.closed.final_error;
  out["open_final_error"] = ex.open.final_error;
  out["max_correction"] = ex.closed.max_correction;
  out["times"] = ex.times;
  out["closed_error"] = ex.closed_error;
  out["open_error"] = ex.open_error;
  return out;
}

std::vector<py::tuple> checks(const std::string& config_text) {
  const json j = config_text.empty() ? json::object() : json::parse(config_text);
  // Parameters go through without validation so corrupted models can be
  // diagnosed.
  ExperimentConfig c;
  if (j.contains("plant")) c.plant = plant_from_json(j["plant"]);
  std::vector<py::tuple> out;
  for (const CheckResult& r : run_checks(c.plant, c.transcription, j.value("seed", 1u)))
    out.push_back(py::make_tuple(r.name, r.passed, r.detail));
  return out;
}

Eigen::Matrix4d mass_matrix(const std::string& config_text, double q1, double q2) {
  HybridState s;
  s.q = {q1, q2};
  return eval_model(parse_config(config_text).plant, s).Pi;
}

}  // namespace
}  // namespace ceropt

PYBIND11_MODULE(_core, m) {
  using namespace ceropt;
  m.doc() = "Contact-implicit optimization and hybrid LQR for clutched elastic robots";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  m.def("default_config", [] { return to_json(ExperimentConfig{}).dump(); });
  m.def("normalize_config", [](const std::string& text) { return to_json(parse_config(text)).dump(); },
        py::arg("config"));
  m.def("config_hash", [](const std::string& text) { return config_hash(parse_config(text)); }, py::arg("config"));
  m.def("optimize", &py_optimize, py::arg("config"), py::arg("guessed") = false);
  m.def("simulate", &py_simulate, py::arg("config"), py::arg("schedule"), py::arg("controls"), py::arg("dt"));
  m.def("track", &py_track, py::arg("config"), py::arg("schedule"), py::arg("controls"), py::arg("dt"));
  m.def("run_checks", &checks, py::arg("config") = "");
  m.def("mass_matrix", &mass_matrix, py::arg("config"), py::arg("q1"), py::arg("q2"));
  m.def("switch_penalty",
        [](const RowMatrix& zeta, double alpha, double beta) {
          if (zeta.cols() != 4) throw std::invalid_argument("zeta must have four columns");
          return switch_penalty(Matrix4Cols(zeta), alpha, beta);
        },
        py::arg("zeta"), py::arg("alpha"), py::arg("beta"));
}
