#include "ceropt/io.h"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace ceropt {
namespace {

using nlohmann::json;

constexpr const char* kStateColumns = "theta1,theta2,psi1,psi2,q1,q2,dpsi1,dpsi2,dq1,dq2";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void header(std::ostringstream& out, const std::string& kind, const ArtifactTag& tag, const std::string& columns) {
  out << "# ceropt-csv v" << kCsvVersion << ' ' << kind << '\n';
  out << "# config_hash=" << tag.config_hash << " seed=" << tag.seed << '\n';
  out << columns << '\n';
}

struct CsvBody {
  ArtifactTag tag;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

CsvBody parse_csv(const std::string& text, const std::string& kind) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty CSV");
  const std::string expected = "# ceropt-csv v" + std::to_string(kCsvVersion) + " " + kind;
  if (line.rfind("# ceropt-csv v", 0) != 0) throw FormatError("not a ceropt CSV");
  if (line != expected) throw FormatError("unsupported CSV header '" + line + "', expected '" + expected + "'");
  CsvBody body;
  if (!std::getline(in, line) || line.rfind("# config_hash=", 0) != 0) throw FormatError("missing CSV tag line");
  {
    std::istringstream tag(line.substr(2));
    std::string hash, seed;
    tag >> hash >> seed;
    if (hash.rfind("config_hash=", 0) != 0 || seed.rfind("seed=", 0) != 0) throw FormatError("malformed CSV tag line");
    body.tag.config_hash = hash.substr(12);
    body.tag.seed = static_cast<unsigned>(std::stoul(seed.substr(5)));
  }
  if (!std::getline(in, line)) throw FormatError("missing CSV column line");
  body.columns = split(line, ',');
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != body.columns.size()) throw FormatError("CSV row has the wrong number of cells");
    body.rows.push_back(std::move(cells));
  }
  return body;
}

double to_number(const std::string& s) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw FormatError("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw FormatError("bad number '" + s + "'");
  }
}

void expect_columns(const CsvBody& body, const std::string& columns) {
  if (body.columns != split(columns, ',')) throw FormatError("unexpected CSV columns");
}

json matrix_json(const Eigen::MatrixXd& m) {
  json values = json::array();
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", values}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const int rows = j.at("rows").get<int>();
  const int cols = j.at("cols").get<int>();
  const auto& data = j.at("data");
  if (static_cast<int>(data.size()) != rows * cols) throw FormatError("matrix data has the wrong size");
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = data[r * cols + c].get<double>();
  return m;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json tag_json(const ArtifactTag& tag) { return {{"config_hash", tag.config_hash}, {"seed", tag.seed}}; }

ArtifactTag tag_from_json(const json& j) {
  return {j.at("config_hash").get<std::string>(), j.at("seed").get<unsigned>()};
}

}  // namespace

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << text;
  if (!out) throw FormatError("write to '" + path + "' failed");
}

json to_json(const ModeSchedule& schedule) {
  json modes = json::array();
  for (const auto& p : schedule.patterns) modes.push_back({to_string(p.joint_mode(0)), to_string(p.joint_mode(1))});
  return {{"horizon", schedule.horizon}, {"switch_times", schedule.switch_times}, {"modes", modes}};
}

ModeSchedule schedule_from_json(const json& j) {
  ModeSchedule s;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key != "horizon" && key != "switch_times" && key != "modes" && key != "config_hash" && key != "seed")
        throw FormatError("unknown schedule key '" + key + "'");
    }
    s.horizon = j.at("horizon").get<double>();
    s.switch_times = j.at("switch_times").get<std::vector<double>>();
    for (const auto& m : j.at("modes")) {
      if (!m.is_array() || m.size() != 2) throw FormatError("schedule modes must be pairs");
      s.patterns.push_back(ClutchPattern::from_modes(joint_mode_from_string(m[0].get<std::string>()),
                                                     joint_mode_from_string(m[1].get<std::string>())));
    }
    s.validate();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad schedule JSON: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bad schedule: ") + e.what());
  }
  return s;
}

std::string trajectory_csv(const PlantParams& params, const std::vector<double>& times,
                           const std::vector<StateVector>& states, const std::vector<ClutchPattern>& patterns,
                           const ArtifactTag& tag) {
  if (times.size() != states.size() || times.size() != patterns.size())
    throw std::invalid_argument("trajectory columns differ in length");
  std::ostringstream out;
  header(out, "trajectory", tag, std::string("t,") + kStateColumns + ",mode_j1,mode_j2,v_ee");
  for (size_t i = 0; i < times.size(); ++i) {
    const StateVector& x = states[i];
    const auto kin = ee_kinematics(params, {x(kQIdx), x(kQIdx + 1)}, {x(kDqIdx), x(kDqIdx + 1)});
    out << fmt(times[i]);
    for (int j = 0; j < kStateDim; ++j) out << ',' << fmt(x(j));
    out << ',' << to_string(patterns[i].joint_mode(0)) << ',' << to_string(patterns[i].joint_mode(1)) << ','
        << fmt(kin.velocity.norm()) << '\n';
  }
  return out.str();
}

std::string trajectory_csv(const PlantParams& params, const Rollout& rollout, const ArtifactTag& tag) {
  std::vector<ClutchPattern> patterns;
  for (int k : rollout.intervals) patterns.push_back(rollout.schedule.patterns[k]);
  return trajectory_csv(params, rollout.times, rollout.states, patterns, tag);
}

std::string trajectory_csv(const PlantParams& params, const Trajectory& traj, const ModeSchedule& schedule,
                           const ArtifactTag& tag) {
  std::vector<double> times;
  std::vector<ClutchPattern> patterns;
  for (size_t k = 0; k < traj.states.size(); ++k) {
    times.push_back(static_cast<double>(k) * traj.dt);
    patterns.push_back(schedule.pattern_at(times.back()));
  }
  return trajectory_csv(params, times, traj.states, patterns, tag);
}

TrajectoryTable parse_trajectory_csv(const std::string& text) {
  const CsvBody body = parse_csv(text, "trajectory");
  expect_columns(body, std::string("t,") + kStateColumns + ",mode_j1,mode_j2,v_ee");
  TrajectoryTable table;
  table.tag = body.tag;
  for (const auto& row : body.rows) {
    table.times.push_back(to_number(row[0]));
    StateVector x;
    for (int j = 0; j < kStateDim; ++j) x(j) = to_number(row[1 + j]);
    table.states.push_back(x);
    try {
      table.patterns.push_back(ClutchPattern::from_modes(joint_mode_from_string(row[11]), joint_mode_from_string(row[12])));
    } catch (const std::invalid_argument& e) {
      throw FormatError(e.what());
    }
    table.speed.push_back(to_number(row[13]));
  }
  return table;
}

std::string controls_csv(const Trajectory& traj, const ArtifactTag& tag) {
  std::ostringstream out;
  header(out, "controls", tag, "t0,u1,u2,zeta1,zeta2,zeta3,zeta4");
  for (int k = 0; k < traj.steps(); ++k) {
    out << fmt(k * traj.dt) << ',' << fmt(traj.controls(k, 0)) << ',' << fmt(traj.controls(k, 1));
    for (int i = 0; i < 4; ++i) out << ',' << fmt(traj.zeta(k, i));
    out << '\n';
  }
  return out.str();
}

std::string controls_csv(const ZeroOrderHold& controls, const ArtifactTag& tag) {
  std::ostringstream out;
  header(out, "controls", tag, "t0,u1,u2,zeta1,zeta2,zeta3,zeta4");
  for (size_t k = 0; k < controls.values.size(); ++k)
    out << fmt(static_cast<double>(k) * controls.dt) << ',' << fmt(controls.values[k](0)) << ','
        << fmt(controls.values[k](1)) << ",0,0,0,0\n";
  return out.str();
}

ZeroOrderHold parse_controls_csv(const std::string& text) {
  const CsvBody body = parse_csv(text, "controls");
  expect_columns(body, "t0,u1,u2,zeta1,zeta2,zeta3,zeta4");
  if (body.rows.size() < 1) throw FormatError("controls CSV has no rows");
  ZeroOrderHold zoh;
  std::vector<double> t0;
  for (const auto& row : body.rows) {
    t0.push_back(to_number(row[0]));
    zoh.values.push_back(ControlVector(to_number(row[1]), to_number(row[2])));
  }
  if (t0.front() != 0.0) throw FormatError("controls must start at t0 = 0");
  zoh.dt = t0.size() > 1 ? t0[1] - t0[0] : 0.0;
  for (size_t k = 1; k < t0.size(); ++k) {
    if (std::abs(t0[k] - static_cast<double>(k) * zoh.dt) > 1e-9 * std::max(1.0, t0[k]))
      throw FormatError("controls must be evenly spaced");
  }
  if (zoh.dt <= 0.0) throw FormatError("controls need at least two rows to define the hold interval");
  return zoh;
}

std::string tracking_csv(const std::vector<double>& times, const std::vector<double>& closed,
                         const std::vector<double>& open, const ArtifactTag& tag) {
  if (times.size() != closed.size() || times.size() != open.size())
    throw std::invalid_argument("tracking columns differ in length");
  std::ostringstream out;
  header(out, "tracking", tag, "t,err_closed,err_open");
  for (size_t i = 0; i < times.size(); ++i)
    out << fmt(times[i]) << ',' << fmt(closed[i]) << ',' << fmt(open[i]) << '\n';
  return out.str();
}

json to_json(const GainSchedule& gains) {
  json intervals = json::array();
  for (const auto& iv : gains.intervals) {
    json P = json::array(), K = json::array();
    for (const auto& m : iv.P) P.push_back(matrix_json(m));
    for (const auto& m : iv.K) K.push_back(matrix_json(m));
    intervals.push_back({{"t0", iv.t0}, {"t1", iv.t1}, {"times", iv.times}, {"P", P}, {"K", K}});
  }
  json jumps = json::array();
  for (const auto& jr : gains.jumps)
    jumps.push_back({{"time", jr.time},
                     {"H", matrix_json(jr.H)},
                     {"P_plus", matrix_json(jr.P_plus)},
                     {"P_minus", matrix_json(jr.P_minus)}});
  return {{"format", "ceropt-gains"}, {"version", 1}, {"R", matrix_json(gains.R)}, {"intervals", intervals},
          {"jumps", jumps}};
}

GainSchedule gains_from_json(const json& j) {
  try {
    if (j.at("format") != "ceropt-gains" || j.at("version") != 1) throw FormatError("unsupported gains document");
    GainSchedule g;
    g.R = matrix_from_json(j.at("R"));
    for (const auto& iv : j.at("intervals")) {
      GainInterval out;
      out.t0 = iv.at("t0").get<double>();
      out.t1 = iv.at("t1").get<double>();
      out.times = iv.at("times").get<std::vector<double>>();
      for (const auto& m : iv.at("P")) out.P.push_back(matrix_from_json(m));
      for (const auto& m : iv.at("K")) out.K.push_back(matrix_from_json(m));
      if (out.P.size() != out.times.size() || out.K.size() != out.times.size())
        throw FormatError("gain interval sizes differ");
      g.intervals.push_back(std::move(out));
    }
    for (const auto& jr : j.at("jumps"))
      g.jumps.push_back({jr.at("time").get<double>(), matrix_from_json(jr.at("H")), matrix_from_json(jr.at("P_plus")),
                         matrix_from_json(jr.at("P_minus"))});
    return g;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad gains JSON: ") + e.what());
  }
}

json to_json(const ObjectiveBreakdown& o) {
  return {{"speed", o.speed},
          {"switching", o.switching},
          {"effort", o.effort},
          {"slack", o.slack},
          {"total", o.total}};
}

json to_json(const SolutionSnapshot& s) {
  return {{"format", "ceropt-solution"},
          {"version", 1},
          {"tag", tag_json(s.tag)},
          {"steps", s.steps},
          {"horizon", s.horizon},
          {"epsilon", s.epsilon},
          {"status", s.status},
          {"objective", to_json(s.objective)},
          {"variables", vector_json(s.solution.x)},
          {"multipliers",
           {{"lambda", vector_json(s.solution.lambda)},
            {"z_lower", vector_json(s.solution.z_lower)},
            {"z_upper", vector_json(s.solution.z_upper)}}}};
}

SolutionSnapshot snapshot_from_json(const json& j) {
  try {
    if (j.at("format") != "ceropt-solution" || j.at("version") != 1)
      throw FormatError("unsupported solution document");
    SolutionSnapshot s;
    s.tag = tag_from_json(j.at("tag"));
    s.steps = j.at("steps").get<int>();
    s.horizon = j.at("horizon").get<double>();
    s.epsilon = j.at("epsilon").get<double>();
    s.status = j.at("status").get<std::string>();
    const auto& o = j.at("objective");
    s.objective = {o.at("speed").get<double>(), o.at("switching").get<double>(), o.at("effort").get<double>(),
                   o.at("slack").get<double>(), o.at("total").get<double>()};
    s.solution.x = vector_from_json(j.at("variables"));
    const auto& m = j.at("multipliers");
    s.solution.lambda = vector_from_json(m.at("lambda"));
    s.solution.z_lower = vector_from_json(m.at("z_lower"));
    s.solution.z_upper = vector_from_json(m.at("z_upper"));
    s.solution.objective = s.objective.total;
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad solution JSON: ") + e.what());
  }
}

}  // namespace ceropt
