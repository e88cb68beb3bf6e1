#include <string>

#include <gtest/gtest.h>

#include "ceropt/config.h"
#include "ceropt/io.h"

namespace ceropt {
namespace {

using nlohmann::json;
using M = JointMode;

std::string source_path(const std::string& rel) { return std::string(CEROPT_SOURCE_DIR) + "/" + rel; }

TEST(ConfigTest, DefaultsRoundTripThroughJson) {
  const ExperimentConfig c;
  const ExperimentConfig back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(ConfigTest, PlantKeysFollowParameterSymbols) {
  const json j = to_json(PlantParams{});
  for (const char* key : {"B_theta", "B_psi", "B_L", "m_L", "r_L", "K", "tau_C_q", "d_q", "tau_C_psi", "d_psi",
                          "theta_max", "phi_max", "tau_s_max", "tau_m_max"})
    EXPECT_TRUE(j.contains(key)) << key;
  const PlantParams p = plant_from_json(json{{"K", {10.0, 11.0}}, {"B_psi", 5e-4}});
  EXPECT_EQ(p.stiffness[0], 10.0);
  EXPECT_EQ(p.stiffness[1], 11.0);
  EXPECT_EQ(p.spring_inertia[1], 5e-4);
  EXPECT_EQ(p.link_mass, PlantParams{}.link_mass);
}

TEST(ConfigTest, UnknownKeysAreRejected) {
  EXPECT_THROW(config_from_json(json{{"colour", 1}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"plant", {{"K2", 1.0}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"transcription", {{"x0", {{"omega", 1.0}}}}}}), ConfigError);
  try {
    config_from_json(json{{"homotopy", {{"tolerance", 1e-6}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("homotopy.tolerance"), std::string::npos);
  }
}

TEST(ConfigTest, InvalidValuesAreRejected) {
  EXPECT_THROW(config_from_json(json{{"transcription", {{"alpha", 0.0}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"plant", {{"K", -1.0}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"plant", {{"K", "stiff"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"homotopy", {{"epsilons", {1e-2, 1e-1}}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"lqr", {{"R", {1.0, -1.0}}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"guessed", {{"schedule", {{"switch_times", {0.7}},
                                                                  {"modes", {{"SEA", "STG"}, {"DEC", "SEA"}}}}}}}}),
               ConfigError);
  EXPECT_THROW(config_from_json(json{{"seed", -3}}), ConfigError);
}

TEST(ConfigTest, BundledConfigsLoad) {
  const ExperimentConfig speed = load_config(source_path("configs/speed_max_T0.5.json"));
  EXPECT_EQ(speed.transcription.steps, 100);
  EXPECT_EQ(speed.transcription.horizon, 0.5);
  EXPECT_EQ(to_json(speed.plant), to_json(PlantParams{}));
  const ExperimentConfig guessed = load_config(source_path("configs/guessed.json"));
  EXPECT_EQ(guessed.scenario, "guessed");
  ASSERT_EQ(guessed.guessed.schedule.switch_times.size(), 1u);
  EXPECT_DOUBLE_EQ(guessed.guessed.schedule.switch_times[0], 0.41);
  EXPECT_EQ(guessed.guessed.schedule.patterns[0], ClutchPattern::from_modes(M::kSEA, M::kSTG));
  EXPECT_EQ(guessed.guessed.schedule.patterns[1], ClutchPattern::from_modes(M::kDEC, M::kSEA));
  const ExperimentConfig smoke = load_config(source_path("configs/smoke.json"));
  EXPECT_EQ(smoke.transcription.steps, 2);
  EXPECT_THROW(load_config(source_path("configs/missing.json")), ConfigError);
}

TEST(ConfigTest, HashTracksContent) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  ExperimentConfig a, b;
  b.plant.stiffness[0] = 12.6;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(ScheduleJsonTest, RoundTripAndValidation) {
  ModeSchedule s;
  s.horizon = 0.5;
  s.switch_times = {0.11, 0.27};
  s.patterns = {ClutchPattern::from_modes(M::kSEA, M::kSEA), ClutchPattern::from_modes(M::kSTG, M::kSTG),
                ClutchPattern::from_modes(M::kSEA, M::kBRK)};
  const json j = to_json(s);
  EXPECT_EQ(j["modes"][2][1], "BRK");
  const ModeSchedule back = schedule_from_json(json::parse(j.dump()));
  EXPECT_EQ(back.switch_times, s.switch_times);
  EXPECT_EQ(back.patterns, s.patterns);
  json bad = j;
  bad["switch_times"] = {0.3, 0.2};
  EXPECT_THROW(schedule_from_json(bad), FormatError);
  bad = j;
  bad["modes"][0][0] = "FOO";
  EXPECT_THROW(schedule_from_json(bad), FormatError);
  bad = j;
  bad["extra"] = 1;
  EXPECT_THROW(schedule_from_json(bad), FormatError);
}

TEST(CsvTest, TrajectoryRoundTripsExactly) {
  const PlantParams p;
  std::vector<double> times{0.0, 0.1, 0.2};
  std::vector<StateVector> states;
  for (int i = 0; i < 3; ++i) states.push_back(StateVector::LinSpaced(0.1 * i, 1.0 / 3.0 + i));
  std::vector<ClutchPattern> patterns(3, ClutchPattern::from_modes(M::kSEA, M::kSTG));
  const std::string text = trajectory_csv(p, times, states, patterns, {"0123456789abcdef", 42});
  EXPECT_EQ(text.rfind("# ceropt-csv v1 trajectory\n# config_hash=0123456789abcdef seed=42\n", 0), 0u);
  const TrajectoryTable t = parse_trajectory_csv(text);
  EXPECT_EQ(t.tag.config_hash, "0123456789abcdef");
  EXPECT_EQ(t.tag.seed, 42u);
  EXPECT_EQ(t.times, times);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(t.states[i], states[i]);
  EXPECT_EQ(t.patterns, patterns);
  const auto kin = ee_kinematics(p, {states[2](kQIdx), states[2](kQIdx + 1)}, {states[2](kDqIdx), states[2](kDqIdx + 1)});
  EXPECT_EQ(t.speed[2], kin.velocity.norm());
}

TEST(CsvTest, ReadersRejectOtherVersionsAndKinds) {
  const std::string text = trajectory_csv(PlantParams{}, {0.0}, {StateVector::Zero()}, {ClutchPattern{}}, {"x", 1});
  std::string v2 = text;
  v2.replace(v2.find("v1"), 2, "v2");
  EXPECT_THROW(parse_trajectory_csv(v2), FormatError);
  EXPECT_THROW(parse_controls_csv(text), FormatError);
  EXPECT_THROW(parse_trajectory_csv("t,theta1\n0,0\n"), FormatError);
  std::string short_row = text + "0,1,2\n";
  EXPECT_THROW(parse_trajectory_csv(short_row), FormatError);
}

TEST(CsvTest, ControlsRoundTrip) {
  ZeroOrderHold u;
  u.dt = 0.005;
  for (int k = 0; k < 4; ++k) u.values.push_back(ControlVector(0.1 * k, -0.3 * k + 1.0 / 7.0));
  const ZeroOrderHold back = parse_controls_csv(controls_csv(u, {"h", 3}));
  EXPECT_EQ(back.dt, u.dt);
  ASSERT_EQ(back.values.size(), 4u);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(back.values[k], u.values[k]);
}

TEST(GainsJsonTest, RoundTrip) {
  GainSchedule g;
  g.R = Eigen::Matrix2d::Identity() * 0.1;
  GainInterval iv;
  iv.t0 = 0.0;
  iv.t1 = 0.5;
  iv.times = {0.0, 0.5};
  iv.P = {Eigen::MatrixXd::Identity(3, 3), 2.0 * Eigen::MatrixXd::Identity(3, 3)};
  iv.K = {Eigen::MatrixXd::Constant(2, 3, 1.0 / 3.0), Eigen::MatrixXd::Zero(2, 3)};
  g.intervals = {iv, iv};
  g.intervals[1].t0 = 0.5;
  g.jumps = {{0.5, Eigen::MatrixXd::Zero(3, 3), iv.P[0], iv.P[0]}};
  const GainSchedule back = gains_from_json(json::parse(to_json(g).dump()));
  ASSERT_EQ(back.intervals.size(), 2u);
  EXPECT_EQ(back.intervals[0].K[0], iv.K[0]);
  EXPECT_EQ(back.intervals[1].P[1], iv.P[1]);
  EXPECT_EQ(back.jumps[0].time, 0.5);
  EXPECT_EQ(back.R, g.R);
  json bad = to_json(g);
  bad["version"] = 2;
  EXPECT_THROW(gains_from_json(bad), FormatError);
}

TEST(SnapshotJsonTest, RoundTrip) {
  SolutionSnapshot s;
  s.tag = {"abc", 9};
  s.steps = 2;
  s.horizon = 0.01;
  s.epsilon = 1e-6;
  s.status = "converged";
  s.objective.speed = -1.5;
  s.objective.total = -1.2;
  s.solution.x = Eigen::VectorXd::LinSpaced(5, 0.0, 1.0);
  s.solution.lambda = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  s.solution.z_lower = Eigen::VectorXd::Zero(5);
  s.solution.z_upper = Eigen::VectorXd::Ones(5);
  const SolutionSnapshot back = snapshot_from_json(json::parse(to_json(s).dump()));
  EXPECT_EQ(back.solution.x, s.solution.x);
  EXPECT_EQ(back.solution.lambda, s.solution.lambda);
  EXPECT_EQ(back.epsilon, s.epsilon);
  EXPECT_EQ(back.objective.speed, -1.5);
  EXPECT_EQ(back.tag.seed, 9u);
}

}  // namespace
}  // namespace ceropt
