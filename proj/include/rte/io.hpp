#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rte/bench.hpp"
#include "rte/estimator.hpp"
#include "rte/oracles.hpp"
#include "rte/scenario.hpp"

namespace rte::io {

using nlohmann::json;

inline constexpr const char* kScenarioSchema = "rte-scenario/1";
inline constexpr const char* kExperimentSchema = "rte-experiment/1";
inline constexpr const char* kMeasurementSchema = "rte-measurements/1";
inline constexpr const char* kMeasurementCsvHeader = "l1,l2,i,range_m,sigma_m";

namespace detail {

inline json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + ": expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json vec3_list_json(const std::vector<Vec3>& pts) {
  json arr = json::array();
  for (const auto& p : pts) arr.push_back(vec3_json(p));
  return arr;
}

inline std::vector<Vec3> vec3_list_from(const json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + ": expected an array");
  std::vector<Vec3> out;
  for (const auto& e : j) out.push_back(vec3_from(e, what));
  return out;
}

inline json poses_json(const std::vector<Pose>& poses) {
  json arr = json::array();
  for (const auto& p : poses) arr.push_back({{"position_m", vec3_json(p.position)}, {"yaw_rad", p.yaw}});
  return arr;
}

inline std::vector<Pose> poses_from(const json& j) {
  std::vector<Pose> out;
  for (const auto& e : j)
    out.push_back({vec3_from(e.at("position_m"), "position_m"), e.at("yaw_rad").get<double>()});
  return out;
}

inline void check_schema(const json& j, const char* expected) {
  const auto it = j.find("schema");
  if (it == j.end() || !it->is_string() || it->get<std::string>() != expected)
    throw ConfigError(std::string("expected schema \"") + expected + "\"");
}

}  // namespace detail

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

inline json scenario_to_json(const ScenarioConfig& c) {
  json sigma = json::array();
  for (Eigen::Index r = 0; r < c.sigma.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index k = 0; k < c.sigma.cols(); ++k) row.push_back(c.sigma(r, k));
    sigma.push_back(row);
  }
  json j = {
      {"schema", kScenarioSchema},
      {"layout",
       {{"anchors_body_m", detail::vec3_list_json(c.layout.anchors_body)},
        {"tags_body_m", detail::vec3_list_json(c.layout.tags_body)}}},
      {"sigma_m", sigma},
      {"repetitions_n", c.repetitions_n},
      {"ground_truth",
       {{"theta_rad", c.ground_truth.theta()},
        {"t_m", detail::vec3_json(c.ground_truth.translation)}}},
      {"r_max_m", c.r_max},
      {"speed_mps", c.speed},
      {"latency_s", c.latency_delta},
      {"rng_seed", c.rng_seed},
  };
  if (!c.schedule.robot1_poses.empty())
    j["schedule"] = {{"m1", c.schedule.params.m1},
                     {"m2", c.schedule.params.m2},
                     {"k", c.schedule.params.k},
                     {"robot1_poses", detail::poses_json(c.schedule.robot1_poses)},
                     {"robot2_poses", detail::poses_json(c.schedule.robot2_poses)}};
  return j;
}

/// Parses a scenario object. A missing schedule is sampled from rng_seed when
/// generate_missing_schedule is set, otherwise left empty.
inline ScenarioConfig scenario_from_json(const json& j, bool generate_missing_schedule = true) {
  try {
    detail::check_schema(j, kScenarioSchema);
    ScenarioConfig c;
    const json& layout = j.at("layout");
    c.layout.anchors_body = detail::vec3_list_from(layout.at("anchors_body_m"), "anchors_body_m");
    c.layout.tags_body = detail::vec3_list_from(layout.at("tags_body_m"), "tags_body_m");
    c.layout.validate();

    const json& sigma = j.at("sigma_m");
    if (sigma.is_number()) {
      c.sigma = uniform_sigma(c.layout, sigma.get<double>());
    } else {
      if (!sigma.is_array() || static_cast<int>(sigma.size()) != c.layout.j1())
        throw ConfigError("sigma_m must be a number or a J1 x J2 array");
      c.sigma.resize(c.layout.j1(), c.layout.j2());
      for (int r = 0; r < c.layout.j1(); ++r) {
        if (!sigma[r].is_array() || static_cast<int>(sigma[r].size()) != c.layout.j2())
          throw ConfigError("sigma_m must be a number or a J1 x J2 array");
        for (int k = 0; k < c.layout.j2(); ++k) c.sigma(r, k) = sigma[r][k].get<double>();
      }
    }
    c.repetitions_n = j.value("repetitions_n", 100);
    if (j.contains("ground_truth")) {
      const json& gt = j["ground_truth"];
      c.ground_truth = FrameTransform(gt.at("theta_rad").get<double>(),
                                      detail::vec3_from(gt.at("t_m"), "t_m"));
    }
    c.r_max = j.value("r_max_m", 10.0);
    c.speed = j.value("speed_mps", 0.0);
    c.latency_delta = j.value("latency_s", 0.01);
    c.rng_seed = j.value("rng_seed", std::uint64_t{0});

    if (j.contains("schedule")) {
      const json& s = j["schedule"];
      c.schedule.params = {s.at("m1").get<int>(), s.at("m2").get<int>(), s.at("k").get<int>()};
      c.schedule.robot1_poses = detail::poses_from(s.at("robot1_poses"));
      c.schedule.robot2_poses = detail::poses_from(s.at("robot2_poses"));
    } else if (generate_missing_schedule) {
      CounterRng rng(c.rng_seed, streams::schedule);
      c.schedule = generate_schedule(c.layout, c.r_max, rng);
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
}

inline ScenarioConfig load_scenario(const std::string& path, bool generate_missing_schedule = true) {
  return scenario_from_json(parse_json(read_file(path), path), generate_missing_schedule);
}

inline json experiment_to_json(const ExperimentSpec& e) {
  json methods = json::array();
  for (Method m : e.methods) methods.push_back(to_string(m));
  json base = scenario_to_json(e.base);
  base.erase("schedule");
  return {{"schema", kExperimentSchema},     {"base", base},
          {"sweep_variable", to_string(e.sweep_variable)},
          {"sweep_values", e.sweep_values},  {"trials", e.trials_l},
          {"methods", methods},              {"seed_base", e.seed_base}};
}

inline ExperimentSpec experiment_from_json(const json& j) {
  try {
    detail::check_schema(j, kExperimentSchema);
    ExperimentSpec e;
    e.base = scenario_from_json(j.at("base"), false);
    e.sweep_variable = sweep_variable_from_string(j.at("sweep_variable").get<std::string>());
    e.sweep_values = j.at("sweep_values").get<std::vector<double>>();
    e.trials_l = j.value("trials", 1000);
    e.methods.clear();
    for (const auto& m : j.value("methods", json::array({"two_step"})))
      e.methods.push_back(method_from_string(m.get<std::string>()));
    e.seed_base = j.value("seed_base", std::uint64_t{0});
    e.validate();
    return e;
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("experiment: ") + ex.what());
  }
}

inline ExperimentSpec load_experiment(const std::string& path) {
  return experiment_from_json(parse_json(read_file(path), path));
}

/// Range table: one row per sample, full double precision.
inline std::string measurements_csv(const MeasurementSet& m) {
  std::string out = std::string(kMeasurementCsvHeader) + "\n";
  char buf[160];
  for (int l2 = 0; l2 < m.n2(); ++l2)
    for (int l1 = 0; l1 < m.n1(); ++l1)
      for (int i = 0; i < m.repetitions_n; ++i) {
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%.17g,%.17g\n", l1, l2, i, m.range(l1, l2, i),
                      m.sigma_of_pair(l1, l2));
        out += buf;
      }
  return out;
}

inline json measurements_sidecar(const MeasurementSet& m) {
  return {{"schema", kMeasurementSchema},
          {"repetitions_n", m.repetitions_n},
          {"seed", m.seed},
          {"anchor_positions_m", detail::vec3_list_json(m.anchor_positions)},
          {"tag_positions_m", detail::vec3_list_json(m.tag_positions)}};
}

/// Writes <path> (CSV) and <path>.json (positions).
inline void export_measurements(const MeasurementSet& m, const std::string& path) {
  write_file(path, measurements_csv(m));
  write_file(path + ".json", measurements_sidecar(m).dump(2) + "\n");
}

inline MeasurementSet measurements_from(const std::string& csv, const json& sidecar) {
  MeasurementSet m;
  try {
    detail::check_schema(sidecar, kMeasurementSchema);
    m.repetitions_n = sidecar.at("repetitions_n").get<int>();
    m.seed = sidecar.value("seed", std::uint64_t{0});
    m.anchor_positions = detail::vec3_list_from(sidecar.at("anchor_positions_m"), "anchor_positions_m");
    m.tag_positions = detail::vec3_list_from(sidecar.at("tag_positions_m"), "tag_positions_m");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("measurement sidecar: ") + e.what());
  }
  if (m.repetitions_n < 1 || m.n1() < 1 || m.n2() < 1)
    throw ConfigError("measurement sidecar: empty position lists");
  m.ranges.assign(static_cast<std::size_t>(m.n()), std::nan(""));
  m.sigma_of_pair = Eigen::MatrixXd::Constant(m.n1(), m.n2(), std::nan(""));
  std::vector<bool> seen(m.ranges.size(), false);

  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kMeasurementCsvHeader)
    throw ConfigError("measurement CSV: expected header '" + std::string(kMeasurementCsvHeader) + "'");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int l1 = 0, l2 = 0, i = 0;
    double range = 0.0, sigma = 0.0;
    if (std::sscanf(line.c_str(), "%d,%d,%d,%lf,%lf", &l1, &l2, &i, &range, &sigma) != 5)
      throw ConfigError("measurement CSV: malformed row '" + line + "'");
    if (l1 < 0 || l1 >= m.n1() || l2 < 0 || l2 >= m.n2() || i < 0 || i >= m.repetitions_n)
      throw ConfigError("measurement CSV: index out of range in '" + line + "'");
    const std::size_t idx = m.index(l1, l2, i);
    m.ranges[idx] = range;
    seen[idx] = true;
    m.sigma_of_pair(l1, l2) = sigma;
  }
  for (bool s : seen)
    if (!s) throw ConfigError("measurement CSV: a range is missing for some (l1, l2, i)");
  m.validate();
  return m;
}

inline MeasurementSet load_measurements(const std::string& path) {
  return measurements_from(read_file(path), parse_json(read_file(path + ".json"), path + ".json"));
}

/// Estimate report. Timing is optional so repeated runs can produce identical bytes.
inline json estimate_report(const RefinedEstimate& e, const MeasurementSet& m, bool with_timing) {
  return {{"theta_hat_rad", e.transform.theta()},
          {"delta_theta_rad", e.delta_theta},
          {"t_hat_m", detail::vec3_json(e.transform.translation)},
          {"cost_first", e.cost_before},
          {"cost_refined", e.cost_after},
          {"rank_h", e.rank_h},
          {"n", m.n()},
          {"wall_time_s", with_timing ? e.wall_time : 0.0},
          {"seed", m.seed}};
}

inline json oracle_report(const RefinedEstimate& oracle, const RefinedEstimate& two_step) {
  return {{"theta_hat_rad", oracle.transform.theta()},
          {"t_hat_m", detail::vec3_json(oracle.transform.translation)},
          {"cost", oracle.cost_after},
          {"iterations", oracle.iterations},
          {"converged", oracle.converged},
          {"cost_gap", two_step.cost_after - oracle.cost_after}};
}

}  // namespace rte::io
