// Command-line driver for the relative transformation estimator.
//
// Exit codes: 0 success, 2 configuration/usage error, 3 degenerate geometry, 4 I/O error.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rte/rte.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitGeometry = 3;
constexpr int kExitIo = 4;

struct Options {
  std::string config;
  std::string out;
  std::string measurements;
  std::optional<std::uint64_t> seed;
  std::optional<double> sigma;
  std::optional<int> trials;
  unsigned workers = rte::default_workers();
  bool with_oracle = false;
  bool synthesize = false;
  bool timing = false;
  int j1 = 1;
  int j2 = 1;
  double rmax = 10.0;
  int verbosity = 0;
};

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    rte::io::write_file(path, text);
}

int cmd_gen_scenario(const Options& o) {
  rte::ScenarioConfig c;
  c.layout = rte::default_layout(o.j1, o.j2);
  c.sigma = rte::uniform_sigma(c.layout, o.sigma.value_or(1.0));
  c.r_max = o.rmax;
  c.rng_seed = o.seed.value_or(0);
  rte::CounterRng rng(c.rng_seed, rte::streams::schedule);
  c.schedule = rte::generate_schedule(c.layout, c.r_max, rng);
  const auto rep = rte::check_path_validity(c.layout, c.schedule, c.r_max);
  if (!rep.valid) throw rte::DegenerateGeometryError(rte::GeometryCondition::design_rank);

  emit(rte::io::scenario_to_json(c).dump(2) + "\n", o.out);
  std::cerr << "M1=" << c.schedule.params.m1 << " M2=" << c.schedule.params.m2
            << " K=" << c.schedule.params.k << "\n";
  return kExitOk;
}

int cmd_estimate(const Options& o) {
  if (o.config.empty()) throw rte::ConfigError("estimate needs --config <scenario.json>");
  if (o.synthesize == !o.measurements.empty())
    throw rte::ConfigError("estimate needs exactly one of --synthesize or --measurements");
  rte::ScenarioConfig c = rte::io::load_scenario(o.config);
  if (o.sigma) c.sigma = rte::uniform_sigma(c.layout, *o.sigma);
  if (o.seed) c.rng_seed = *o.seed;

  const rte::MeasurementSet m = o.synthesize ? rte::apply_speed_distortion(c)
                                             : rte::io::load_measurements(o.measurements);
  const rte::RefinedEstimate est = rte::two_step_estimate(m);
  nlohmann::json report = rte::io::estimate_report(est, m, o.timing);
  if (o.with_oracle) {
    const rte::RefinedEstimate oracle = rte::ml_oracle_full_gn(m, est.first.transform());
    report["oracle"] = rte::io::oracle_report(oracle, est);
  }
  emit(report.dump(2) + "\n", o.out);
  std::cerr << "theta_hat = " << est.transform.rotation.yaw().degrees() << " deg, t_hat = ["
            << est.transform.translation.transpose() << "] m\n";
  return kExitOk;
}

int cmd_check_path(const Options& o) {
  if (o.config.empty()) throw rte::ConfigError("check-path needs --config <scenario.json>");
  const rte::ScenarioConfig c = rte::io::load_scenario(o.config);
  const auto rep = rte::check_path_validity(c.layout, c.schedule, c.r_max);
  const nlohmann::json j = {{"valid", rep.valid},
                            {"rank_h", rep.rank_h},
                            {"rank_anchor_centered", rep.rank_anchor_centered},
                            {"rank_tags", rep.rank_tags},
                            {"anchor_sigma_min", rep.anchor_sigma_min},
                            {"tag_sigma_min", rep.tag_sigma_min},
                            {"issues", rep.issues}};
  emit(j.dump(2) + "\n", o.out);
  return rep.valid ? kExitOk : kExitGeometry;
}

int cmd_bench(const Options& o) {
  rte::ScenarioConfig c;
  if (!o.config.empty()) c = rte::io::load_scenario(o.config, false);
  if (o.sigma) c.sigma = rte::uniform_sigma(c.layout, *o.sigma);
  const int runs = o.trials.value_or(100);
  const auto rows = rte::timing_report(
      c, {rte::Method::first_step_only, rte::Method::two_step, rte::Method::full_gn_oracle}, runs,
      10, o.seed.value_or(0));
  std::string csv = "method,mean_time_s,runs\n";
  for (const auto& r : rows)
    csv += std::string(rte::to_string(r.method)) + "," + rte::format_g9(r.mean_seconds) + "," +
           std::to_string(r.runs) + "\n";
  emit(csv, o.out);
  return kExitOk;
}

int cmd_sweep(const Options& o) {
  if (o.config.empty()) throw rte::ConfigError("sweep needs --config <experiment.json>");
  rte::ExperimentSpec spec = rte::io::load_experiment(o.config);
  if (o.trials) spec.trials_l = *o.trials;
  if (o.seed) spec.seed_base = *o.seed;
  if (o.sigma) spec.base.sigma = rte::uniform_sigma(spec.base.layout, *o.sigma);
  rte::MonteCarloResult res = rte::run_monte_carlo(spec, o.workers);
  if (!o.timing)
    for (auto& row : res.summary.rows) row.mean_time = 0.0;

  if (o.out.empty() || o.out == "-")
    std::cout << rte::results_csv(res.summary);
  else
    rte::export_results(res.summary, o.out);

  std::fprintf(stderr, "%-12s %-16s %12s %12s %9s\n", rte::to_string(spec.sweep_variable),
               "method", "rmse_t_m", "rmse_r", "failures");
  for (const auto& r : res.summary.rows)
    std::fprintf(stderr, "%-12.6g %-16s %12.6g %12.6g %5d/%-5d\n", r.sweep_value,
                 rte::to_string(r.method), r.rmse_t, r.rmse_r, r.failures, r.trials);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Relative yaw + translation estimation between two robots from UWB ranges and odometry.\n"
      "Angles are printed in degrees; files store radians, meters and seconds."};
  app.require_subcommand(1, 1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Input scenario or experiment JSON");
    sub->add_option("--out", o.out, "Output path (default: stdout)");
    sub->add_option("--seed", o.seed, "Seed override");
    sub->add_flag("-v,--verbose", o.verbosity, "Increase verbosity");
  };

  auto* gen = app.add_subcommand("gen-scenario", "Sample a valid waypoint schedule");
  add_common(gen);
  gen->add_option("--j1", o.j1, "Number of anchors on robot 1")->check(CLI::Range(1, 4));
  gen->add_option("--j2", o.j2, "Number of tags on robot 2")->check(CLI::Range(1, 3));
  gen->add_option("--rmax", o.rmax, "Maximum operating radius [m]")->check(CLI::PositiveNumber);
  gen->add_option("--sigma", o.sigma, "Range noise std [m]")->check(CLI::PositiveNumber);

  auto* est = app.add_subcommand("estimate", "Run the two-step estimator on one data set");
  add_common(est);
  est->add_option("--measurements", o.measurements, "Range CSV (positions in <csv>.json)");
  est->add_flag("--synthesize", o.synthesize, "Simulate ranges from the scenario");
  est->add_option("--sigma", o.sigma, "Range noise std override [m]")->check(CLI::PositiveNumber);
  est->add_flag("--with-oracle", o.with_oracle, "Also run the iterated Gauss-Newton ML oracle");
  est->add_flag("--timing", o.timing, "Record wall time in the report");

  auto* check = app.add_subcommand("check-path", "Check identifiability of a scenario path");
  add_common(check);

  auto* bench = app.add_subcommand("bench", "Time the estimators at scenario scale");
  add_common(bench);
  bench->add_option("--trials", o.trials, "Timed runs (after 10 warmups)")->check(CLI::PositiveNumber);
  bench->add_option("--sigma", o.sigma, "Range noise std override [m]")->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("sweep", "Run a Monte Carlo sweep from an experiment JSON");
  add_common(sweep);
  sweep->add_option("--trials", o.trials, "Trials per sweep value")->check(CLI::PositiveNumber);
  sweep->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--sigma", o.sigma, "Range noise std override [m]")->check(CLI::PositiveNumber);
  sweep->add_flag("--timing", o.timing, "Record mean wall time (output no longer byte-stable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_scenario(o);
    if (*est) return cmd_estimate(o);
    if (*check) return cmd_check_path(o);
    if (*bench) return cmd_bench(o);
    if (*sweep) return cmd_sweep(o);
  } catch (const rte::DegenerateGeometryError& e) {
    std::cerr << "degenerate geometry: " << e.what() << "\n";
    return kExitGeometry;
  } catch (const rte::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const rte::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
