#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rte/estimator.hpp"
#include "rte/oracles.hpp"
#include "rte/scenario.hpp"

namespace rte {

enum class Method { two_step, first_step_only, full_gn_oracle };
enum class SweepVariable { sigma, r_max, t_norm, speed, n_repetitions };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::two_step: return "two_step";
    case Method::first_step_only: return "first_step_only";
    case Method::full_gn_oracle: return "full_gn_oracle";
  }
  return "?";
}

inline const char* to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::sigma: return "sigma";
    case SweepVariable::r_max: return "r_max";
    case SweepVariable::t_norm: return "t_norm";
    case SweepVariable::speed: return "speed";
    case SweepVariable::n_repetitions: return "n_repetitions";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  for (Method m : {Method::two_step, Method::first_step_only, Method::full_gn_oracle})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown method '" + s + "'");
}

inline SweepVariable sweep_variable_from_string(const std::string& s) {
  for (SweepVariable v : {SweepVariable::sigma, SweepVariable::r_max, SweepVariable::t_norm,
                          SweepVariable::speed, SweepVariable::n_repetitions})
    if (s == to_string(v)) return v;
  throw ConfigError("unknown sweep variable '" + s + "'");
}

struct ExperimentSpec {
  ScenarioConfig base{};  // schedule is resampled per trial
  SweepVariable sweep_variable = SweepVariable::sigma;
  std::vector<double> sweep_values{1.0};
  int trials_l = 1;
  std::vector<Method> methods{Method::two_step};
  std::uint64_t seed_base = 0;

  void validate() const {
    if (trials_l < 1) throw ConfigError("trials must be >= 1");
    if (sweep_values.empty()) throw ConfigError("sweep_values must be nonempty");
    for (std::size_t i = 1; i < sweep_values.size(); ++i)
      if (!(sweep_values[i] > sweep_values[i - 1]))
        throw ConfigError("sweep_values must be strictly increasing");
    if (methods.empty()) throw ConfigError("at least one method is required");
    base.layout.validate();
  }
};

struct TrialResult {
  std::uint64_t seed = 0;
  std::size_t sweep_index = 0;
  Method method = Method::two_step;
  FrameTransform estimate{};
  FrameTransform truth{};
  double wall_time = 0.0;
  bool success = false;
  std::string error;  // empty on success
};

struct SweepRow {
  double sweep_value = 0.0;
  Method method = Method::two_step;
  double rmse_t = 0.0;  // meters
  double rmse_r = 0.0;  // Frobenius
  double mean_time = 0.0;
  int failures = 0;
  int trials = 0;
};

struct SweepSummary {
  std::vector<SweepRow> rows;
  std::uint64_t seed_base = 0;

  const SweepRow* find(double value, Method m) const {
    for (const auto& r : rows)
      if (r.sweep_value == value && r.method == m) return &r;
    return nullptr;
  }
};

struct MonteCarloResult {
  SweepSummary summary;
  std::vector<TrialResult> trials;
};

inline double rmse_translation(const std::vector<FrameTransform>& estimates,
                               const std::vector<FrameTransform>& truths) {
  if (estimates.empty() || estimates.size() != truths.size())
    throw ConfigError("rmse needs equal-length nonempty inputs");
  double acc = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i)
    acc += (estimates[i].translation - truths[i].translation).squaredNorm();
  return std::sqrt(acc / static_cast<double>(estimates.size()));
}

/// Frobenius error of the full 3x3 rotation matrices.
inline double rmse_rotation(const std::vector<FrameTransform>& estimates,
                            const std::vector<FrameTransform>& truths) {
  if (estimates.empty() || estimates.size() != truths.size())
    throw ConfigError("rmse needs equal-length nonempty inputs");
  double acc = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i)
    acc += (estimates[i].rotation.matrix() - truths[i].rotation.matrix()).squaredNorm();
  return std::sqrt(acc / static_cast<double>(estimates.size()));
}

/// Applies one sweep value to a copy of the base scenario.
inline ScenarioConfig apply_sweep_value(const ScenarioConfig& base, SweepVariable var,
                                        double value) {
  ScenarioConfig c = base;
  switch (var) {
    case SweepVariable::sigma:
      c.sigma = uniform_sigma(c.layout, value);
      break;
    case SweepVariable::r_max:
      c.r_max = value;
      break;
    case SweepVariable::t_norm: {
      const double norm = c.ground_truth.translation.norm();
      const Vec3 dir = norm > 0.0 ? Vec3(c.ground_truth.translation / norm)
                                  : Vec3(Vec3::Ones().normalized());
      c.ground_truth.translation = value * dir;
      break;
    }
    case SweepVariable::speed:
      c.speed = value;
      break;
    case SweepVariable::n_repetitions:
      c.repetitions_n = static_cast<int>(std::lround(value));
      break;
  }
  return c;
}

/// Scenario for one trial: fresh path from the trial seed, same seed for the noise stream.
inline ScenarioConfig trial_scenario(const ScenarioConfig& cfg, std::uint64_t seed) {
  ScenarioConfig c = cfg;
  c.rng_seed = seed;
  CounterRng rng(seed, streams::schedule);
  c.schedule = generate_schedule(c.layout, c.r_max, rng);
  return c;
}

/// Runs one estimator on a measurement set; wall time covers the estimator only.
inline TrialResult run_method(const MeasurementSet& m, Method method, const FrameTransform& truth) {
  TrialResult r;
  r.method = method;
  r.truth = truth;
  r.seed = m.seed;
  try {
    switch (method) {
      case Method::two_step: {
        const RefinedEstimate e = two_step_estimate(m);
        r.estimate = e.transform;
        r.wall_time = e.wall_time;
        break;
      }
      case Method::first_step_only: {
        const FirstStepEstimate e = first_step_estimate(m);
        r.estimate = e.transform();
        r.wall_time = e.wall_time;
        break;
      }
      case Method::full_gn_oracle: {
        const FirstStepEstimate first = first_step_estimate(m);
        const RefinedEstimate e = ml_oracle_full_gn(m, first.transform());
        r.estimate = e.transform;
        r.wall_time = first.wall_time + e.wall_time;
        break;
      }
    }
    r.success = r.estimate.translation.allFinite() && std::isfinite(r.estimate.theta());
    if (!r.success) r.error = "non-finite estimate";
  } catch (const std::exception& e) {
    r.success = false;
    r.error = e.what();
  }
  return r;
}

inline unsigned default_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

/// Monte Carlo sweep. Trial i of every sweep value uses seed seed_base + i, so sweep points
/// share paths and noise draws and differ only in the swept variable. Results are ordered by
/// (sweep index, trial) regardless of the worker count.
inline MonteCarloResult run_monte_carlo(const ExperimentSpec& spec, unsigned workers = 1) {
  spec.validate();
  const std::size_t n_values = spec.sweep_values.size();
  const auto n_trials = static_cast<std::size_t>(spec.trials_l);
  const std::size_t n_methods = spec.methods.size();
  std::vector<TrialResult> results(n_values * n_trials * n_methods);

  auto run_job = [&](std::size_t job) {
    const std::size_t v = job / n_trials;
    const std::size_t trial = job % n_trials;
    const std::uint64_t seed = spec.seed_base + trial;
    const std::size_t base_slot = job * n_methods;
    std::optional<MeasurementSet> m;
    FrameTransform truth;
    std::string error;
    try {
      const ScenarioConfig cfg = trial_scenario(
          apply_sweep_value(spec.base, spec.sweep_variable, spec.sweep_values[v]), seed);
      truth = cfg.ground_truth;
      m = apply_speed_distortion(cfg);
    } catch (const std::exception& e) {
      error = e.what();
    }
    for (std::size_t k = 0; k < n_methods; ++k) {
      TrialResult r;
      if (m) {
        r = run_method(*m, spec.methods[k], truth);
      } else {
        r.method = spec.methods[k];
        r.error = error;
      }
      r.seed = seed;
      r.sweep_index = v;
      results[base_slot + k] = std::move(r);
    }
  };

  const std::size_t jobs = n_values * n_trials;
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(jobs)));
  if (workers == 1) {
    for (std::size_t j = 0; j < jobs; ++j) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < jobs; j = next++) run_job(j);
      });
  }

  MonteCarloResult out;
  out.summary.seed_base = spec.seed_base;
  for (std::size_t v = 0; v < n_values; ++v)
    for (std::size_t k = 0; k < n_methods; ++k) {
      std::vector<FrameTransform> est, truth;
      double time = 0.0;
      SweepRow row;
      row.sweep_value = spec.sweep_values[v];
      row.method = spec.methods[k];
      row.trials = spec.trials_l;
      for (std::size_t t = 0; t < n_trials; ++t) {
        const TrialResult& r = results[(v * n_trials + t) * n_methods + k];
        if (!r.success) {
          ++row.failures;
          continue;
        }
        est.push_back(r.estimate);
        truth.push_back(r.truth);
        time += r.wall_time;
      }
      if (!est.empty()) {
        row.rmse_t = rmse_translation(est, truth);
        row.rmse_r = rmse_rotation(est, truth);
        row.mean_time = time / static_cast<double>(est.size());
      } else {
        row.rmse_t = row.rmse_r = row.mean_time = std::nan("");
      }
      out.summary.rows.push_back(row);
    }
  out.trials = std::move(results);
  return out;
}

struct TimingRow {
  Method method = Method::two_step;
  double mean_seconds = 0.0;
  int runs = 0;
};

/// Mean per-estimate wall time on `runs` distinct seeded instances, after `warmup` untimed
/// runs. Every method is timed on the same instances, serially on the calling thread.
inline std::vector<TimingRow> timing_report(const ScenarioConfig& base,
                                            const std::vector<Method>& methods, int runs = 100,
                                            int warmup = 10, std::uint64_t seed_base = 0) {
  if (runs < 1 || warmup < 0) throw ConfigError("timing needs runs >= 1 and warmup >= 0");
  std::vector<MeasurementSet> instances;
  instances.reserve(static_cast<std::size_t>(runs + warmup));
  for (int i = 0; i < runs + warmup; ++i)
    instances.push_back(apply_speed_distortion(trial_scenario(base, seed_base + i)));

  std::vector<TimingRow> out;
  for (Method method : methods) {
    TimingRow row;
    row.method = method;
    for (int i = 0; i < runs + warmup; ++i) {
      const TrialResult r = run_method(instances[i], method, base.ground_truth);
      if (i < warmup || !r.success) continue;
      row.mean_seconds += r.wall_time;
      ++row.runs;
    }
    if (row.runs > 0) row.mean_seconds /= row.runs;
    out.push_back(row);
  }
  return out;
}

inline constexpr const char* kResultsCsvHeader =
    "sweep_value,method,rmse_t_m,rmse_r,mean_time_s,failures,trials,seed_base";

inline std::string format_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string results_csv(const SweepSummary& s) {
  std::ostringstream os;
  os << kResultsCsvHeader << '\n';
  for (const auto& r : s.rows)
    os << format_g9(r.sweep_value) << ',' << to_string(r.method) << ',' << format_g9(r.rmse_t)
       << ',' << format_g9(r.rmse_r) << ',' << format_g9(r.mean_time) << ',' << r.failures << ','
       << r.trials << ',' << s.seed_base << '\n';
  return os.str();
}

inline void export_results(const SweepSummary& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << results_csv(s);
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline SweepSummary parse_results_csv(std::istream& in) {
  SweepSummary s;
  std::string line;
  if (!std::getline(in, line) || line != kResultsCsvHeader)
    throw ConfigError("results CSV: unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 8) throw ConfigError("results CSV: expected 8 fields in '" + line + "'");
    SweepRow r;
    r.sweep_value = std::stod(f[0]);
    r.method = method_from_string(f[1]);
    r.rmse_t = std::stod(f[2]);
    r.rmse_r = std::stod(f[3]);
    r.mean_time = std::stod(f[4]);
    r.failures = std::stoi(f[5]);
    r.trials = std::stoi(f[6]);
    s.seed_base = std::stoull(f[7]);
    s.rows.push_back(r);
  }
  return s;
}

inline SweepSummary read_results(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return parse_results_csv(in);
}

}  // namespace rte
