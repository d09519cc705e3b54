#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

#include "rte/estimator.hpp"

namespace rte {

struct FullGnOptions {
  double tol = 1e-12;  // stop when the increment norm falls below this
  int max_iter = 100;
  int max_halvings = 30;
};

/// Iterated Gauss-Newton on the ML cost with step halving, used as the ML reference.
/// Non-convergence is reported through `converged`, never thrown.
inline RefinedEstimate ml_oracle_full_gn(const MeasurementSet& m, const FrameTransform& init,
                                         const FullGnOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  double theta = init.theta();
  Vec3 t = init.translation;
  double current = cost(m, init);

  RefinedEstimate out;
  out.cost_before = current;
  out.converged = false;
  for (int it = 0; it < opt.max_iter; ++it) {
    const Linearization lin = linearize(m, theta, t, true);
    out.dropped_pairs = lin.dropped_pairs;
    Eigen::Vector4d step = gn_increment(lin);
    out.iterations = it + 1;
    if (step.norm() < opt.tol) {
      theta += step(0);
      t += step.tail<3>();
      current = cost(m, FrameTransform(theta, t));
      out.converged = true;
      break;
    }
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h) {
      const FrameTransform trial(theta + step(0), t + step.tail<3>());
      const double c = cost(m, trial);
      // tolerate round-off in the comparison near the optimum
      if (c <= current + 1e-12 * std::max(1.0, current)) {
        theta += step(0);
        t += step.tail<3>();
        current = c;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // no descent along the GN direction at machine precision
      out.converged = true;
      break;
    }
  }
  out.transform = FrameTransform(theta, t);
  out.delta_theta = angle_diff(theta, init.theta());
  out.delta_t = t - init.translation;
  out.cost_after = current;
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Axis-aligned translation search box.
struct SearchBox {
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);
};

struct GridSearchResult {
  FrameTransform transform{};
  double cost = 0.0;
  bool on_boundary = false;  // coarse argmin touched the box: optimum may lie outside
  double theta_resolution = 0.0;
  Vec3 t_resolution = Vec3::Zero();
};

namespace detail {

/// Sufficient statistics of the repeated ranges per pair, so a cost evaluation is O(N1 N2).
struct PairSums {
  std::vector<double> weight, sum, sum_sq;
  double count = 0.0;

  explicit PairSums(const MeasurementSet& m) {
    const auto pairs = static_cast<std::size_t>(m.n1() * m.n2());
    weight.resize(pairs);
    sum.assign(pairs, 0.0);
    sum_sq.assign(pairs, 0.0);
    count = m.repetitions_n;
    for (int l2 = 0; l2 < m.n2(); ++l2)
      for (int l1 = 0; l1 < m.n1(); ++l1) {
        const auto p = static_cast<std::size_t>(l2 * m.n1() + l1);
        weight[p] = 1.0 / (m.sigma_of_pair(l1, l2) * m.sigma_of_pair(l1, l2));
        for (int i = 0; i < m.repetitions_n; ++i) {
          const double d = m.range(l1, l2, i);
          sum[p] += d;
          sum_sq[p] += d * d;
        }
      }
  }

  double cost(const MeasurementSet& m, double theta, const Vec3& t) const {
    const double c = std::cos(theta), s = std::sin(theta);
    double total = 0.0;
    for (int l2 = 0; l2 < m.n2(); ++l2) {
      const Vec3& q = m.tag_positions[l2];
      const Vec3 moved(c * q.x() - s * q.y() + t.x(), s * q.x() + c * q.y() + t.y(),
                       q.z() + t.z());
      for (int l1 = 0; l1 < m.n1(); ++l1) {
        const auto p = static_cast<std::size_t>(l2 * m.n1() + l1);
        const double pred = (m.anchor_positions[l1] - moved).norm();
        total += weight[p] * (sum_sq[p] - 2.0 * pred * sum[p] + count * pred * pred);
      }
    }
    return total;
  }
};

}  // namespace detail

/// Exhaustive ML search: theta on a uniform grid of theta_steps over [0, 2pi), t on a
/// t_steps^3 lattice spanning the box, then coordinate descent with step halving down to 1e-6.
inline GridSearchResult grid_search_oracle(const MeasurementSet& m, int theta_steps,
                                           const SearchBox& box, int t_steps) {
  m.validate();
  if (theta_steps < 1 || t_steps < 2) throw ConfigError("grid search needs >= 1 yaw and >= 2 t steps");
  if ((box.hi.array() <= box.lo.array()).any()) throw ConfigError("grid search box is empty");
  const detail::PairSums stats(m);

  GridSearchResult res;
  res.theta_resolution = kTwoPi / theta_steps;
  res.t_resolution = (box.hi - box.lo) / static_cast<double>(t_steps - 1);

  double best = std::numeric_limits<double>::infinity();
  int best_theta = 0;
  std::array<int, 3> best_idx{0, 0, 0};
  for (int a = 0; a < theta_steps; ++a) {
    const double theta = a * res.theta_resolution;
    for (int i = 0; i < t_steps; ++i)
      for (int j = 0; j < t_steps; ++j)
        for (int k = 0; k < t_steps; ++k) {
          const Vec3 t = box.lo + Vec3(i, j, k).cwiseProduct(res.t_resolution);
          const double c = stats.cost(m, theta, t);
          if (c < best) {
            best = c;
            best_theta = a;
            best_idx = {i, j, k};
          }
        }
  }
  for (int idx : best_idx)
    if (idx == 0 || idx == t_steps - 1) res.on_boundary = true;

  Eigen::Vector4d x(best_theta * res.theta_resolution,
                    box.lo.x() + best_idx[0] * res.t_resolution.x(),
                    box.lo.y() + best_idx[1] * res.t_resolution.y(),
                    box.lo.z() + best_idx[2] * res.t_resolution.z());
  Eigen::Vector4d step(res.theta_resolution, res.t_resolution.x(), res.t_resolution.y(),
                       res.t_resolution.z());
  auto eval = [&](const Eigen::Vector4d& v) { return stats.cost(m, v(0), v.tail<3>()); };

  constexpr int kMaxSweeps = 2'000'000;
  for (int sweep = 0; sweep < kMaxSweeps && step.maxCoeff() >= 1e-6; ++sweep) {
    bool improved = false;
    for (int c = 0; c < 4; ++c)
      for (double sign : {1.0, -1.0}) {
        Eigen::Vector4d trial = x;
        trial(c) += sign * step(c);
        const double v = eval(trial);
        if (v < best) {
          best = v;
          x = trial;
          improved = true;
        }
      }
    if (!improved) step *= 0.5;
  }

  res.transform = FrameTransform(x(0), x.tail<3>());
  res.cost = cost(m, res.transform);
  return res;
}

}  // namespace rte
