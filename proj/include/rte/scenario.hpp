#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rte/errors.hpp"
#include "rte/geometry.hpp"
#include "rte/rng.hpp"

namespace rte {

/// Odometry pose of a body frame: position in D_n and yaw about z.
struct Pose {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;

  bool operator==(const Pose& o) const { return position == o.position && yaw == o.yaw; }
};

/// UWB mounting offsets in each robot's body frame.
struct UwbLayout {
  std::vector<Vec3> anchors_body;  // J1 offsets on robot 1
  std::vector<Vec3> tags_body;     // J2 offsets on robot 2

  int j1() const { return static_cast<int>(anchors_body.size()); }
  int j2() const { return static_cast<int>(tags_body.size()); }

  /// Throws ConfigError when counts are out of range or the static layouts are coplanar.
  void validate() const;
};

struct DesignParams {
  int m1 = 0;
  int m2 = 0;
  int k = 0;

  bool operator==(const DesignParams&) const = default;
};

/// Minimum waypoint counts that make the design matrix full column rank.
inline DesignParams design_params(int j1, int j2) {
  if (j1 < 1 || j1 > 4) throw ConfigError("J1 must be in [1, 4], got " + std::to_string(j1));
  if (j2 < 1 || j2 > 3) throw ConfigError("J2 must be in [1, 3], got " + std::to_string(j2));
  const int m1 = (4 + j1 - 1) / j1;
  const int m2 = (3 + j2 - 1) / j2;
  return {m1, m2, m1 * m2};
}

inline Vec3 uwb_position_in_odom(const Pose& pose, const Vec3& offset_body) {
  return pose.position + yaw_rotation(pose.yaw).matrix() * offset_body;
}

/// Layouts used in the simulations: a single UWB at [0,0,10], or a prefix of the
/// four-anchor / three-tag rigs.
inline UwbLayout default_layout(int j1, int j2) {
  design_params(j1, j2);
  static const std::vector<Vec3> anchors{Vec3(0, 0, 0), Vec3(10, 0, 0), Vec3(0, 10, 0),
                                         Vec3(0, 0, 10)};
  static const std::vector<Vec3> tags{Vec3(10, 0, 0), Vec3(0, 10, 0), Vec3(0, 0, 10)};
  UwbLayout layout;
  if (j1 == 1)
    layout.anchors_body = {Vec3(0, 0, 10)};
  else
    layout.anchors_body.assign(anchors.begin(), anchors.begin() + j1);
  if (j2 == 1)
    layout.tags_body = {Vec3(0, 0, 10)};
  else
    layout.tags_body.assign(tags.begin(), tags.begin() + j2);
  return layout;
}

inline Eigen::MatrixXd stack_columns(const std::vector<Vec3>& pts) {
  Eigen::MatrixXd m(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = pts[i];
  return m;
}

inline Eigen::MatrixXd centered(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd c = m;
  c.colwise() -= m.rowwise().mean();
  return c;
}

/// Third singular value of a 3xN matrix; zero when N < 3.
inline double third_singular_value(const Eigen::MatrixXd& m) {
  if (m.cols() < 3) return 0.0;
  return smallest_singular_value(m);
}

inline void UwbLayout::validate() const {
  design_params(j1(), j2());
  if (j1() == 4) {
    // |det| of the edge matrix is 6x the tetrahedron volume
    Mat3 edges;
    for (int i = 0; i < 3; ++i) edges.col(i) = anchors_body[i + 1] - anchors_body[0];
    if (std::abs(edges.determinant()) / 6.0 <= 1e-9)
      throw ConfigError("four anchor offsets must be non-coplanar");
  }
  if (j2() == 3) {
    Mat3 tags;
    for (int i = 0; i < 3; ++i) tags.col(i) = tags_body[i];
    if (std::abs(tags.determinant()) / 6.0 <= 1e-9)
      throw ConfigError("three tag offsets must be non-coplanar with the body origin");
  }
}

/// Both robots' odometry poses at the K time steps.
struct WaypointSchedule {
  std::vector<Pose> robot1_poses;
  std::vector<Pose> robot2_poses;
  DesignParams params;
};

/// Anchor positions p1^{l1} in D1, l1 = J1 k + j1 over the first M1 steps.
inline std::vector<Vec3> anchor_positions(const UwbLayout& layout,
                                          const WaypointSchedule& schedule) {
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(schedule.params.m1 * layout.j1()));
  for (int k = 0; k < schedule.params.m1; ++k)
    for (const auto& off : layout.anchors_body)
      out.push_back(uwb_position_in_odom(schedule.robot1_poses.at(k), off));
  return out;
}

/// Tag positions p2^{l2} in D2, l2 = J2 b + j2, one pose per block of M1 steps.
inline std::vector<Vec3> tag_positions(const UwbLayout& layout, const WaypointSchedule& schedule) {
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(schedule.params.m2 * layout.j2()));
  for (int b = 0; b < schedule.params.m2; ++b)
    for (const auto& off : layout.tags_body)
      out.push_back(uwb_position_in_odom(
          schedule.robot2_poses.at(static_cast<std::size_t>(b * schedule.params.m1)), off));
  return out;
}

/// Structural problems with a schedule (block repetition, dwell, radius); empty when sound.
inline std::vector<std::string> schedule_issues(const UwbLayout& layout,
                                                const WaypointSchedule& s, double r_max) {
  std::vector<std::string> issues;
  DesignParams expect;
  try {
    expect = design_params(layout.j1(), layout.j2());
  } catch (const ConfigError& e) {
    issues.emplace_back(e.what());
    return issues;
  }
  if (!(s.params == expect)) {
    issues.emplace_back("schedule (M1, M2, K) does not match UWB counts");
    return issues;
  }
  const auto k = static_cast<std::size_t>(expect.k);
  if (s.robot1_poses.size() != k || s.robot2_poses.size() != k) {
    issues.emplace_back("schedule must hold exactly K poses per robot");
    return issues;
  }
  for (int b = 1; b < expect.m2; ++b)
    for (int i = 0; i < expect.m1; ++i)
      if (!(s.robot1_poses[b * expect.m1 + i] == s.robot1_poses[i])) {
        issues.emplace_back("robot 1 path block is not repeated identically");
        b = expect.m2;
        break;
      }
  for (int b = 0; b < expect.m2; ++b)
    for (int i = 1; i < expect.m1; ++i)
      if (!(s.robot2_poses[b * expect.m1 + i] == s.robot2_poses[b * expect.m1])) {
        issues.emplace_back("robot 2 moves within a block of M1 steps");
        b = expect.m2;
        break;
      }
  for (std::size_t i = 0; i < k; ++i)
    if (s.robot1_poses[i].position.norm() > r_max * (1.0 + 1e-12) ||
        s.robot2_poses[i].position.norm() > r_max * (1.0 + 1e-12)) {
      issues.emplace_back("waypoint outside the operating radius");
      break;
    }
  return issues;
}

namespace detail {

inline Vec3 sample_in_ball(double radius, CounterRng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec3 dir;
  do {
    dir = Vec3(normal(rng), normal(rng), normal(rng));
  } while (dir.norm() < 1e-12);
  return dir.normalized() * radius * std::cbrt(unit(rng));
}

inline double sample_yaw(CounterRng& rng) {
  std::uniform_real_distribution<double> yaw(0.0, kTwoPi);
  return yaw(rng);
}

}  // namespace detail

inline constexpr int kMaxScheduleAttempts = 10000;
inline constexpr double kConditioningFloor = 0.05;  // fraction of r_max

/// Random path satisfying the waypoint design rules. The first pose of each robot is the
/// odometry origin; the remaining ones are uniform in the ball of radius r_max with uniform
/// yaw. Resamples until the centered anchor matrix and the tag matrix are well conditioned.
inline WaypointSchedule generate_schedule(const UwbLayout& layout, double r_max, CounterRng& rng) {
  layout.validate();
  if (!(r_max > 0.0) || !std::isfinite(r_max)) throw ConfigError("r_max must be positive");
  const DesignParams dp = design_params(layout.j1(), layout.j2());
  const double floor = kConditioningFloor * r_max;

  for (int attempt = 0; attempt < kMaxScheduleAttempts; ++attempt) {
    std::vector<Pose> path1(static_cast<std::size_t>(dp.m1));
    std::vector<Pose> stops2(static_cast<std::size_t>(dp.m2));
    for (int i = 1; i < dp.m1; ++i)
      path1[i] = {detail::sample_in_ball(r_max, rng), detail::sample_yaw(rng)};
    for (int i = 1; i < dp.m2; ++i)
      stops2[i] = {detail::sample_in_ball(r_max, rng), detail::sample_yaw(rng)};

    WaypointSchedule s;
    s.params = dp;
    s.robot1_poses.reserve(static_cast<std::size_t>(dp.k));
    s.robot2_poses.reserve(static_cast<std::size_t>(dp.k));
    for (int b = 0; b < dp.m2; ++b)
      for (int i = 0; i < dp.m1; ++i) {
        s.robot1_poses.push_back(path1[i]);
        s.robot2_poses.push_back(stops2[b]);
      }

    const double a3 = third_singular_value(centered(stack_columns(anchor_positions(layout, s))));
    const double t3 = third_singular_value(stack_columns(tag_positions(layout, s)));
    if (a3 > floor && t3 > floor) return s;
  }
  throw ConfigError("generate_schedule: no well-conditioned path found after " +
                    std::to_string(kMaxScheduleAttempts) + " attempts (r_max too small?)");
}

inline WaypointSchedule generate_schedule(int j1, int j2, double r_max, CounterRng& rng) {
  return generate_schedule(default_layout(j1, j2), r_max, rng);
}

struct ScenarioConfig {
  UwbLayout layout = default_layout(1, 1);
  WaypointSchedule schedule;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Ones(1, 1);  // J1 x J2, meters
  int repetitions_n = 100;
  FrameTransform ground_truth{deg2rad(60.0), Vec3(20.0, 20.0, 20.0)};
  double r_max = 10.0;
  double speed = 0.0;           // m/s
  double latency_delta = 0.01;  // s
  std::uint64_t rng_seed = 0;

  /// Throws ConfigError describing the first violated invariant.
  void validate() const {
    layout.validate();
    if (sigma.rows() != layout.j1() || sigma.cols() != layout.j2())
      throw ConfigError("sigma must be a J1 x J2 matrix");
    if (!sigma.allFinite() || (sigma.array() <= 0.0).any())
      throw ConfigError("all sigma entries must be finite and > 0");
    if (repetitions_n < 1) throw ConfigError("repetitions N must be >= 1");
    if (!(r_max > 0.0)) throw ConfigError("r_max must be positive");
    if (speed < 0.0 || latency_delta < 0.0)
      throw ConfigError("speed and latency must be non-negative");
    const auto issues = schedule_issues(layout, schedule, r_max);
    if (!issues.empty()) throw ConfigError("invalid schedule: " + issues.front());
  }
};

/// Uniform per-pair noise level.
inline Eigen::MatrixXd uniform_sigma(const UwbLayout& layout, double sigma) {
  return Eigen::MatrixXd::Constant(layout.j1(), layout.j2(), sigma);
}

/// Paper-default scenario for a UWB regime with a freshly sampled schedule.
inline ScenarioConfig make_scenario(const UwbLayout& layout, double sigma, int repetitions,
                                    double r_max, std::uint64_t seed) {
  ScenarioConfig c;
  c.layout = layout;
  c.sigma = uniform_sigma(layout, sigma);
  c.repetitions_n = repetitions;
  c.r_max = r_max;
  c.rng_seed = seed;
  CounterRng rng(seed, streams::schedule);
  c.schedule = generate_schedule(layout, r_max, rng);
  return c;
}

/// All range samples with the odometry positions they pair with.
/// Ranges are stored tag-major: index = (l2 N1 + l1) N + i, the row order of the design matrix.
struct MeasurementSet {
  std::vector<Vec3> anchor_positions;  // N1, frame D1
  std::vector<Vec3> tag_positions;     // N2, frame D2
  std::vector<double> ranges;          // n = N N1 N2
  Eigen::MatrixXd sigma_of_pair;       // N1 x N2
  int repetitions_n = 0;
  std::uint64_t seed = 0;

  int n1() const { return static_cast<int>(anchor_positions.size()); }
  int n2() const { return static_cast<int>(tag_positions.size()); }
  int n() const { return repetitions_n * n1() * n2(); }

  std::size_t index(int l1, int l2, int i) const {
    return (static_cast<std::size_t>(l2) * static_cast<std::size_t>(n1()) +
            static_cast<std::size_t>(l1)) *
               static_cast<std::size_t>(repetitions_n) +
           static_cast<std::size_t>(i);
  }
  double range(int l1, int l2, int i) const { return ranges[index(l1, l2, i)]; }

  /// Throws ConfigError when sizes disagree or sigma is not positive.
  void validate() const {
    if (repetitions_n < 1 || n1() < 1 || n2() < 1)
      throw ConfigError("measurement set needs N, N1, N2 >= 1");
    if (ranges.size() != static_cast<std::size_t>(n()))
      throw ConfigError("measurement set range count != N N1 N2");
    if (sigma_of_pair.rows() != n1() || sigma_of_pair.cols() != n2())
      throw ConfigError("sigma_of_pair must be N1 x N2");
    if (!sigma_of_pair.allFinite() || (sigma_of_pair.array() <= 0.0).any())
      throw ConfigError("sigma_of_pair entries must be finite and > 0");
  }
};

/// Per-step displacement between the logged odometry position and the position at which the
/// range is actually taken: v * delta along the robot's next straight segment.
struct StepDisplacements {
  std::vector<Vec3> robot1;  // K
  std::vector<Vec3> robot2;  // K
};

inline StepDisplacements speed_displacements(const WaypointSchedule& s, double speed,
                                             double latency) {
  const auto k = s.robot1_poses.size();
  StepDisplacements out{std::vector<Vec3>(k, Vec3::Zero()), std::vector<Vec3>(k, Vec3::Zero())};
  const double reach = speed * latency;
  if (reach == 0.0) return out;
  auto fill = [&](const std::vector<Pose>& poses, std::vector<Vec3>& disp) {
    for (std::size_t i = 0; i + 1 < poses.size(); ++i) {
      const Vec3 seg = poses[i + 1].position - poses[i].position;
      const double len = seg.norm();
      if (len > 0.0) disp[i] = reach * (seg / len);
    }
  };
  fill(s.robot1_poses, out.robot1);
  fill(s.robot2_poses, out.robot2);
  return out;
}

namespace detail {

inline MeasurementSet synthesize(const ScenarioConfig& config, const StepDisplacements& disp) {
  config.validate();
  const UwbLayout& layout = config.layout;
  const WaypointSchedule& s = config.schedule;
  const int j1 = layout.j1(), j2 = layout.j2();
  const int m1 = s.params.m1;

  MeasurementSet m;
  m.anchor_positions = anchor_positions(layout, s);
  m.tag_positions = tag_positions(layout, s);
  m.repetitions_n = config.repetitions_n;
  m.seed = config.rng_seed;
  m.sigma_of_pair.resize(m.n1(), m.n2());
  for (int l1 = 0; l1 < m.n1(); ++l1)
    for (int l2 = 0; l2 < m.n2(); ++l2) m.sigma_of_pair(l1, l2) = config.sigma(l1 % j1, l2 % j2);

  const Mat3& r_o = config.ground_truth.rotation.matrix();
  const Vec3& t_o = config.ground_truth.translation;
  CounterRng rng(config.rng_seed, streams::noise);
  std::normal_distribution<double> normal(0.0, 1.0);

  m.ranges.resize(static_cast<std::size_t>(m.n()));
  for (int l2 = 0; l2 < m.n2(); ++l2) {
    const int block = l2 / j2;
    for (int l1 = 0; l1 < m.n1(); ++l1) {
      const auto step = static_cast<std::size_t>(block * m1 + l1 / j1);
      const Vec3 anchor = m.anchor_positions[l1] + disp.robot1[step];
      const Vec3 tag = m.tag_positions[l2] + disp.robot2[step];
      const double truth = (anchor - r_o * tag - t_o).norm();
      const double sig = m.sigma_of_pair(l1, l2);
      for (int i = 0; i < m.repetitions_n; ++i)
        m.ranges[m.index(l1, l2, i)] = truth + sig * normal(rng);
    }
  }
  return m;
}

}  // namespace detail

/// Ranges at the logged waypoint positions with Gaussian noise from the seeded noise stream.
inline MeasurementSet synthesize_ranges(const ScenarioConfig& config) {
  const auto k = config.schedule.robot1_poses.size();
  return detail::synthesize(
      config, {std::vector<Vec3>(k, Vec3::Zero()), std::vector<Vec3>(k, Vec3::Zero())});
}

/// Ranges taken config.latency_delta after each logged waypoint time while the robots move at
/// config.speed; the logged odometry stays at the waypoints. Noise draws match synthesize_ranges.
inline MeasurementSet apply_speed_distortion(const ScenarioConfig& config) {
  return detail::synthesize(
      config, speed_displacements(config.schedule, config.speed, config.latency_delta));
}

/// Noise-free distance for every (l1, l2) pair under a transform.
inline double true_distance(const MeasurementSet& m, const FrameTransform& tf, int l1, int l2) {
  return (m.anchor_positions[l1] - apply_transform(tf, m.tag_positions[l2])).norm();
}

}  // namespace rte
