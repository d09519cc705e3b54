#pragma once

#include <limits>
#include <string>
#include <vector>

#include "rte/estimator.hpp"
#include "rte/scenario.hpp"

namespace rte {

struct PathValidityReport {
  bool valid = false;
  int rank_h = 0;
  int rank_anchor_centered = 0;
  int rank_tags = 0;
  double anchor_sigma_min = 0.0;  // third singular value of the centered anchor matrix
  double tag_sigma_min = 0.0;     // third singular value of the tag matrix
  std::vector<std::string> issues;
};

/// Checks the identifiability conditions for a layout and schedule: the centered anchor matrix
/// and the tag matrix must both have rank 3. rank(H) is reported from a unit-range design.
inline PathValidityReport check_path_validity(const UwbLayout& layout,
                                              const WaypointSchedule& schedule,
                                              double r_max = std::numeric_limits<double>::infinity()) {
  PathValidityReport rep;
  rep.issues = schedule_issues(layout, schedule, r_max);
  if (!rep.issues.empty()) return rep;

  const Eigen::MatrixXd p1 = stack_columns(anchor_positions(layout, schedule));
  const Eigen::MatrixXd p2 = stack_columns(tag_positions(layout, schedule));
  const Eigen::MatrixXd p1c = centered(p1);
  rep.rank_anchor_centered = numerical_rank(p1c);
  rep.rank_tags = numerical_rank(p2);
  rep.anchor_sigma_min = third_singular_value(p1c);
  rep.tag_sigma_min = third_singular_value(p2);

  // H depends on positions only; ranges are irrelevant to its rank
  MeasurementSet probe;
  probe.anchor_positions = anchor_positions(layout, schedule);
  probe.tag_positions = tag_positions(layout, schedule);
  probe.repetitions_n = 1;
  probe.sigma_of_pair = Eigen::MatrixXd::Ones(probe.n1(), probe.n2());
  probe.ranges.assign(static_cast<std::size_t>(probe.n()), 1.0);
  rep.rank_h = build_design_matrix(probe).rank_h;

  if (rep.rank_anchor_centered < 3)
    rep.issues.emplace_back(to_string(GeometryCondition::anchor_coplanar));
  if (rep.rank_tags < 3) rep.issues.emplace_back(to_string(GeometryCondition::tag_coplanar_origin));
  rep.valid = rep.rank_anchor_centered == 3 && rep.rank_tags == 3;
  return rep;
}

}  // namespace rte
