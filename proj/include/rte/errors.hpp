#pragma once

#include <stdexcept>
#include <string>

namespace rte {

/// Which identifiability condition a degenerate configuration violates.
enum class GeometryCondition {
  anchor_coplanar,      // rank(p1 - avg(p1) 1^T) < 3
  tag_coplanar_origin,  // rank(p2) < 3
  design_rank,          // rank(H) < 5 for another reason
  residual_singular,    // predicted tag coincides with an anchor
  normal_singular,      // J^T W J not invertible
  projection_undefined  // SO(2) projection of a (near) zero block
};

inline const char* to_string(GeometryCondition c) {
  switch (c) {
    case GeometryCondition::anchor_coplanar:
      return "anchor positions are coplanar (rank of centered anchor matrix < 3)";
    case GeometryCondition::tag_coplanar_origin:
      return "tag positions are coplanar with the odometry origin (rank of tag matrix < 3)";
    case GeometryCondition::design_rank:
      return "design matrix H is column-rank deficient";
    case GeometryCondition::residual_singular:
      return "range residual direction is undefined (anchor coincides with predicted tag)";
    case GeometryCondition::normal_singular:
      return "Gauss-Newton normal matrix is singular";
    case GeometryCondition::projection_undefined:
      return "rotation block is numerically zero; SO(2) projection undefined";
  }
  return "unknown geometry condition";
}

class DegenerateGeometryError : public std::runtime_error {
 public:
  explicit DegenerateGeometryError(GeometryCondition c, const std::string& detail = {})
      : std::runtime_error(detail.empty() ? std::string(to_string(c))
                                          : std::string(to_string(c)) + ": " + detail),
        condition_(c) {}

  GeometryCondition condition() const noexcept { return condition_; }

 private:
  GeometryCondition condition_;
};

/// Invalid user input: counts, configs, schema mismatches.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rte
