#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <numbers>

#include "rte/errors.hpp"

namespace rte {

using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double normalize_angle(double theta) {
  double r = std::fmod(theta, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  // fmod of a tiny negative can round up to exactly 2pi
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Signed angular difference wrapped to [-pi, pi).
inline double angle_diff(double a, double b) {
  double d = normalize_angle(a - b);
  return d >= std::numbers::pi ? d - kTwoPi : d;
}

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Relative yaw, always stored in [0, 2pi).
class YawAngle {
 public:
  YawAngle() = default;
  explicit YawAngle(double radians) : theta_(normalize_angle(radians)) {}

  double radians() const noexcept { return theta_; }
  double degrees() const noexcept { return rad2deg(theta_); }

 private:
  double theta_ = 0.0;
};

/// Rotation about the gravity-aligned z axis.
class RotationZ {
 public:
  RotationZ() = default;
  explicit RotationZ(const YawAngle& yaw) : yaw_(yaw) {
    const double c = std::cos(yaw.radians());
    const double s = std::sin(yaw.radians());
    matrix_ << c, -s, 0.0,  //
        s, c, 0.0,          //
        0.0, 0.0, 1.0;
  }

  const Mat3& matrix() const noexcept { return matrix_; }
  Mat2 block() const { return matrix_.topLeftCorner<2, 2>(); }
  const YawAngle& yaw() const noexcept { return yaw_; }

 private:
  YawAngle yaw_{};
  Mat3 matrix_ = Mat3::Identity();
};

struct FrameTransform {
  RotationZ rotation{};
  Vec3 translation = Vec3::Zero();

  FrameTransform() = default;
  FrameTransform(const RotationZ& r, const Vec3& t) : rotation(r), translation(t) {}
  FrameTransform(double theta_rad, const Vec3& t)
      : rotation(YawAngle(theta_rad)), translation(t) {}

  double theta() const noexcept { return rotation.yaw().radians(); }
};

inline RotationZ yaw_rotation(const YawAngle& theta) { return RotationZ(theta); }
inline RotationZ yaw_rotation(double theta_rad) { return RotationZ(YawAngle(theta_rad)); }

inline Vec3 apply_transform(const FrameTransform& tf, const Vec3& p) {
  return tf.rotation.matrix() * p + tf.translation;
}

/// Stacks the columns of m top to bottom.
template <typename Derived>
Eigen::VectorXd vec_column_major(const Eigen::MatrixBase<Derived>& m) {
  Eigen::VectorXd out(m.size());
  Eigen::Index k = 0;
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) out(k++) = m(r, c);
  return out;
}

/// Inverse of vec_column_major for a rows x cols matrix.
inline Eigen::MatrixXd unvec_column_major(const Eigen::VectorXd& v, Eigen::Index rows,
                                          Eigen::Index cols) {
  if (v.size() != rows * cols) throw ConfigError("unvec: size mismatch");
  Eigen::MatrixXd m(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = v(k++);
  return m;
}

template <typename A, typename B>
Eigen::MatrixXd kronecker(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const Eigen::Index br = b.rows(), bc = b.cols();
  Eigen::MatrixXd out(a.rows() * br, a.cols() * bc);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * br, j * bc, br, bc) = a(i, j) * b;
  return out;
}

/// Nearest rotation in Frobenius norm: U diag(1, det(U V^T)) V^T.
inline Mat2 project_to_so2(const Mat2& m) {
  if (!m.allFinite()) throw ConfigError("project_to_so2: non-finite input");
  Eigen::JacobiSVD<Mat2> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(0) < 1e-12 && sv(1) < 1e-12)
    throw DegenerateGeometryError(GeometryCondition::projection_undefined);
  const Mat2& u = svd.matrixU();
  const Mat2& v = svd.matrixV();
  Mat2 d = Mat2::Identity();
  d(1, 1) = (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return u * d * v.transpose();
}

/// Yaw of a 2x2 rotation block, in [0, 2pi).
inline YawAngle yaw_of_block(const Mat2& block) {
  return YawAngle(std::atan2(block(1, 0), block(0, 0)));
}

/// Fixed matrices of the linearized model. gamma1 picks the xy plane, gamma2 the z axis,
/// selector maps [sin, cos] onto vec(gamma1 R~ gamma1^T), psi = d vec(R(theta))/dtheta at 0.
struct EstimatorConstants {
  Eigen::Matrix<double, 9, 2> selector_T;
  Eigen::Matrix<double, 3, 2> gamma1;
  Vec3 gamma2;
  Eigen::Matrix<double, 9, 1> psi;

  EstimatorConstants() {
    selector_T.setZero();
    selector_T(1, 0) = 1.0;
    selector_T(3, 0) = -1.0;
    selector_T(0, 1) = 1.0;
    selector_T(4, 1) = 1.0;
    gamma1 << 1.0, 0.0,  //
        0.0, 1.0,        //
        0.0, 0.0;
    gamma2 << 0.0, 0.0, 1.0;
    psi << 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0;
  }

  /// vec(gamma2 gamma2^T), the z-z selector.
  Eigen::Matrix<double, 9, 1> vec_gamma2_outer() const {
    Mat3 g = gamma2 * gamma2.transpose();
    return vec_column_major(g);
  }

  /// mat(psi) as a 3x3 matrix: the generator of yaw rotations.
  Mat3 psi_matrix() const { return unvec_column_major(psi, 3, 3); }
};

inline const EstimatorConstants& estimator_constants() {
  static const EstimatorConstants k;
  return k;
}

/// Column rank with the threshold sigma < rel_tol * sigma_max counted as zero.
inline int numerical_rank(const Eigen::MatrixXd& m, double rel_tol = 1e-9) {
  if (m.size() == 0) return 0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  const double thr = rel_tol * sv(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > thr) ++rank;
  return rank;
}

inline double smallest_singular_value(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  return sv.size() == 0 ? 0.0 : sv(sv.size() - 1);
}

}  // namespace rte
