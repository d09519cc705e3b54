#pragma once

#include <Eigen/Dense>
#include <Eigen/QR>

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "rte/errors.hpp"
#include "rte/geometry.hpp"
#include "rte/scenario.hpp"

namespace rte {

/// Stacked first-step system d = H y + noise, y = [sin, cos, t].
struct LinearSystem {
  Eigen::MatrixXd h;    // n x 5, columns [H1 | H2]
  Eigen::VectorXd rhs;  // n
  int n = 0;
  int rank_h = 0;
  int rank_anchor_centered = 0;  // rank(p1 - avg(p1) 1^T)
  int rank_tags = 0;             // rank(p2)
};

struct FirstStepEstimate {
  Eigen::Vector2d x_hat = Eigen::Vector2d::Zero();  // [sin, cos] before projection
  Mat2 r_tilde_hat = Mat2::Zero();                  // unconstrained 2x2 block
  Mat2 projected = Mat2::Identity();                // nearest SO(2) element
  YawAngle theta_hat{};
  Vec3 t_hat = Vec3::Zero();
  double wall_time = 0.0;

  FrameTransform transform() const { return {RotationZ(theta_hat), t_hat}; }
};

struct RefinedEstimate {
  FrameTransform transform{};
  double delta_theta = 0.0;  // accumulated yaw increment over the start point
  Vec3 delta_t = Vec3::Zero();
  double cost_before = 0.0;
  double cost_after = 0.0;
  double wall_time = 0.0;  // seconds
  int iterations = 0;
  bool converged = true;
  int dropped_pairs = 0;  // (l1, l2) pairs excluded for a near-zero residual direction
  FirstStepEstimate first{};
  int rank_h = 0;
};

namespace detail {

/// Anchor rows p1bar^T: (N N1) x 3, each centered anchor repeated N times.
inline Eigen::MatrixXd centered_anchor_rows(const MeasurementSet& m) {
  const int nn1 = m.repetitions_n * m.n1();
  Vec3 mean = Vec3::Zero();
  for (const auto& p : m.anchor_positions) mean += p;
  mean /= static_cast<double>(m.n1());
  Eigen::MatrixXd rows(nn1, 3);
  for (int l1 = 0; l1 < m.n1(); ++l1)
    for (int i = 0; i < m.repetitions_n; ++i)
      rows.row(l1 * m.repetitions_n + i) = (m.anchor_positions[l1] - mean).transpose();
  return rows;
}

inline Eigen::MatrixXd tag_rows(const MeasurementSet& m) {
  Eigen::MatrixXd p2t(m.n2(), 3);
  for (int l2 = 0; l2 < m.n2(); ++l2) p2t.row(l2) = m.tag_positions[l2].transpose();
  return p2t;
}

}  // namespace detail

/// Bias-corrected squared ranges with the anchor norms removed and each N N1 block centered
/// by P = I - 1 1^T / (N N1). This is the stacked d-bar before the z-axis shift.
inline Eigen::VectorXd projected_block_rhs(const MeasurementSet& m) {
  m.validate();
  const int nn1 = m.repetitions_n * m.n1();
  Eigen::VectorXd out(m.n());
  for (int l2 = 0; l2 < m.n2(); ++l2) {
    auto block = out.segment(static_cast<Eigen::Index>(l2) * nn1, nn1);
    for (int l1 = 0; l1 < m.n1(); ++l1) {
      const double sig2 = m.sigma_of_pair(l1, l2) * m.sigma_of_pair(l1, l2);
      const double pn2 = m.anchor_positions[l1].squaredNorm();
      for (int i = 0; i < m.repetitions_n; ++i) {
        const double d = m.range(l1, l2, i);
        block(l1 * m.repetitions_n + i) = d * d - sig2 - pn2;
      }
    }
    block.array() -= block.mean();
  }
  return out;
}

/// Right-hand side d: projected blocks plus 2 (p2^T kron p1bar^T) vec(gamma2 gamma2^T).
inline Eigen::VectorXd build_rhs(const MeasurementSet& m) {
  const Eigen::MatrixXd kp = kronecker(detail::tag_rows(m), detail::centered_anchor_rows(m));
  return projected_block_rhs(m) + 2.0 * kp * estimator_constants().vec_gamma2_outer();
}

inline LinearSystem build_design_matrix(const MeasurementSet& m) {
  m.validate();
  const auto& k = estimator_constants();
  const Eigen::MatrixXd p1bar_t = detail::centered_anchor_rows(m);
  const Eigen::MatrixXd p2t = detail::tag_rows(m);
  const Eigen::MatrixXd kp = kronecker(p2t, p1bar_t);  // n x 9

  LinearSystem sys;
  sys.n = m.n();
  sys.h.resize(sys.n, 5);
  sys.h.leftCols<2>() = -2.0 * kp * k.selector_T;
  sys.h.rightCols<3>() = -2.0 * kronecker(Eigen::VectorXd::Ones(m.n2()), p1bar_t);
  sys.rhs = projected_block_rhs(m) + 2.0 * kp * k.vec_gamma2_outer();
  sys.rank_h = numerical_rank(sys.h);
  sys.rank_anchor_centered = numerical_rank(centered(stack_columns(m.anchor_positions)));
  sys.rank_tags = numerical_rank(stack_columns(m.tag_positions));
  return sys;
}

/// Unconstrained least squares for y, then SO(2) projection of the rotation block.
inline FirstStepEstimate solve_linear_step(const LinearSystem& sys) {
  if (sys.rank_h < 5) {
    const std::string detail = "rank(H) = " + std::to_string(sys.rank_h) + " < 5";
    if (sys.rank_anchor_centered < 3)
      throw DegenerateGeometryError(GeometryCondition::anchor_coplanar, detail);
    if (sys.rank_tags < 3)
      throw DegenerateGeometryError(GeometryCondition::tag_coplanar_origin, detail);
    throw DegenerateGeometryError(GeometryCondition::design_rank, detail);
  }
  const Eigen::VectorXd y = sys.h.colPivHouseholderQr().solve(sys.rhs);

  FirstStepEstimate est;
  est.x_hat = y.head<2>();
  const Eigen::VectorXd vec_block = estimator_constants().selector_T * est.x_hat;
  est.r_tilde_hat = unvec_column_major(vec_block, 3, 3).topLeftCorner<2, 2>();
  est.projected = project_to_so2(est.r_tilde_hat);
  est.theta_hat = yaw_of_block(est.projected);
  est.t_hat = y.tail<3>();
  return est;
}

/// Closed-form first step: build, solve, project.
inline FirstStepEstimate first_step_estimate(const MeasurementSet& m) {
  const auto start = std::chrono::steady_clock::now();
  FirstStepEstimate est = solve_linear_step(build_design_matrix(m));
  est.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return est;
}

/// Weighted sum of squared range residuals (negative log-likelihood up to constants).
inline double cost(const MeasurementSet& m, const FrameTransform& tf) {
  double total = 0.0;
  for (int l2 = 0; l2 < m.n2(); ++l2)
    for (int l1 = 0; l1 < m.n1(); ++l1) {
      const double pred = true_distance(m, tf, l1, l2);
      const double w = 1.0 / (m.sigma_of_pair(l1, l2) * m.sigma_of_pair(l1, l2));
      for (int i = 0; i < m.repetitions_n; ++i) {
        const double r = m.range(l1, l2, i) - pred;
        total += w * r * r;
      }
    }
  return total;
}

/// Jacobian of the predicted ranges and the raw-range residual at (theta, t).
struct Linearization {
  Eigen::MatrixXd jacobian;   // n x 4, columns [theta, tx, ty, tz]
  Eigen::VectorXd residual;   // d_raw - f(theta, t)
  Eigen::VectorXd weights;    // 1 / sigma^2, zero for dropped rows
  int dropped_pairs = 0;
};

inline constexpr double kMinResidualNorm = 1e-9;

/// Linearizes the range model around R(theta) with the yaw increment parametrized at 0:
/// d||f||/dtheta = -f^T R(theta) mat(psi) p2 / ||f||, d||f||/dt = -f^T / ||f||.
/// With drop_degenerate the rows of pairs with ||f|| < 1e-9 get zero weight; otherwise they
/// raise a DegenerateGeometryError.
inline Linearization linearize(const MeasurementSet& m, double theta, const Vec3& t,
                               bool drop_degenerate) {
  const int n = m.n();
  const Mat3 r = yaw_rotation(theta).matrix();
  const Mat3 dr = r * estimator_constants().psi_matrix();

  Linearization lin;
  lin.jacobian.setZero(n, 4);
  lin.residual.resize(n);
  lin.weights.resize(n);
  for (int l2 = 0; l2 < m.n2(); ++l2)
    for (int l1 = 0; l1 < m.n1(); ++l1) {
      const Vec3& p2 = m.tag_positions[l2];
      const Vec3 f = m.anchor_positions[l1] - r * p2 - t;
      const double fn = f.norm();
      double w = 1.0 / (m.sigma_of_pair(l1, l2) * m.sigma_of_pair(l1, l2));
      Eigen::RowVector4d row = Eigen::RowVector4d::Zero();
      if (fn < kMinResidualNorm) {
        if (!drop_degenerate)
          throw DegenerateGeometryError(GeometryCondition::residual_singular,
                                        "pair (" + std::to_string(l1) + ", " +
                                            std::to_string(l2) + ")");
        w = 0.0;
        ++lin.dropped_pairs;
      } else {
        row(0) = -f.dot(dr * p2) / fn;
        row.tail<3>() = -f.transpose() / fn;
      }
      for (int i = 0; i < m.repetitions_n; ++i) {
        const auto idx = static_cast<Eigen::Index>(m.index(l1, l2, i));
        lin.jacobian.row(idx) = row;
        lin.residual(idx) = m.range(l1, l2, i) - fn;
        lin.weights(idx) = w;
      }
    }
  return lin;
}

inline Eigen::MatrixXd gn_jacobian(const MeasurementSet& m, double theta_hat, const Vec3& t_hat) {
  return linearize(m, theta_hat, t_hat, false).jacobian;
}

inline constexpr double kNormalConditionFloor = 1e-12;

/// Weighted Gauss-Newton increment [dtheta, dt] at (theta, t).
inline Eigen::Vector4d gn_increment(const Linearization& lin) {
  const Eigen::MatrixXd wj = lin.weights.asDiagonal() * lin.jacobian;
  const Eigen::Matrix4d normal = lin.jacobian.transpose() * wj;
  const Eigen::Vector4d grad = wj.transpose() * lin.residual;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(normal, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  if (!(ev(3) > 0.0) || ev(0) < kNormalConditionFloor * ev(3))
    throw DegenerateGeometryError(GeometryCondition::normal_singular,
                                  "eigenvalue ratio " + std::to_string(ev(0) / ev(3)));
  return normal.ldlt().solve(grad);
}

/// A single undamped Gauss-Newton step from the first-step estimate.
inline RefinedEstimate gn_one_step(const MeasurementSet& m, const FirstStepEstimate& first) {
  const double theta0 = first.theta_hat.radians();
  const Linearization lin = linearize(m, theta0, first.t_hat, true);
  const Eigen::Vector4d step = gn_increment(lin);

  RefinedEstimate out;
  out.first = first;
  out.delta_theta = step(0);
  out.delta_t = step.tail<3>();
  out.transform = FrameTransform(theta0 + step(0), first.t_hat + step.tail<3>());
  out.iterations = 1;
  out.dropped_pairs = lin.dropped_pairs;
  return out;
}

/// Closed-form first step followed by one Gauss-Newton refinement. wall_time covers the
/// estimator itself; the two reported costs are evaluated afterwards.
inline RefinedEstimate two_step_estimate(const MeasurementSet& m) {
  const auto start = std::chrono::steady_clock::now();
  const LinearSystem sys = build_design_matrix(m);
  FirstStepEstimate first = solve_linear_step(sys);
  RefinedEstimate out = gn_one_step(m, first);
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.rank_h = sys.rank_h;
  out.cost_before = cost(m, first.transform());
  out.cost_after = cost(m, out.transform);
  return out;
}

}  // namespace rte
