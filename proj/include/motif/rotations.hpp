#pragma once

// Rotation conversions: the continuous 6D representation (first two columns
// of the rotation matrix), and Euler <-> matrix for the proper Tait-Bryan
// orders used by BVH channels. Angles are radians; BVH degrees are converted
// at the parse/write boundary.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cmath>
#include <string>

#include "motif/common.hpp"

namespace motif {

using Vec6d = Eigen::Matrix<double, 6, 1>;

// Gram-Schmidt: b1 = normalize(a1), b2 = normalize(a2 - (b1.a2) b1), b3 = b1 x b2.
inline Eigen::Matrix3d rotation_6d_to_matrix(const Vec6d& r) {
  const Eigen::Vector3d a1 = r.head<3>();
  const Eigen::Vector3d a2 = r.tail<3>();
  const double n1 = a1.norm();
  require(n1 >= 1e-8, "rotation_6d_to_matrix: first column norm below 1e-8");
  const Eigen::Vector3d b1 = a1 / n1;
  const Eigen::Vector3d p = a2 - b1.dot(a2) * b1;
  const double n2 = p.norm();
  require(n2 >= 1e-8, "rotation_6d_to_matrix: projected second column norm below 1e-8");
  const Eigen::Vector3d b2 = p / n2;
  Eigen::Matrix3d m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b1.cross(b2);
  return m;
}

inline Vec6d matrix_to_6d(const Eigen::Matrix3d& m) {
  Vec6d r;
  r.head<3>() = m.col(0);
  r.tail<3>() = m.col(1);
  return r;
}

inline Eigen::Matrix3d axis_rotation(int axis, double angle) {
  Eigen::Vector3d u = Eigen::Vector3d::Zero();
  u[axis] = 1.0;
  return Eigen::AngleAxisd(angle, u).toRotationMatrix();
}

// Rotation order as axis indices, e.g. "ZYX" -> {2,1,0}. BVH channels apply
// rotations in listed order: R = R(axes[0]) * R(axes[1]) * R(axes[2]).
inline std::array<int, 3> rotation_axes(const std::string& order) {
  require(order.size() == 3, "rotation order must name three axes, got '" + order + "'");
  std::array<int, 3> axes{};
  for (int i = 0; i < 3; ++i) {
    const char c = order[static_cast<std::size_t>(i)];
    require(c == 'X' || c == 'Y' || c == 'Z', "bad rotation axis '" + std::string(1, c) + "'");
    axes[static_cast<std::size_t>(i)] = c - 'X';
  }
  require(axes[0] != axes[1] && axes[1] != axes[2] && axes[0] != axes[2],
          "rotation order must use three distinct axes, got '" + order + "'");
  return axes;
}

inline Eigen::Matrix3d euler_to_matrix(const Eigen::Vector3d& angles,
                                       const std::string& order) {
  const auto axes = rotation_axes(order);
  return axis_rotation(axes[0], angles[0]) * axis_rotation(axes[1], angles[1]) *
         axis_rotation(axes[2], angles[2]);
}

// Inverse of euler_to_matrix for any proper Tait-Bryan order. With axes
// (i,j,k) and e the Levi-Civita sign of the permutation:
//   beta  = asin(e * R(i,k))
//   alpha = atan2(-e * R(j,k), R(k,k)),  gamma = atan2(-e * R(i,j), R(i,i))
// falling back to gamma = 0 near gimbal lock.
inline Eigen::Vector3d matrix_to_euler(const Eigen::Matrix3d& m, const std::string& order) {
  const auto axes = rotation_axes(order);
  const int i = axes[0], j = axes[1], k = axes[2];
  const double e = ((j - i + 3) % 3 == 1) ? 1.0 : -1.0;
  const double sb = std::clamp(e * m(i, k), -1.0, 1.0);
  Eigen::Vector3d out;
  out[1] = std::asin(sb);
  if (std::abs(m(i, k)) < 1.0 - 1e-9) {
    out[0] = std::atan2(-e * m(j, k), m(k, k));
    out[2] = std::atan2(-e * m(i, j), m(i, i));
  } else {
    // Gimbal lock: only alpha -+ gamma is determined; fold it into alpha.
    out[0] = e * sb * std::atan2(e * m(j, i), m(j, j));
    out[2] = 0.0;
  }
  return out;
}

constexpr double kDegPerRad = 180.0 / EIGEN_PI;
constexpr double kRadPerDeg = EIGEN_PI / 180.0;

}  // namespace motif
