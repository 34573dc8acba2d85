// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the test binaries. The Eigen-based functions are
// independent oracles: they never call into the library under test.
#pragma once

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "covis/geometry.hpp"
#include "covis/pose_estimate.hpp"

namespace covis::testing {

inline UnitQuat random_quat(std::mt19937_64 &rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return UnitQuat::normalized(n(rng), n(rng), n(rng), n(rng));
}

inline Vec3 random_vec(std::mt19937_64 &rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline Pose random_pose(std::mt19937_64 &rng, double scale = 5.0) {
  return {random_vec(rng, scale), random_quat(rng)};
}

inline Eigen::Quaterniond to_eigen(const UnitQuat &q) { return {q.w(), q.x(), q.y(), q.z()}; }

/// Rotation angle of R(a)^T R(b) from its trace, degrees.
inline double trace_angle_deg(const UnitQuat &a, const UnitQuat &b) {
  const Eigen::Matrix3d r = to_eigen(a).toRotationMatrix().transpose() * to_eigen(b).toRotationMatrix();
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

/// Relative pose of j in i's frame through homogeneous matrices.
inline Eigen::Isometry3d to_iso(const Pose &p) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = to_eigen(p.rotation).toRotationMatrix();
  t.translation() = Eigen::Vector3d(p.position.x, p.position.y, p.position.z);
  return t;
}

inline double lower_middle(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

inline bool close_rel(double a, double b, double rel, double floor = 1.0) {
  return std::abs(a - b) <= rel * std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace covis::testing
