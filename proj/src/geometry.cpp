// SPDX-License-Identifier: Apache-2.0
#include "covis/geometry.hpp"

#include <algorithm>
#include <stdexcept>

namespace covis {

namespace {

// Sign convention that makes q and -q serialize identically.
bool needs_flip(double w, double x, double y, double z) {
  if (w != 0.0) return w < 0.0;
  if (x != 0.0) return x < 0.0;
  if (y != 0.0) return y < 0.0;
  return z < 0.0;
}

}  // namespace

UnitQuat::UnitQuat(Trusted, double w, double x, double y, double z) {
  if (needs_flip(w, x, y, z)) {
    w = -w;
    x = -x;
    y = -y;
    z = -z;
  }
  w_ = w;
  x_ = x;
  y_ = y;
  z_ = z;
}

UnitQuat::UnitQuat(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(n) || std::abs(n - 1.0) > kNormTolerance) {
    throw std::invalid_argument("UnitQuat: norm deviates from 1 beyond tolerance");
  }
  *this = UnitQuat(Trusted{}, w / n, x / n, y / n, z / n);
}

UnitQuat UnitQuat::normalized(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(n) || n == 0.0) {
    throw std::invalid_argument("UnitQuat::normalized: zero or non-finite input");
  }
  return UnitQuat(Trusted{}, w / n, x / n, y / n, z / n);
}

UnitQuat UnitQuat::from_axis_angle(const Vec3 &axis, double angle_rad) {
  const double n = axis.norm();
  if (!(n > 0.0)) {
    throw std::invalid_argument("UnitQuat::from_axis_angle: zero axis");
  }
  const double s = std::sin(angle_rad / 2.0) / n;
  return normalized(std::cos(angle_rad / 2.0), axis.x * s, axis.y * s, axis.z * s);
}

UnitQuat UnitQuat::from_yaw(double yaw_rad) {
  return UnitQuat(Trusted{}, std::cos(yaw_rad / 2.0), 0.0, 0.0, std::sin(yaw_rad / 2.0));
}

UnitQuat UnitQuat::inverse() const { return UnitQuat(Trusted{}, w_, -x_, -y_, -z_); }

Vec3 UnitQuat::rotate(const Vec3 &v) const {
  // v' = v + 2w (u x v) + 2 u x (u x v)
  const Vec3 u{x_, y_, z_};
  const Vec3 t = 2.0 * cross(u, v);
  return v + w_ * t + cross(u, t);
}

double UnitQuat::yaw() const {
  return std::atan2(2.0 * (w_ * z_ + x_ * y_), 1.0 - 2.0 * (y_ * y_ + z_ * z_));
}

std::array<double, 9> UnitQuat::matrix() const {
  const double w = w_, x = x_, y = y_, z = z_;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

UnitQuat operator*(const UnitQuat &a, const UnitQuat &b) {
  return UnitQuat::normalized(a.w_ * b.w_ - a.x_ * b.x_ - a.y_ * b.y_ - a.z_ * b.z_,
                              a.w_ * b.x_ + a.x_ * b.w_ + a.y_ * b.z_ - a.z_ * b.y_,
                              a.w_ * b.y_ - a.x_ * b.z_ + a.y_ * b.w_ + a.z_ * b.x_,
                              a.w_ * b.z_ + a.x_ * b.y_ - a.y_ * b.x_ + a.z_ * b.w_);
}

Pose Pose::inverse() const {
  const UnitQuat inv = rotation.inverse();
  return {-inv.rotate(position), inv};
}

Pose compose(const Pose &a, const Pose &b) {
  return {a.apply(b.position), a.rotation * b.rotation};
}

Pose relative_pose(const Pose &pose_i, const Pose &pose_j) {
  const UnitQuat inv = pose_i.rotation.inverse();
  return {inv.rotate(pose_j.position - pose_i.position), inv * pose_j.rotation};
}

double quat_dist(const UnitQuat &q, const UnitQuat &q_hat) {
  double minus = 0.0;
  double plus = 0.0;
  const auto a = q.components();
  const auto b = q_hat.components();
  for (std::size_t k = 0; k < 4; ++k) {
    minus += (a[k] - b[k]) * (a[k] - b[k]);
    plus += (a[k] + b[k]) * (a[k] + b[k]);
  }
  return std::sqrt(std::min(minus, plus));
}

double rot_geodesic_deg(const UnitQuat &q, const UnitQuat &q_hat) {
  // Equals 4 asin(d/2) for d = quat_dist(q, q_hat). The half-angle form of
  // the relative rotation keeps full precision near 0 and 180 degrees.
  const UnitQuat r = q.inverse() * q_hat;
  const double v = std::sqrt(r.x() * r.x() + r.y() * r.y() + r.z() * r.z());
  return rad2deg(2.0 * std::atan2(v, std::abs(r.w())));
}

double pos_dist(const Vec3 &p, const Vec3 &p_hat) { return (p - p_hat).norm(); }

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

}  // namespace covis
