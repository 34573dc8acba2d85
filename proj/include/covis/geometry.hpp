// SPDX-License-Identifier: Apache-2.0
//
// Pose algebra shared by every other module: 3-vectors, unit quaternions
// (scalar-first, canonicalized to w >= 0) and rigid poses.
#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace covis {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 &operator+=(const Vec3 &o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3 &operator-=(const Vec3 &o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Vec3 &operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }

  friend constexpr Vec3 operator+(Vec3 a, const Vec3 &b) { return a += b; }
  friend constexpr Vec3 operator-(Vec3 a, const Vec3 &b) { return a -= b; }
  friend constexpr Vec3 operator-(const Vec3 &a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
  friend constexpr bool operator==(const Vec3 &, const Vec3 &) = default;

  [[nodiscard]] double norm() const { return std::sqrt(x * x + y * y + z * z); }
  [[nodiscard]] bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

constexpr double dot(const Vec3 &a, const Vec3 &b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

constexpr Vec3 cross(const Vec3 &a, const Vec3 &b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

/// Unit quaternion in (w, x, y, z) order.
///
/// The checked constructor accepts inputs whose norm is within
/// kNormTolerance of one and renormalizes them; anything further off throws
/// std::invalid_argument. Stored values always satisfy w >= 0 (ties on w == 0
/// are broken by the first non-zero vector component being positive), so q
/// and -q construct identical objects.
class UnitQuat {
 public:
  static constexpr double kNormTolerance = 1e-6;

  constexpr UnitQuat() = default;
  UnitQuat(double w, double x, double y, double z);

  /// Normalizes any finite non-zero 4-vector. Used for products and sampled
  /// rotations where drift is expected; throws on zero or non-finite input.
  static UnitQuat normalized(double w, double x, double y, double z);

  static constexpr UnitQuat identity() { return {}; }
  static UnitQuat from_axis_angle(const Vec3 &axis, double angle_rad);
  static UnitQuat from_yaw(double yaw_rad);

  [[nodiscard]] constexpr double w() const { return w_; }
  [[nodiscard]] constexpr double x() const { return x_; }
  [[nodiscard]] constexpr double y() const { return y_; }
  [[nodiscard]] constexpr double z() const { return z_; }
  [[nodiscard]] constexpr std::array<double, 4> components() const {
    return {w_, x_, y_, z_};
  }

  [[nodiscard]] UnitQuat inverse() const;
  [[nodiscard]] Vec3 rotate(const Vec3 &v) const;
  /// Heading of the rotated x-axis projected onto the xy-plane, in radians.
  [[nodiscard]] double yaw() const;
  /// Row-major rotation matrix.
  [[nodiscard]] std::array<double, 9> matrix() const;

  friend UnitQuat operator*(const UnitQuat &a, const UnitQuat &b);
  friend constexpr bool operator==(const UnitQuat &, const UnitQuat &) = default;

 private:
  struct Trusted {};
  UnitQuat(Trusted, double w, double x, double y, double z);

  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

struct Pose {
  Vec3 position;
  UnitQuat rotation;

  static Pose identity() { return {}; }
  static Pose planar(double x, double y, double yaw_rad) {
    return {{x, y, 0.0}, UnitQuat::from_yaw(yaw_rad)};
  }

  [[nodiscard]] Pose inverse() const;
  /// Maps a point expressed in this pose's frame into the parent frame.
  [[nodiscard]] Vec3 apply(const Vec3 &p) const { return position + rotation.rotate(p); }

  friend bool operator==(const Pose &, const Pose &) = default;
};

/// a ∘ b: b expressed in a's frame, lifted into a's parent frame.
Pose compose(const Pose &a, const Pose &b);

/// Pose of j expressed in the ego frame of i.
Pose relative_pose(const Pose &pose_i, const Pose &pose_j);

/// Chordal quaternion distance min(|q - q_hat|, |q + q_hat|), in [0, sqrt 2].
double quat_dist(const UnitQuat &q, const UnitQuat &q_hat);

/// Geodesic rotation distance 4 asin(d/2) in degrees, in [0, 180].
double rot_geodesic_deg(const UnitQuat &q, const UnitQuat &q_hat);

double pos_dist(const Vec3 &p, const Vec3 &p_hat);

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

constexpr double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
constexpr double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

}  // namespace covis
