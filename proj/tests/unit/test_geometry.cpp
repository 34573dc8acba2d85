// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "../support.hpp"
#include "covis/geometry.hpp"

using namespace covis;
using covis::testing::random_pose;
using covis::testing::random_quat;
using covis::testing::to_iso;
using covis::testing::trace_angle_deg;

namespace {

UnitQuat negate(const UnitQuat &q) { return UnitQuat::normalized(-q.w(), -q.x(), -q.y(), -q.z()); }

bool near_pose(const Pose &a, const Pose &b, double tol) {
  return pos_dist(a.position, b.position) < tol && quat_dist(a.rotation, b.rotation) < tol;
}

}  // namespace

TEST_CASE("unit quaternion construction") {
  SUBCASE("canonical sign") {
    const UnitQuat q(-1.0, 0.0, 0.0, 0.0);
    CHECK(q == UnitQuat::identity());
    const UnitQuat a(0.0, -1.0, 0.0, 0.0);
    const UnitQuat b(0.0, 1.0, 0.0, 0.0);
    CHECK(a == b);
  }
  SUBCASE("near-unit input is renormalized") {
    const UnitQuat q(1.0 + 5e-7, 0.0, 0.0, 0.0);
    CHECK(q.w() == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("far from unit is rejected") {
    CHECK_THROWS_AS(UnitQuat(2.0, 0.0, 0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(UnitQuat::normalized(0.0, 0.0, 0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(UnitQuat::normalized(NAN, 1.0, 0.0, 0.0), std::invalid_argument);
  }
  SUBCASE("unit norm is kept by products") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) {
      const UnitQuat q = random_quat(rng) * random_quat(rng);
      const auto c = q.components();
      const double n = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2] + c[3] * c[3]);
      CHECK(std::abs(n - 1.0) < 1e-9);
      CHECK(q.w() >= 0.0);
    }
  }
}

TEST_CASE("relative_pose examples") {
  const Pose r1 = relative_pose(Pose::identity(), {{1, 2, 0}, UnitQuat::identity()});
  CHECK(r1.position == Vec3{1, 2, 0});
  CHECK(r1.rotation == UnitQuat::identity());

  std::mt19937_64 rng(2);
  const Pose a = random_pose(rng);
  const Pose self = relative_pose(a, a);
  CHECK(self.position.norm() < 1e-12);
  CHECK(quat_dist(self.rotation, UnitQuat::identity()) < 1e-12);

  const Pose r3 = relative_pose(Pose::planar(0, 0, deg2rad(90)), {{1, 0, 0}, UnitQuat::identity()});
  CHECK(r3.position.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r3.position.y == doctest::Approx(-1.0));
  CHECK(quat_dist(r3.rotation, UnitQuat::from_yaw(deg2rad(-90))) < 1e-12);
}

TEST_CASE("relative_pose agrees with homogeneous matrices") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    const Pose rel = relative_pose(a, b);
    const Eigen::Isometry3d oracle = to_iso(a).inverse() * to_iso(b);
    const Eigen::Vector3d t = oracle.translation();
    CHECK(pos_dist(rel.position, {t.x(), t.y(), t.z()}) < 1e-9);
    const Eigen::Matrix3d r = oracle.linear();
    const auto m = rel.rotation.matrix();
    double err = 0.0;
    for (int row = 0; row < 3; ++row) {
      for (int col = 0; col < 3; ++col) err = std::max(err, std::abs(m[row * 3 + col] - r(row, col)));
    }
    CHECK(err < 1e-9);
    // Composition round trip.
    CHECK(near_pose(compose(a, rel), b, 1e-9));
  }
}

TEST_CASE("pose inverse and compose") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const Pose a = random_pose(rng);
    CHECK(near_pose(compose(a, a.inverse()), Pose::identity(), 1e-9));
    const Vec3 p = covis::testing::random_vec(rng, 3.0);
    const Eigen::Vector3d o = to_iso(a) * Eigen::Vector3d(p.x, p.y, p.z);
    CHECK(pos_dist(a.apply(p), {o.x(), o.y(), o.z()}) < 1e-9);
  }
}

TEST_CASE("quat_dist examples and properties") {
  const UnitQuat half = UnitQuat::from_yaw(std::numbers::pi);
  CHECK(quat_dist(UnitQuat::identity(), half) == doctest::Approx(std::sqrt(2.0)));
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const UnitQuat q = random_quat(rng);
    const UnitQuat h = random_quat(rng);
    CHECK(quat_dist(q, q) == 0.0);
    CHECK(quat_dist(q, negate(q)) < 1e-15);
    const double d = quat_dist(q, h);
    CHECK(d >= 0.0);
    CHECK(d <= std::sqrt(2.0) + 1e-12);
    CHECK(d == doctest::Approx(quat_dist(negate(q), h)).epsilon(1e-12));
    CHECK(d == doctest::Approx(quat_dist(h, q)).epsilon(1e-12));
  }
}

TEST_CASE("rot_geodesic_deg examples") {
  CHECK(rot_geodesic_deg(UnitQuat::identity(), UnitQuat::identity()) == 0.0);
  CHECK(rot_geodesic_deg(UnitQuat::identity(), UnitQuat::from_yaw(std::numbers::pi)) == 180.0);
  CHECK(rot_geodesic_deg(UnitQuat::identity(), UnitQuat::from_yaw(std::numbers::pi / 2)) ==
        doctest::Approx(90.0).epsilon(1e-12));
}

TEST_CASE("rot_geodesic_deg matches 4 asin(d/2) and the trace angle") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 1000; ++i) {
    const UnitQuat q = random_quat(rng);
    const UnitQuat h = random_quat(rng);
    const double g = rot_geodesic_deg(q, h);
    CHECK(g >= 0.0);
    CHECK(g <= 180.0);
    CHECK(std::abs(g - trace_angle_deg(q, h)) < 1e-7);
    CHECK(std::abs(g - rad2deg(4.0 * std::asin(quat_dist(q, h) / 2.0))) < 1e-6);
  }
}

TEST_CASE("rot_geodesic_deg is monotone in quat_dist") {
  double prev = -1.0;
  for (int k = 0; k <= 1800; ++k) {
    const double g = rot_geodesic_deg(UnitQuat::identity(),
                                      UnitQuat::from_axis_angle({0.3, -0.5, 0.8}, deg2rad(k * 0.1)));
    CHECK(g >= prev);
    prev = g;
  }
}

TEST_CASE("pos_dist examples") {
  CHECK(pos_dist({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(pos_dist({0, 0, 0}, {3, 4, 0}) == 5.0);
  CHECK(pos_dist({1, 1, 1}, {2, 2, 2}) == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("wrap_angle and yaw") {
  CHECK(wrap_angle(3 * std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(0.5) == doctest::Approx(0.5));
  for (double y = -3.0; y <= 3.0; y += 0.25) {
    CHECK(UnitQuat::from_yaw(y).yaw() == doctest::Approx(y).epsilon(1e-12));
  }
}
