// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "../support.hpp"
#include "covis/losses.hpp"

using namespace covis;
using covis::testing::close_rel;
using covis::testing::random_quat;

namespace {

BevGrid grid(int rows, int cols, std::initializer_list<float> v) {
  BevGrid g(rows, cols, 0.1, 0.0F);
  std::copy(v.begin(), v.end(), g.cells().begin());
  return g;
}

BevGrid random_grid(std::mt19937_64 &rng, int n, bool binary) {
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  BevGrid g(n, n, 0.1, 0.0F);
  for (float &c : g.cells()) c = binary ? (u(rng) > 0.5F ? 1.0F : 0.0F) : u(rng);
  return g;
}

}  // namespace

TEST_CASE("gnll examples") {
  CHECK(gnll({0, 0, 1}) == 0.0);
  CHECK(gnll({1, 0, 1}) == doctest::Approx(0.5));
  CHECK(gnll({0, 0, std::exp(1.0)}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(gnll({0, 0, -1}), std::invalid_argument);
  CHECK_THROWS_AS(gnll({0, 0, NAN}), std::invalid_argument);
}

TEST_CASE("gnll clamps tiny variances instead of producing NaN") {
  CHECK(is_clamped(0.0));
  CHECK(is_clamped(kVarianceFloor / 2));
  CHECK_FALSE(is_clamped(1.0));
  CHECK(std::isfinite(gnll({1, 0, 0.0})));
  CHECK(gnll({1, 0, 0.0}) == doctest::Approx(gnll({1, 0, kVarianceFloor})));
}

TEST_CASE("gnll_grad examples") {
  const GnllGrad a = gnll_grad({0, 0, 1});
  CHECK(a.d_mu_hat == 0.0);
  CHECK(a.d_sigma2_hat == doctest::Approx(0.5));
  const GnllGrad b = gnll_grad({1, 0, 1});
  CHECK(b.d_mu_hat == doctest::Approx(-1.0));
  CHECK(b.d_sigma2_hat == doctest::Approx(0.0));
}

TEST_CASE("gnll is minimized at the squared error") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (int i = 0; i < 20; ++i) {
    const double e = u(rng);
    double best = 0.0;
    double best_v = INFINITY;
    for (int k = 1; k <= 20000; ++k) {
      const double s2 = k * 1e-3;
      const double v = gnll({0.0, e, s2});
      if (v < best_v) {
        best_v = v;
        best = s2;
      }
    }
    CHECK(std::abs(best - e * e) <= 1e-3);
  }
}

TEST_CASE("gnll at unit variance is half the squared error") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    const double mu = n(rng);
    const double mh = n(rng);
    CHECK(gnll({mu, mh, 1.0}) - 0.5 * (mh - mu) * (mh - mu) == doctest::Approx(0.0));
  }
}

TEST_CASE("chord_sq and chord_gnll examples") {
  const UnitQuat id = UnitQuat::identity();
  const UnitQuat half = UnitQuat::from_yaw(std::numbers::pi);
  const UnitQuat quarter = UnitQuat::from_yaw(std::numbers::pi / 2);
  CHECK(chord_sq(id, id) == 0.0);
  CHECK(chord_sq(id, half) == doctest::Approx(8.0));
  const double d = 2.0 * std::sin(deg2rad(22.5));
  CHECK(chord_sq(id, quarter) == doctest::Approx(2 * d * d * (4 - d * d)));
  CHECK(chord_gnll(id, id, 1.0) == 0.0);
  CHECK(chord_gnll(id, half, 1.0) == doctest::Approx(4.0));
  CHECK(chord_gnll(id, half, 8.0) == doctest::Approx(0.5 * (std::log(8.0) + 1.0)));
}

TEST_CASE("chord_sq is sign invariant and bounded") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 1000; ++i) {
    const UnitQuat q = random_quat(rng);
    const UnitQuat h = random_quat(rng);
    const UnitQuat neg = UnitQuat::normalized(-h.w(), -h.x(), -h.y(), -h.z());
    CHECK(chord_sq(q, h) == doctest::Approx(chord_sq(q, neg)));
    CHECK(chord_sq(q, h) >= 0.0);
    CHECK(chord_sq(q, h) <= 8.0 + 1e-12);
  }
}

TEST_CASE("gradients match central differences") {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> var(0.05, 4.0);
  constexpr double h = 1e-6;
  for (int i = 0; i < 1000; ++i) {
    const GnllTerm t{n(rng), n(rng), var(rng)};
    const GnllGrad g = gnll_grad(t);
    const double fd_mu =
        (gnll({t.mu, t.mu_hat + h, t.sigma2_hat}) - gnll({t.mu, t.mu_hat - h, t.sigma2_hat})) / (2 * h);
    const double fd_s =
        (gnll({t.mu, t.mu_hat, t.sigma2_hat + h}) - gnll({t.mu, t.mu_hat, t.sigma2_hat - h})) / (2 * h);
    CHECK(close_rel(g.d_mu_hat, fd_mu, 1e-5));
    CHECK(close_rel(g.d_sigma2_hat, fd_s, 1e-5));

    const UnitQuat q = random_quat(rng);
    const UnitQuat qh = random_quat(rng);
    const double s2 = var(rng);
    const ChordGnllGrad cg = chord_gnll_grad(q, qh, s2);
    const double fd_cs = (chord_gnll(q, qh, s2 + h) - chord_gnll(q, qh, s2 - h)) / (2 * h);
    CHECK(close_rel(cg.d_sigma2_hat, fd_cs, 1e-5));
    // Directional derivative along a random tangent direction at q_hat.
    auto c = qh.components();
    std::array<double, 4> dir{n(rng), n(rng), n(rng), n(rng)};
    const double proj = dir[0] * c[0] + dir[1] * c[1] + dir[2] * c[2] + dir[3] * c[3];
    for (int k = 0; k < 4; ++k) dir[k] -= proj * c[k];
    auto at = [&](double s) {
      return chord_gnll(q, UnitQuat::normalized(c[0] + s * dir[0], c[1] + s * dir[1],
                                                c[2] + s * dir[2], c[3] + s * dir[3]),
                        s2);
    };
    const double fd_dir = (at(h) - at(-h)) / (2 * h);
    double an_dir = 0.0;
    for (int k = 0; k < 4; ++k) an_dir += cg.d_q_hat[k] * dir[k];
    CHECK(close_rel(an_dir, fd_dir, 1e-5));
  }
}

TEST_CASE("dice, bce and combo examples") {
  const BevGrid a = grid(2, 2, {1, 0, 1, 0});
  const BevGrid b = grid(2, 2, {0, 1, 0, 1});
  CHECK(dice_loss(a, a) == doctest::Approx(0.0));
  CHECK(dice_loss(a, b) == doctest::Approx(1.0).epsilon(1e-5));
  const BevGrid ones = grid(2, 2, {1, 1, 1, 1});
  const BevGrid halves = grid(2, 2, {0.5, 0.5, 0.5, 0.5});
  CHECK(dice_loss(ones, halves) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

  CHECK(bce_loss(a, a) >= 0.0);
  CHECK(bce_loss(a, a) <= -std::log(1.0 - kBceEps) + 1e-12);
  CHECK(bce_loss(grid(1, 1, {1}), grid(1, 1, {0.5})) == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(grid(1, 1, {0}), grid(1, 1, {0.5})) == doctest::Approx(std::log(2.0)));

  CHECK(combo_loss(ones, halves, {1.0, 1.0}) == doctest::Approx(dice_loss(ones, halves)));
  CHECK(combo_loss(ones, halves, {0.0, 1.0}) == doctest::Approx(bce_loss(ones, halves)));
  CHECK(combo_loss(ones, halves, {0.5, 1.0}) ==
        doctest::Approx(0.5 * (1.0 / 3.0 + std::log(2.0))).epsilon(1e-6));

  CHECK_THROWS_AS(dice_loss(a, grid(1, 4, {1, 0, 1, 0})), std::invalid_argument);
  CHECK_THROWS_AS(bce_loss(a, BevGrid(3, 3, 0.1)), std::invalid_argument);
}

TEST_CASE("dice and bce are permutation invariant over cells") {
  std::mt19937_64 rng(15);
  for (int i = 0; i < 50; ++i) {
    BevGrid t = random_grid(rng, 8, true);
    BevGrid p = random_grid(rng, 8, false);
    const double d0 = dice_loss(t, p);
    const double b0 = bce_loss(t, p);
    std::vector<std::size_t> perm(t.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    BevGrid tp = t;
    BevGrid pp = p;
    for (std::size_t k = 0; k < perm.size(); ++k) {
      tp.cells()[k] = t.cells()[perm[k]];
      pp.cells()[k] = p.cells()[perm[k]];
    }
    CHECK(dice_loss(tp, pp) == doctest::Approx(d0).epsilon(1e-9));
    CHECK(bce_loss(tp, pp) == doctest::Approx(b0).epsilon(1e-9));
  }
}

TEST_CASE("pose_loss examples") {
  PoseEstimate e;
  const Pose truth = Pose::identity();
  CHECK(pose_loss(truth, e, {0.5, 0.5}) == doctest::Approx(0.0));
  e.q_hat = UnitQuat::from_yaw(1.0);
  e.sigma_q = 0.7;
  CHECK(pose_loss(truth, e, {0.5, 1.0}) ==
        doctest::Approx(chord_gnll(truth.rotation, e.q_hat, 0.49)));
  PoseEstimate x;
  x.p_hat = {1, 0, 0};
  CHECK(pose_loss(truth, x, {0.5, 0.0}) == doctest::Approx(0.5));
  x.sigma_p = {0.0, 1.0, 1.0};
  CHECK_THROWS_AS(pose_loss(truth, x, {0.5, 0.0}), std::invalid_argument);
}

TEST_CASE("total_loss examples") {
  const LossWeights w{0.5, 0.3};
  CHECK(total_loss({}, w) == 0.0);

  std::mt19937_64 rng(16);
  NodeLossSample solo{0, random_grid(rng, 4, true), random_grid(rng, 4, false), {}, {}, {}};
  CHECK(total_loss(std::span(&solo, 1), w) == doctest::Approx(combo_loss(solo.bev_truth, solo.bev_pred, w)));

  std::vector<NodeLossSample> batch(2);
  double oracle = 0.0;
  for (NodeId i = 0; i < 2; ++i) {
    NodeLossSample &s = batch[i];
    s.node = i;
    s.bev_truth = random_grid(rng, 4, true);
    s.bev_pred = random_grid(rng, 4, false);
    const NodeId j = 1 - i;
    s.neighbors = {j};
    const Pose truth = covis::testing::random_pose(rng);
    s.truth[j] = truth;
    PoseEstimate e;
    e.src = i;
    e.dst = j;
    e.p_hat = covis::testing::random_vec(rng, 2.0);
    e.q_hat = random_quat(rng);
    e.sigma_p = {0.5, 0.6, 0.7};
    e.sigma_q = 0.4;
    s.estimates = {e};
    // Independent summation straight from the formulas.
    const double dice = dice_loss(s.bev_truth, s.bev_pred);
    const double bce = bce_loss(s.bev_truth, s.bev_pred);
    double pos = 0.0;
    const double mu[3] = {truth.position.x, truth.position.y, truth.position.z};
    const double mh[3] = {e.p_hat.x, e.p_hat.y, e.p_hat.z};
    const double sg[3] = {e.sigma_p.x, e.sigma_p.y, e.sigma_p.z};
    for (int k = 0; k < 3; ++k) {
      pos += 0.5 * (std::log(sg[k] * sg[k]) + (mh[k] - mu[k]) * (mh[k] - mu[k]) / (sg[k] * sg[k]));
    }
    const double dq = quat_dist(truth.rotation, e.q_hat);
    const double chord = 2 * dq * dq * (4 - dq * dq);
    const double rot = 0.5 * (std::log(0.16) + chord / 0.16);
    oracle += w.alpha * dice + (1 - w.alpha) * bce + (1 - w.beta) * pos + w.beta * rot;
  }
  CHECK(total_loss(batch, w) == doctest::Approx(oracle).epsilon(1e-9));

  batch[0].estimates.clear();
  CHECK_THROWS_AS(total_loss(batch, w), std::invalid_argument);
}
