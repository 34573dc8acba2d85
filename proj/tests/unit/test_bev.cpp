// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "covis/bev.hpp"

using namespace covis;

namespace {

BevGrid random_grid(std::mt19937_64 &rng, int n = 64) {
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  BevGrid g = BevGrid::square(n);
  for (float &c : g.cells()) c = u(rng);
  return g;
}

PoseEstimate at(const Pose &p, double sigma = 0.1) {
  PoseEstimate e;
  e.p_hat = p.position;
  e.q_hat = p.rotation;
  e.sigma_p = {sigma, sigma, sigma};
  e.sigma_q = 0.1;
  return e;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

TEST_CASE("grid geometry") {
  const BevGrid g;
  CHECK(g.rows() == 64);
  CHECK(g.cols() == 64);
  CHECK(g.resolution() * g.rows() == doctest::Approx(6.0));
  CHECK(g.resolution() == doctest::Approx(0.09375));
  for (float c : g.cells()) CHECK(c == 0.5F);
  // Row 0 is far forward, column 0 far left.
  const auto [x0, y0] = g.cell_center(0, 0);
  CHECK(x0 > 2.9);
  CHECK(y0 > 2.9);
  int r = 0;
  int c = 0;
  REQUIRE(g.cell_of(x0, y0, r, c));
  CHECK(r == 0);
  CHECK(c == 0);
  CHECK_FALSE(g.cell_of(3.1, 0.0, r, c));
  CHECK_THROWS_AS(require_same_shape(g, BevGrid::square(32)), std::invalid_argument);
}

TEST_CASE("transform_grid identity") {
  std::mt19937_64 rng(51);
  const BevGrid g = random_grid(rng);
  CHECK(transform_grid(g, Pose::identity()) == g);
}

TEST_CASE("transform_grid half turn reverses indices") {
  std::mt19937_64 rng(52);
  const BevGrid g = random_grid(rng);
  const BevGrid t = transform_grid(g, Pose::planar(0, 0, std::numbers::pi));
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) CHECK(t.at(r, c) == g.at(63 - r, 63 - c));
  }
}

TEST_CASE("transform_grid integer shift along x") {
  std::mt19937_64 rng(53);
  const BevGrid g = random_grid(rng);
  const int k = 5;
  const BevGrid t = transform_grid(g, Pose::planar(k * g.resolution(), 0, 0));
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) {
      if (r + k < 64) {
        CHECK(t.at(r, c) == g.at(r + k, c));
      } else {
        CHECK(t.at(r, c) == BevGrid::kUnknown);
      }
    }
  }
}

TEST_CASE("transform_grid round trip on cells mapped both ways") {
  std::mt19937_64 rng(54);
  std::uniform_int_distribution<int> shift(-10, 10);
  std::uniform_int_distribution<int> quarter(0, 3);
  for (int i = 0; i < 20; ++i) {
    const BevGrid g = random_grid(rng);
    const double res = g.resolution();
    const Pose tf = Pose::planar(shift(rng) * res, shift(rng) * res, quarter(rng) * std::numbers::pi / 2);
    const BevGrid fwd = transform_grid(g, tf);
    const BevGrid back = transform_grid(fwd, tf.inverse());
    // Mark which cells survive both directions with a sentinel-free grid.
    BevGrid ones = BevGrid::square(64, 6.0, 0.9F);
    const BevGrid mask = transform_grid(transform_grid(ones, tf), tf.inverse());
    int checked = 0;
    for (int r = 0; r < 64; ++r) {
      for (int c = 0; c < 64; ++c) {
        if (mask.at(r, c) != 0.9F) continue;
        CHECK(back.at(r, c) == g.at(r, c));
        ++checked;
      }
    }
    CHECK(checked > 64 * 64 / 4);
  }
}

TEST_CASE("fuse examples") {
  std::mt19937_64 rng(55);
  const BevGrid ego = random_grid(rng);
  CHECK(fuse(ego, {}) == ego);

  BevGrid a = BevGrid::square(64);
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) a.set(r, c, (r + c) % 3 == 0 ? 0.8F : 0.3F);
  }
  const std::vector<std::pair<BevGrid, PoseEstimate>> same{{a, at(Pose::identity())}};
  const BevGrid f = fuse(a, same);
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) {
      const double p = a.at(r, c);
      CHECK(std::abs(f.at(r, c) - 0.5) > std::abs(p - 0.5));
      const double expect = 1.0 / (1.0 + std::exp(-2.0 * logit(p)));
      CHECK(f.at(r, c) == doctest::Approx(expect).epsilon(1e-5));
    }
  }

  const std::vector<std::pair<BevGrid, PoseEstimate>> gated{{a, at(Pose::identity(), 2.0)}};
  CHECK(fuse(ego, gated) == ego);
}

TEST_CASE("fuse clamps and is permutation invariant") {
  std::mt19937_64 rng(56);
  const BevGrid ego = random_grid(rng);
  std::vector<std::pair<BevGrid, PoseEstimate>> n;
  for (int i = 0; i < 4; ++i) {
    n.emplace_back(random_grid(rng), at(Pose::planar(0.3 * i, -0.2 * i, 0.4 * i)));
  }
  const BevGrid f = fuse(ego, n);
  for (float c : f.cells()) {
    CHECK(c >= 0.01F);
    CHECK(c <= 0.99F);
  }
  std::vector<std::pair<BevGrid, PoseEstimate>> rev(n.rbegin(), n.rend());
  const BevGrid g = fuse(ego, rev);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(g.cells()[i] == doctest::Approx(f.cells()[i]).epsilon(1e-6));
}

TEST_CASE("coverage gain") {
  BevGrid truth = BevGrid::square(64, 6.0, 0.0F);
  for (int r = 10; r < 54; ++r) {
    truth.set(r, 5, 1.0F);
    truth.set(r, 58, 1.0F);
  }
  // Ego only knows the left half; the neighbor at the same spot knows the right.
  BevGrid ego = BevGrid::square(64);
  BevGrid nb = BevGrid::square(64);
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) {
      BevGrid &g = c < 32 ? ego : nb;
      g.set(r, c, truth.at(r, c) > 0.5F ? 0.8F : 0.2F);
    }
  }
  const CoverageGain same = coverage_gain(truth, ego, ego);
  CHECK(same.dice_ego == same.dice_fused);
  const std::vector<std::pair<BevGrid, PoseEstimate>> n{{nb, at(Pose::identity())}};
  const CoverageGain gain = coverage_gain(truth, ego, fuse(ego, n));
  CHECK(gain.dice_fused > gain.dice_ego);
  CHECK(gain.dice_fused == doctest::Approx(1.0));
}

TEST_CASE("serialization round trip") {
  std::mt19937_64 rng(57);
  const BevGrid g = random_grid(rng, 16);
  const auto bytes = serialize(g);
  CHECK(bytes.size() == 16 + 16 * 16 * 4);
  CHECK(deserialize_bev(bytes) == g);
  auto bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(deserialize_bev(bad), std::invalid_argument);
}
