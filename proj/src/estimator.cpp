// SPDX-License-Identifier: Apache-2.0
#include "covis/estimator.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "covis/bytes.hpp"
#include "covis/metrics.hpp"
#include "covis/rng.hpp"

namespace covis {

void validate(const PoseEstimate &est) {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!est.p_hat.finite()) throw std::invalid_argument("PoseEstimate: non-finite p_hat");
  if (!positive(est.sigma_p.x) || !positive(est.sigma_p.y) || !positive(est.sigma_p.z) ||
      !positive(est.sigma_q)) {
    throw std::invalid_argument("PoseEstimate: sigmas must be finite and positive");
  }
}

std::vector<std::uint8_t> make_embedding(std::uint64_t seed, NodeId node, std::uint32_t tick,
                                         std::size_t bytes) {
  auto rng = substream(seed, {0xE3BEDULL, node, tick});
  std::vector<std::uint8_t> out(bytes);
  std::size_t i = 0;
  while (i < bytes) {
    auto word = rng();
    for (int b = 0; b < 8 && i < bytes; ++b, ++i) {
      out[i] = static_cast<std::uint8_t>(word & 0xFFU);
      word >>= 8U;
    }
  }
  return out;
}

void NoiseProfile::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(median_pos_visible) || !positive(median_pos_invisible) ||
      !positive(median_rot_visible) || !positive(median_rot_invisible) ||
      !positive(miscalibration) || !(scale_spread >= 0.0) || !std::isfinite(scale_spread)) {
    throw std::invalid_argument("NoiseProfile: medians and miscalibration must be positive");
  }
}

namespace {

// P(|Z| exp(spread U) <= k) by trapezoidal integration over U.
double difficulty_cdf(double k, double spread) {
  constexpr int kSteps = 3600;
  constexpr double kLimit = 9.0;
  const double h = 2.0 * kLimit / kSteps;
  double acc = 0.0;
  for (int i = 0; i <= kSteps; ++i) {
    const double u = -kLimit + h * i;
    const double w = (i == 0 || i == kSteps) ? 0.5 : 1.0;
    const double phi = std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
    acc += w * phi * std::erf(k * std::exp(-spread * u) / std::numbers::sqrt2);
  }
  return acc * h;
}

}  // namespace

double difficulty_median_factor(double spread) {
  thread_local double cached_spread = std::numeric_limits<double>::quiet_NaN();
  thread_local double cached_value = 0.0;
  if (spread == cached_spread) return cached_value;
  double lo = std::log(1e-6);
  double hi = std::log(1e6);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (difficulty_cdf(std::exp(mid), spread) < 0.5 ? lo : hi) = mid;
  }
  cached_spread = spread;
  cached_value = std::exp(0.5 * (lo + hi));
  return cached_value;
}

double chordal_sigma(double angle_scale_rad) {
  return 2.0 * std::numbers::sqrt2 * std::sin(std::min(angle_scale_rad, std::numbers::pi) / 2.0);
}

namespace {

Vec3 random_unit(std::mt19937_64 &rng) {
  std::normal_distribution<double> n;
  for (;;) {
    const Vec3 v{n(rng), n(rng), n(rng)};
    const double len = v.norm();
    if (len > 1e-12) return v * (1.0 / len);
  }
}

}  // namespace

EdgeNoise sample_noise(const Pose &truth_rel, double fov_deg, const NoiseProfile &profile,
                       std::mt19937_64 &rng) {
  profile.validate();
  EdgeNoise n;
  n.invisible = is_invisible({truth_rel, {}, fov_deg});
  const double m_pos = n.invisible ? profile.median_pos_invisible : profile.median_pos_visible;
  const double m_rot =
      deg2rad(n.invisible ? profile.median_rot_invisible : profile.median_rot_visible);

  std::normal_distribution<double> normal;
  const double k = difficulty_median_factor(profile.scale_spread);
  const double difficulty = std::exp(profile.scale_spread * normal(rng));
  n.pos_scale = m_pos / k * difficulty;
  n.rot_scale = m_rot / k * difficulty;

  n.pos_error = random_unit(rng) * (n.pos_scale * std::abs(normal(rng)));
  const Vec3 axis = random_unit(rng);
  n.rot_error = UnitQuat::from_axis_angle(axis, n.rot_scale * std::abs(normal(rng)));
  return n;
}

PoseEstimate estimate(const Observation &obs_i, const Observation &obs_j,
                      const NoiseProfile &profile, std::mt19937_64 &rng) {
  const Pose truth = relative_pose(obs_i.pose_truth, obs_j.pose_truth);
  const EdgeNoise n = sample_noise(truth, obs_i.fov_deg, profile, rng);
  PoseEstimate est;
  est.p_hat = truth.position + n.pos_error;
  est.q_hat = n.rot_error * truth.rotation;
  // Per-axis sigma so the three variances sum to E|error|^2 = pos_scale^2.
  const double axis_sigma = n.pos_scale / std::sqrt(3.0) * profile.miscalibration;
  est.sigma_p = {axis_sigma, axis_sigma, axis_sigma};
  est.sigma_q = chordal_sigma(n.rot_scale) * profile.miscalibration;
  est.src = obs_i.node_id;
  est.dst = obs_j.node_id;
  return est;
}

PoseEstimate estimate_oracle(const Observation &obs_i, const Observation &obs_j,
                             double sigma_floor) {
  const Pose truth = relative_pose(obs_i.pose_truth, obs_j.pose_truth);
  return {truth.position, {sigma_floor, sigma_floor, sigma_floor}, truth.rotation, sigma_floor,
          obs_i.node_id, obs_j.node_id};
}

SyntheticEstimator::SyntheticEstimator(NoiseProfile profile, std::uint64_t seed)
    : profile_(profile), seed_(seed) {
  profile_.validate();
}

PoseEstimate SyntheticEstimator::estimate(const Observation &obs_i, const Observation &obs_j) {
  auto rng = substream(seed_, {obs_i.tick, obs_i.node_id, obs_j.node_id});
  return covis::estimate(obs_i, obs_j, profile_, rng);
}

std::vector<std::uint8_t> encode_estimate_request(std::span<const std::uint8_t> emb_i,
                                                  std::span<const std::uint8_t> emb_j) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + emb_i.size() + emb_j.size());
  bytes::put_le(out, static_cast<std::uint32_t>(emb_i.size()));
  out.insert(out.end(), emb_i.begin(), emb_i.end());
  bytes::put_le(out, static_cast<std::uint32_t>(emb_j.size()));
  out.insert(out.end(), emb_j.begin(), emb_j.end());
  return out;
}

std::vector<std::uint8_t> encode_estimate_response(const PoseEstimate &est) {
  std::vector<std::uint8_t> out;
  out.reserve(kEstimateResponseBytes);
  for (double v : {est.p_hat.x, est.p_hat.y, est.p_hat.z, est.sigma_p.x, est.sigma_p.y,
                   est.sigma_p.z, est.q_hat.w(), est.q_hat.x(), est.q_hat.y(), est.q_hat.z(),
                   est.sigma_q}) {
    bytes::put_le(out, v);
  }
  for (int i = 0; i < 6; ++i) bytes::put_le(out, 0.0);
  return out;
}

PoseEstimate decode_estimate_response(std::span<const std::uint8_t> in, NodeId src, NodeId dst) {
  using Kind = RemoteEstimateError::Kind;
  if (in.size() != kEstimateResponseBytes) {
    throw RemoteEstimateError(Kind::Framing, "estimate response has " + std::to_string(in.size()) +
                                                 " bytes, expected " +
                                                 std::to_string(kEstimateResponseBytes));
  }
  std::array<double, 11> v{};
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = bytes::get_f64(in, 8 * i);
  PoseEstimate est;
  est.p_hat = {v[0], v[1], v[2]};
  est.sigma_p = {v[3], v[4], v[5]};
  est.sigma_q = v[10];
  est.src = src;
  est.dst = dst;
  try {
    est.q_hat = UnitQuat(v[6], v[7], v[8], v[9]);
    validate(est);
  } catch (const std::invalid_argument &e) {
    throw RemoteEstimateError(Kind::Validation, e.what());
  }
  return est;
}

}  // namespace covis
