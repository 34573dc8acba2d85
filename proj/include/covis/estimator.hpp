// SPDX-License-Identifier: Apache-2.0
//
// Relative-pose estimators. The learned model is replaced by either a
// calibrated synthetic noise model, a noiseless oracle, or a remote process
// speaking the binary request/response contract below.
#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "covis/geometry.hpp"
#include "covis/pose_estimate.hpp"

namespace covis {

inline constexpr std::size_t kDefaultEmbeddingBytes = 6144;

/// What one robot publishes at one tick. pose_truth is only read by the
/// synthetic and oracle estimators; the embedding is opaque.
struct Observation {
  NodeId node_id = 0;
  std::uint32_t tick = 0;
  Pose pose_truth;
  double fov_deg = 120.0;
  std::vector<std::uint8_t> embedding;
};

/// Deterministic random payload for (seed, node, tick).
std::vector<std::uint8_t> make_embedding(std::uint64_t seed, NodeId node, std::uint32_t tick,
                                         std::size_t bytes = kDefaultEmbeddingBytes);

struct NoiseProfile {
  double median_pos_visible = 0.33;    // m
  double median_pos_invisible = 0.97;  // m
  double median_rot_visible = 5.8;     // deg
  double median_rot_invisible = 7.9;   // deg
  double miscalibration = 1.0;         // factor applied to reported sigmas
  /// Log-standard deviation of the per-edge difficulty factor that scales
  /// both noise magnitudes. 0 gives a fixed half-normal per visibility class.
  double scale_spread = 0.5;

  void validate() const;
};

/// Median of |Z| * exp(spread * U) for independent standard normals Z, U.
/// Reduces to sqrt(2) * erfinv(1/2) when spread == 0.
double difficulty_median_factor(double spread);

/// Chordal-scale standard deviation reported for a rotation angle scale.
double chordal_sigma(double angle_scale_rad);

/// The noise drawn for one edge, kept separate so tests can inspect the
/// generating scales.
struct EdgeNoise {
  bool invisible = false;
  double pos_scale = 0.0;  // m; half-normal scale of the error magnitude
  double rot_scale = 0.0;  // rad; half-normal scale of the error angle
  Vec3 pos_error;          // ego frame of src
  UnitQuat rot_error;      // left-multiplied onto the truth rotation
};

EdgeNoise sample_noise(const Pose &truth_rel, double fov_deg, const NoiseProfile &profile,
                       std::mt19937_64 &rng);

/// Truth relative pose corrupted by sample_noise. Sigmas report the
/// generating scales times profile.miscalibration.
PoseEstimate estimate(const Observation &obs_i, const Observation &obs_j,
                      const NoiseProfile &profile, std::mt19937_64 &rng);

/// Exact relative pose with every sigma set to `sigma_floor`.
PoseEstimate estimate_oracle(const Observation &obs_i, const Observation &obs_j,
                             double sigma_floor = 1e-3);

// Remote estimator wire contract: request = u32 LE length + embedding i +
// u32 LE length + embedding j; response = 17 LE float64 values
// (p_hat 3, sigma_p 3, q_hat 4 as w x y z, sigma_q 1, reserved 6).
inline constexpr std::size_t kEstimateResponseBytes = 17 * 8;

class RemoteEstimateError : public std::runtime_error {
 public:
  enum class Kind { Connect, Timeout, Framing, Validation };
  RemoteEstimateError(Kind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::vector<std::uint8_t> encode_estimate_request(std::span<const std::uint8_t> emb_i,
                                                  std::span<const std::uint8_t> emb_j);
std::vector<std::uint8_t> encode_estimate_response(const PoseEstimate &est);
/// Throws RemoteEstimateError (Framing or Validation).
PoseEstimate decode_estimate_response(std::span<const std::uint8_t> bytes, NodeId src,
                                      NodeId dst);

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::chrono::milliseconds timeout{1000};
};

/// One request per connection; throws RemoteEstimateError.
PoseEstimate remote_estimate(const Endpoint &endpoint, std::span<const std::uint8_t> emb_i,
                             std::span<const std::uint8_t> emb_j, NodeId src = 0, NodeId dst = 0);

/// Polymorphic handle used by the simulator.
class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual PoseEstimate estimate(const Observation &obs_i, const Observation &obs_j) = 0;
};

/// Noise substream keyed by (seed, tick, src, dst).
class SyntheticEstimator final : public Estimator {
 public:
  SyntheticEstimator(NoiseProfile profile, std::uint64_t seed);
  PoseEstimate estimate(const Observation &obs_i, const Observation &obs_j) override;

 private:
  NoiseProfile profile_;
  std::uint64_t seed_;
};

class OracleEstimator final : public Estimator {
 public:
  explicit OracleEstimator(double sigma_floor = 1e-3) : floor_(sigma_floor) {}
  PoseEstimate estimate(const Observation &obs_i, const Observation &obs_j) override {
    return estimate_oracle(obs_i, obs_j, floor_);
  }

 private:
  double floor_;
};

class RemoteEstimator final : public Estimator {
 public:
  explicit RemoteEstimator(Endpoint ep) : ep_(std::move(ep)) {}
  PoseEstimate estimate(const Observation &obs_i, const Observation &obs_j) override {
    return remote_estimate(ep_, obs_i.embedding, obs_j.embedding, obs_i.node_id, obs_j.node_id);
  }

 private:
  Endpoint ep_;
};

}  // namespace covis
