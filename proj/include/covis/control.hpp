// SPDX-License-Identifier: Apache-2.0
//
// Uncertainty-gated PD formation controller and keyframe homing.
// Commands are holonomic: planar body velocity plus yaw rate.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "covis/geometry.hpp"
#include "covis/pose_estimate.hpp"

namespace covis {

struct PdGains {
  double kp_pos = 1.5;  // 1/s
  double kd_pos = 0.3;
  double kp_yaw = 1.5;  // 1/s
  double kd_yaw = 0.3;
  double v_max = 0.8;  // m/s
  double w_max = 1.5;  // rad/s

  void validate() const;
};

struct Gate {
  double tau_p = 1.0;  // m, on |sigma_p|
  double tau_q = 0.5;  // chordal sigma
  /// Scales both PD gains by 1 / (1 + |sigma_p| / tau_p) below the gate.
  bool attenuate = false;

  void validate() const;
};

/// Planar pose error: where the controlled robot should be, in its own frame.
struct PlanarError {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

/// Derivative memory of one PD loop; single owner.
struct PdState {
  static constexpr double kAlpha = 0.5;  // derivative low-pass weight
  PlanarError prev;
  PlanarError deriv;
  bool has_prev = false;

  void reset() { *this = PdState{}; }
};

struct Command {
  Vec3 v;  // m/s, body frame, z always 0
  double w = 0.0;  // rad/s
  bool gated_pos = false;
  bool gated_rot = false;

  friend bool operator==(const Command &, const Command &) = default;
};

/// Feed-forward terms added before clamping, in the body frame.
struct FeedForward {
  Vec3 v;
  double w = 0.0;
};

/// Error between the estimated pose of the tracked target and the reference
/// offset at which it should appear: est composed with the inverse offset.
PlanarError formation_error(const Pose &est, const Pose &offset_ref);

/// PD law with hard gating on the reported uncertainty:
///  - |sigma_p| > tau_p: no translation; yaw rate turns toward the target.
///  - sigma_q > tau_q (position not gated): no yaw rate.
/// The result always satisfies |v| <= v_max and |w| <= w_max.
Command formation_cmd(const PoseEstimate &est, const Pose &offset_ref, PdState &state, double dt,
                      const PdGains &gains, const Gate &gate, const FeedForward &ff = {});

/// Command for a robot that has no usable estimate.
inline Command gated_command() { return {{}, 0.0, true, true}; }

struct Keyframe {
  std::vector<std::uint8_t> embedding;
  double recorded_distance = 0.0;  // |p_hat| to the previous keyframe at record time
  std::uint32_t tick = 0;
  Pose pose_truth;  // evaluation only
};

/// True iff a new keyframe should be appended: |p_hat| > d_kf or
/// |sigma_p| > sigma_kf.
bool kf_record_step(const PoseEstimate &est_to_last_kf, double d_kf, double sigma_kf);

struct FollowStep {
  Command cmd;
  std::size_t next_index = 0;
  bool reached = false;
};

/// Drives toward the current keyframe. Within eps_reach the command is zero
/// and the index advances, except at the last keyframe where it holds.
FollowStep kf_follow_step(const PoseEstimate &est_to_kf, double eps_reach, std::size_t kf_index,
                          std::size_t kf_count, PdState &state, double dt, const PdGains &gains,
                          const Gate &gate);

}  // namespace covis
