// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "covis/geometry.hpp"

namespace covis {

using NodeId = std::uint16_t;

/// Relative pose of `dst` in the ego frame of `src`, with aleatoric
/// standard deviations. sigma_p is per axis (meters); sigma_q is on the
/// chordal scale used by the rotation loss.
struct PoseEstimate {
  Vec3 p_hat;
  Vec3 sigma_p{1.0, 1.0, 1.0};
  UnitQuat q_hat;
  double sigma_q = 1.0;
  NodeId src = 0;
  NodeId dst = 0;

  /// Scalar position uncertainty used for gating and filtering.
  [[nodiscard]] double sigma_p_norm() const { return sigma_p.norm(); }
  [[nodiscard]] Pose pose() const { return {p_hat, q_hat}; }

  friend bool operator==(const PoseEstimate &, const PoseEstimate &) = default;
};

/// Throws std::invalid_argument unless every sigma is finite and positive
/// and p_hat is finite.
void validate(const PoseEstimate &est);

}  // namespace covis
