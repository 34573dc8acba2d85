// SPDX-License-Identifier: Apache-2.0
//
// Loss kernels for heteroscedastic pose regression and BEV segmentation,
// with analytic gradients so an external trainer can be checked against
// them.
#pragma once

#include <array>
#include <span>
#include <unordered_map>
#include <vector>

#include "covis/bev.hpp"
#include "covis/geometry.hpp"
#include "covis/pose_estimate.hpp"

namespace covis {

/// Predicted variances are clamped to this value before use.
inline constexpr double kVarianceFloor = 1e-8;
/// BCE probability clamp.
inline constexpr double kBceEps = 1e-7;
/// Soft-Dice smoothing constant.
inline constexpr double kDiceEps = 1e-6;

struct GnllTerm {
  double mu = 0.0;
  double mu_hat = 0.0;
  double sigma2_hat = 1.0;
};

struct LossWeights {
  double alpha = 0.5;  // Dice share of the BEV loss
  double beta = 1.0;   // rotation share of the pose loss
};

/// True when the variance will be raised to kVarianceFloor.
bool is_clamped(double sigma2_hat);

/// 1/2 (log s2 + (mu_hat - mu)^2 / s2). Throws std::invalid_argument on a
/// negative or NaN variance.
double gnll(const GnllTerm &t);

struct GnllGrad {
  double d_mu_hat = 0.0;
  double d_sigma2_hat = 0.0;
};
GnllGrad gnll_grad(const GnllTerm &t);

/// 2 d^2 (4 - d^2) with d the chordal quaternion distance, in [0, 8].
double chord_sq(const UnitQuat &q, const UnitQuat &q_hat);

double chord_gnll(const UnitQuat &q, const UnitQuat &q_hat, double sigma2_hat);

struct ChordGnllGrad {
  /// Gradient with respect to q_hat, projected onto the tangent space of
  /// the unit sphere at q_hat (w, x, y, z order).
  std::array<double, 4> d_q_hat{};
  double d_sigma2_hat = 0.0;
};
ChordGnllGrad chord_gnll_grad(const UnitQuat &q, const UnitQuat &q_hat, double sigma2_hat);

/// Soft Dice loss 1 - (2 sum(tp) + eps) / (sum(t) + sum(p) + eps).
double dice_loss(const BevGrid &truth, const BevGrid &pred);
/// Mean binary cross-entropy with pred clamped to [eps, 1 - eps].
double bce_loss(const BevGrid &truth, const BevGrid &pred);
/// alpha * Dice + (1 - alpha) * BCE.
double combo_loss(const BevGrid &truth, const BevGrid &pred, const LossWeights &w);

/// d(combo_loss)/d(pred cell), same layout as the grid's cells.
std::vector<double> combo_loss_grad(const BevGrid &truth, const BevGrid &pred,
                                    const LossWeights &w);

/// (1 - beta) * sum over axes of GNLL(p, p_hat, sigma_p^2) +
/// beta * chord_gnll(q, q_hat, sigma_q^2). Throws std::invalid_argument on
/// an estimate that fails validate().
double pose_loss(const Pose &truth, const PoseEstimate &est, const LossWeights &w);

/// One ego node of a training batch.
struct NodeLossSample {
  NodeId node = 0;
  BevGrid bev_truth;
  BevGrid bev_pred;
  std::vector<NodeId> neighbors;
  std::unordered_map<NodeId, Pose> truth;  // relative pose of each neighbor
  std::vector<PoseEstimate> estimates;     // src == node
};

/// Sum over nodes of BEV loss plus per-edge pose losses. Throws
/// std::invalid_argument if a listed neighbor lacks a truth or estimate.
double total_loss(std::span<const NodeLossSample> batch, const LossWeights &w);

}  // namespace covis
