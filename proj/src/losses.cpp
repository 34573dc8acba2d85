// SPDX-License-Identifier: Apache-2.0
#include "covis/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace covis {

namespace {

double floored(double sigma2_hat) {
  if (std::isnan(sigma2_hat) || sigma2_hat < 0.0) {
    throw std::invalid_argument("predicted variance must be non-negative");
  }
  return std::max(sigma2_hat, kVarianceFloor);
}

// Squared chordal distance together with the sign of the branch taken:
// +1 when |q - q_hat| is the minimum, -1 for |q + q_hat|.
std::pair<double, double> chord_d2(const std::array<double, 4> &a, const std::array<double, 4> &b) {
  double minus = 0.0;
  double plus = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    minus += (a[k] - b[k]) * (a[k] - b[k]);
    plus += (a[k] + b[k]) * (a[k] + b[k]);
  }
  return minus <= plus ? std::pair{minus, 1.0} : std::pair{plus, -1.0};
}

double chord_from_d2(double d2) { return 2.0 * d2 * (4.0 - d2); }

double sum_cells(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += x;
  return s;
}

}  // namespace

bool is_clamped(double sigma2_hat) { return sigma2_hat < kVarianceFloor; }

double gnll(const GnllTerm &t) {
  const double s2 = floored(t.sigma2_hat);
  const double e = t.mu_hat - t.mu;
  return 0.5 * (std::log(s2) + e * e / s2);
}

GnllGrad gnll_grad(const GnllTerm &t) {
  const double s2 = floored(t.sigma2_hat);
  const double e = t.mu_hat - t.mu;
  return {e / s2, 0.5 * (1.0 / s2 - e * e / (s2 * s2))};
}

double chord_sq(const UnitQuat &q, const UnitQuat &q_hat) {
  return chord_from_d2(chord_d2(q.components(), q_hat.components()).first);
}

double chord_gnll(const UnitQuat &q, const UnitQuat &q_hat, double sigma2_hat) {
  const double s2 = floored(sigma2_hat);
  return 0.5 * (std::log(s2) + chord_sq(q, q_hat) / s2);
}

ChordGnllGrad chord_gnll_grad(const UnitQuat &q, const UnitQuat &q_hat, double sigma2_hat) {
  const double s2 = floored(sigma2_hat);
  const auto a = q.components();
  const auto b = q_hat.components();
  const auto [d2, branch] = chord_d2(a, b);
  const double c = chord_from_d2(d2);
  const double dl_dd2 = (8.0 - 4.0 * d2) / (2.0 * s2);

  ChordGnllGrad g;
  double radial = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    // d(d2)/d(q_hat) = 2 (q_hat - q) or 2 (q_hat + q)
    g.d_q_hat[k] = dl_dd2 * 2.0 * (b[k] - branch * a[k]);
    radial += g.d_q_hat[k] * b[k];
  }
  for (std::size_t k = 0; k < 4; ++k) g.d_q_hat[k] -= radial * b[k];
  g.d_sigma2_hat = 0.5 * (1.0 / s2 - c / (s2 * s2));
  return g;
}

double dice_loss(const BevGrid &truth, const BevGrid &pred) {
  require_same_shape(truth, pred);
  double tp = 0.0;
  const auto t = truth.cells();
  const auto p = pred.cells();
  for (std::size_t i = 0; i < t.size(); ++i) tp += static_cast<double>(t[i]) * p[i];
  return 1.0 - (2.0 * tp + kDiceEps) / (sum_cells(t) + sum_cells(p) + kDiceEps);
}

double bce_loss(const BevGrid &truth, const BevGrid &pred) {
  require_same_shape(truth, pred);
  const auto t = truth.cells();
  const auto p = pred.cells();
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double pi = std::clamp<double>(p[i], kBceEps, 1.0 - kBceEps);
    s -= t[i] * std::log(pi) + (1.0 - t[i]) * std::log(1.0 - pi);
  }
  return s / static_cast<double>(t.size());
}

double combo_loss(const BevGrid &truth, const BevGrid &pred, const LossWeights &w) {
  return w.alpha * dice_loss(truth, pred) + (1.0 - w.alpha) * bce_loss(truth, pred);
}

std::vector<double> combo_loss_grad(const BevGrid &truth, const BevGrid &pred,
                                    const LossWeights &w) {
  require_same_shape(truth, pred);
  const auto t = truth.cells();
  const auto p = pred.cells();
  double tp = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) tp += static_cast<double>(t[i]) * p[i];
  const double num = 2.0 * tp + kDiceEps;
  const double den = sum_cells(t) + sum_cells(p) + kDiceEps;
  const double n = static_cast<double>(t.size());

  std::vector<double> g(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double dice = -(2.0 * t[i] * den - num) / (den * den);
    double bce = 0.0;
    if (p[i] > kBceEps && p[i] < 1.0 - kBceEps) {
      bce = (-t[i] / p[i] + (1.0 - t[i]) / (1.0 - p[i])) / n;
    }
    g[i] = w.alpha * dice + (1.0 - w.alpha) * bce;
  }
  return g;
}

double pose_loss(const Pose &truth, const PoseEstimate &est, const LossWeights &w) {
  validate(est);
  const double pos = gnll({truth.position.x, est.p_hat.x, est.sigma_p.x * est.sigma_p.x}) +
                     gnll({truth.position.y, est.p_hat.y, est.sigma_p.y * est.sigma_p.y}) +
                     gnll({truth.position.z, est.p_hat.z, est.sigma_p.z * est.sigma_p.z});
  const double rot = chord_gnll(truth.rotation, est.q_hat, est.sigma_q * est.sigma_q);
  return (1.0 - w.beta) * pos + w.beta * rot;
}

double total_loss(std::span<const NodeLossSample> batch, const LossWeights &w) {
  double total = 0.0;
  for (const auto &s : batch) {
    total += combo_loss(s.bev_truth, s.bev_pred, w);
    for (NodeId j : s.neighbors) {
      const auto truth = s.truth.find(j);
      const auto est = std::find_if(s.estimates.begin(), s.estimates.end(), [&](const auto &e) {
        return e.src == s.node && e.dst == j;
      });
      if (truth == s.truth.end() || est == s.estimates.end()) {
        throw std::invalid_argument("missing truth or estimate for edge " +
                                    std::to_string(s.node) + "->" + std::to_string(j));
      }
      total += pose_loss(truth->second, *est, w);
    }
  }
  return total;
}

}  // namespace covis
