// SPDX-License-Identifier: Apache-2.0
#include "covis/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace covis {

void PdGains::validate() const {
  for (double g : {kp_pos, kd_pos, kp_yaw, kd_yaw}) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw std::invalid_argument("gains must be >= 0");
  }
  if (!(v_max > 0.0) || !std::isfinite(v_max)) throw std::invalid_argument("v_max must be > 0");
  if (!(w_max > 0.0) || !std::isfinite(w_max)) throw std::invalid_argument("w_max must be > 0");
}

void Gate::validate() const {
  if (!(tau_p > 0.0) || !(tau_q > 0.0)) throw std::invalid_argument("gate thresholds must be > 0");
}

PlanarError formation_error(const Pose &est, const Pose &offset_ref) {
  const Pose target = compose(est, offset_ref.inverse());
  return {target.position.x, target.position.y, wrap_angle(target.rotation.yaw())};
}

namespace {

Vec3 clamp_norm(const Vec3 &v, double max_norm) {
  const double n = v.norm();
  if (!(n > max_norm)) return v;
  return v * (max_norm / n);
}

}  // namespace

Command formation_cmd(const PoseEstimate &est, const Pose &offset_ref, PdState &state, double dt,
                      const PdGains &gains, const Gate &gate, const FeedForward &ff) {
  if (!(dt > 0.0)) throw std::invalid_argument("formation_cmd: dt must be > 0");
  Command cmd;
  const double sp = est.sigma_p_norm();

  if (!(sp <= gate.tau_p)) {
    // Keep facing the target until estimates become reliable again.
    state.reset();
    cmd.gated_pos = true;
    const double bearing = std::atan2(est.p_hat.y, est.p_hat.x);
    cmd.w = std::clamp(gains.kp_yaw * bearing, -gains.w_max, gains.w_max);
    return cmd;
  }

  const PlanarError e = formation_error(est.pose(), offset_ref);
  PlanarError d;
  if (state.has_prev) {
    const double a = PdState::kAlpha;
    d.x = a * (e.x - state.prev.x) / dt + (1.0 - a) * state.deriv.x;
    d.y = a * (e.y - state.prev.y) / dt + (1.0 - a) * state.deriv.y;
    d.yaw = a * wrap_angle(e.yaw - state.prev.yaw) / dt + (1.0 - a) * state.deriv.yaw;
  }
  state.prev = e;
  state.deriv = d;
  state.has_prev = true;

  const double scale = gate.attenuate ? 1.0 / (1.0 + sp / gate.tau_p) : 1.0;
  const Vec3 v{scale * (gains.kp_pos * e.x + gains.kd_pos * d.x) + ff.v.x,
               scale * (gains.kp_pos * e.y + gains.kd_pos * d.y) + ff.v.y, 0.0};
  cmd.v = clamp_norm(v, gains.v_max);

  if (!(est.sigma_q <= gate.tau_q)) {
    cmd.gated_rot = true;
    cmd.w = 0.0;
  } else {
    const double w = scale * (gains.kp_yaw * e.yaw + gains.kd_yaw * d.yaw) + ff.w;
    cmd.w = std::clamp(w, -gains.w_max, gains.w_max);
  }
  return cmd;
}

bool kf_record_step(const PoseEstimate &est_to_last_kf, double d_kf, double sigma_kf) {
  return est_to_last_kf.p_hat.norm() > d_kf || est_to_last_kf.sigma_p_norm() > sigma_kf;
}

FollowStep kf_follow_step(const PoseEstimate &est_to_kf, double eps_reach, std::size_t kf_index,
                          std::size_t kf_count, PdState &state, double dt, const PdGains &gains,
                          const Gate &gate) {
  if (kf_index >= kf_count) throw std::invalid_argument("kf_follow_step: index out of range");
  FollowStep out;
  out.next_index = kf_index;
  const bool confident = est_to_kf.sigma_p_norm() <= gate.tau_p;
  if (confident && est_to_kf.p_hat.norm() < eps_reach) {
    out.reached = true;
    if (kf_index + 1 < kf_count) out.next_index = kf_index + 1;
    state.reset();
    return out;
  }
  out.cmd = formation_cmd(est_to_kf, Pose::identity(), state, dt, gains, gate);
  return out;
}

}  // namespace covis
