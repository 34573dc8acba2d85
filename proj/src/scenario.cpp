// SPDX-License-Identifier: Apache-2.0
#include "covis/scenario.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <numbers>
#include <stdexcept>

#include "covis/metrics.hpp"
#include "covis/rng.hpp"

namespace covis {

namespace {
constexpr double kPi = std::numbers::pi;
}

// --- FloorMap -------------------------------------------------------------------

FloorMap::FloorMap(int nx, int ny, double resolution, double origin_x, double origin_y)
    : nx_(nx), ny_(ny), res_(resolution), ox_(origin_x), oy_(origin_y) {
  if (nx <= 0 || ny <= 0 || !(resolution > 0.0)) {
    throw std::invalid_argument("FloorMap: empty raster");
  }
  occ_.assign(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), 0);
}

bool FloorMap::occupied_cell(int ix, int iy) const {
  if (ix < 0 || iy < 0 || ix >= nx_ || iy >= ny_) return true;
  return occ_[static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx_) +
              static_cast<std::size_t>(ix)] != 0;
}

void FloorMap::set_occupied(int ix, int iy, bool occ) {
  if (ix < 0 || iy < 0 || ix >= nx_ || iy >= ny_) return;
  occ_[static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx_) +
       static_cast<std::size_t>(ix)] = occ ? 1 : 0;
}

void FloorMap::fill_rect(double x0, double y0, double x1, double y1, bool occ) {
  // Cells whose centers fall inside the rectangle.
  auto first = [&](double v, double o) {
    return static_cast<int>(std::ceil((v - o) / res_ - 0.5 - 1e-9));
  };
  const int ix0 = std::max(0, first(x0, ox_));
  const int ix1 = std::min(nx_, first(x1, ox_));
  const int iy0 = std::max(0, first(y0, oy_));
  const int iy1 = std::min(ny_, first(y1, oy_));
  for (int iy = iy0; iy < iy1; ++iy) {
    for (int ix = ix0; ix < ix1; ++ix) set_occupied(ix, iy, occ);
  }
}

bool FloorMap::occupied(double x, double y) const {
  const auto ix = static_cast<int>(std::floor((x - ox_) / res_));
  const auto iy = static_cast<int>(std::floor((y - oy_) / res_));
  return occupied_cell(ix, iy);
}

bool FloorMap::clear(double x, double y, double radius) const {
  const double reach = radius + res_;
  const auto ix0 = static_cast<int>(std::floor((x - reach - ox_) / res_));
  const auto ix1 = static_cast<int>(std::floor((x + reach - ox_) / res_));
  const auto iy0 = static_cast<int>(std::floor((y - reach - oy_) / res_));
  const auto iy1 = static_cast<int>(std::floor((y + reach - oy_) / res_));
  for (int iy = iy0; iy <= iy1; ++iy) {
    for (int ix = ix0; ix <= ix1; ++ix) {
      const double cx = ox_ + (ix + 0.5) * res_;
      const double cy = oy_ + (iy + 0.5) * res_;
      // Nearest point of the cell square to (x, y).
      const double dx = std::max(std::abs(cx - x) - 0.5 * res_, 0.0);
      const double dy = std::max(std::abs(cy - y) - 0.5 * res_, 0.0);
      if (dx * dx + dy * dy <= radius * radius && occupied_cell(ix, iy)) return false;
    }
  }
  return !occupied(x, y);
}

std::size_t FloorMap::free_count() const {
  return static_cast<std::size_t>(std::count(occ_.begin(), occ_.end(), std::uint8_t{0}));
}

bool FloorMap::free_space_connected() const {
  const auto it = std::find(occ_.begin(), occ_.end(), std::uint8_t{0});
  if (it == occ_.end()) return true;
  std::vector<std::uint8_t> seen(occ_.size(), 0);
  std::vector<std::size_t> stack{static_cast<std::size_t>(it - occ_.begin())};
  seen[stack.front()] = 1;
  std::size_t reached = 0;
  const auto w = static_cast<std::size_t>(nx_);
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    ++reached;
    const int ix = static_cast<int>(i % w);
    const int iy = static_cast<int>(i / w);
    const std::array<std::pair<int, int>, 4> nbrs{
        {{ix + 1, iy}, {ix - 1, iy}, {ix, iy + 1}, {ix, iy - 1}}};
    for (auto [nx, ny] : nbrs) {
      if (occupied_cell(nx, ny)) continue;
      const std::size_t j = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
      if (seen[j] == 0) {
        seen[j] = 1;
        stack.push_back(j);
      }
    }
  }
  return reached == free_count();
}

// --- gen_world -----------------------------------------------------------------

namespace {

struct Rect {
  double x0, y0, x1, y1;
  [[nodiscard]] double w() const { return x1 - x0; }
  [[nodiscard]] double h() const { return y1 - y0; }
};

}  // namespace

Vec3 sample_free(const FloorMap &map, std::mt19937_64 &rng, double clearance, int max_tries) {
  std::uniform_real_distribution<double> ux(map.origin_x(), map.origin_x() + map.nx() * map.resolution());
  std::uniform_real_distribution<double> uy(map.origin_y(), map.origin_y() + map.ny() * map.resolution());
  for (int i = 0; i < max_tries; ++i) {
    const double x = ux(rng);
    const double y = uy(rng);
    if (map.clear(x, y, clearance)) return {x, y, 0.0};
  }
  throw std::runtime_error("sample_free: no free position found");
}

World gen_world(std::uint64_t seed, double extent, int n_rooms, const WorldOptions &opts) {
  if (!(extent >= 12.0)) throw std::invalid_argument("gen_world: extent must be >= 12 m");
  if (n_rooms < 1) throw std::invalid_argument("gen_world: n_rooms must be >= 1");
  if (!(opts.resolution > 0.0) || !(opts.wall > 0.0) || !(opts.door > 0.0) ||
      !(opts.min_room > opts.door)) {
    throw std::invalid_argument("gen_world: bad wall/door/room dimensions");
  }
  auto rng = substream(seed, {0x3031DULL});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double half = extent / 2.0;
  const auto n = static_cast<int>(std::lround(extent / opts.resolution));
  const double wall = opts.wall;

  constexpr int kAttempts = 20;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    FloorMap map(n, n, opts.resolution, -half, -half);
    map.fill_rect(-half, -half, half, -half + wall, true);
    map.fill_rect(-half, half - wall, half, half, true);
    map.fill_rect(-half, -half, -half + wall, half, true);
    map.fill_rect(half - wall, -half, half, half, true);

    std::vector<Rect> rooms{{-half + wall, -half + wall, half - wall, half - wall}};
    const double need = 2.0 * opts.min_room + wall;
    while (static_cast<int>(rooms.size()) < n_rooms) {
      std::size_t pick = rooms.size();
      double best = 0.0;
      for (std::size_t i = 0; i < rooms.size(); ++i) {
        const Rect &r = rooms[i];
        if (std::max(r.w(), r.h()) < need) continue;
        if (r.w() * r.h() > best) {
          best = r.w() * r.h();
          pick = i;
        }
      }
      if (pick == rooms.size()) {
        throw std::invalid_argument("gen_world: n_rooms does not fit the extent");
      }
      const Rect r = rooms[pick];
      const bool split_x = r.w() >= need && (r.h() < need || r.w() > r.h() ||
                                             (r.w() == r.h() && unit(rng) < 0.5));
      Rect a = r;
      Rect b = r;
      if (split_x) {
        const double x = r.x0 + opts.min_room + unit(rng) * (r.w() - need);
        map.fill_rect(x, r.y0, x + wall, r.y1, true);
        const double dy = r.y0 + 0.1 + unit(rng) * std::max(0.0, r.h() - opts.door - 0.2);
        map.fill_rect(x, dy, x + wall, dy + opts.door, false);
        a.x1 = x;
        b.x0 = x + wall;
      } else {
        const double y = r.y0 + opts.min_room + unit(rng) * (r.h() - need);
        map.fill_rect(r.x0, y, r.x1, y + wall, true);
        const double dx = r.x0 + 0.1 + unit(rng) * std::max(0.0, r.w() - opts.door - 0.2);
        map.fill_rect(dx, y, dx + opts.door, y + wall, false);
        a.y1 = y;
        b.y0 = y + wall;
      }
      rooms[pick] = a;
      rooms.push_back(b);
    }

    for (int i = 0; i < opts.obstacles; ++i) {
      const Rect &r = rooms[static_cast<std::size_t>(unit(rng) * static_cast<double>(rooms.size())) %
                           rooms.size()];
      const double side = 0.3 + 0.5 * unit(rng);
      const double margin = 0.6;
      const double span_x = r.w() - 2.0 * margin - side;
      const double span_y = r.h() - 2.0 * margin - side;
      if (span_x <= 0.0 || span_y <= 0.0) continue;
      const double x = r.x0 + margin + unit(rng) * span_x;
      const double y = r.y0 + margin + unit(rng) * span_y;
      map.fill_rect(x, y, x + side, y + side, true);
    }

    if (!map.free_space_connected()) continue;

    World world;
    world.map = std::move(map);
    world.extent = extent;
    world.seed = seed;
    std::uniform_real_distribution<double> yaw(-kPi, kPi);
    for (int i = 0; i < opts.n_nodes; ++i) {
      const Vec3 p = sample_free(world.map, rng, opts.clearance);
      world.nodes.push_back(
          {static_cast<NodeId>(i), Pose::planar(p.x, p.y, yaw(rng)), opts.fov_deg});
    }
    return world;
  }
  throw std::runtime_error("gen_world: could not produce a connected floor plan");
}

// --- BEV rendering --------------------------------------------------------------

BevGrid bev_crop(const FloorMap &map, const Pose &pose, int size, double extent) {
  BevGrid g = BevGrid::square(size, extent, 0.0F);
  for (int r = 0; r < g.rows(); ++r) {
    for (int c = 0; c < g.cols(); ++c) {
      const auto [ex, ey] = g.cell_center(r, c);
      const Vec3 w = pose.apply({ex, ey, 0.0});
      g.set(r, c, map.occupied(w.x, w.y) ? 1.0F : 0.0F);
    }
  }
  return g;
}

BevGrid local_observation(const FloorMap &map, const Pose &pose, const ObservationModel &model,
                          int size, double extent) {
  BevGrid g = BevGrid::square(size, extent);
  const double half_fov = deg2rad(model.fov_deg) / 2.0;
  const double step = map.resolution() / 2.0;
  const double stop_short = 0.75 * g.resolution();
  for (int r = 0; r < g.rows(); ++r) {
    for (int c = 0; c < g.cols(); ++c) {
      const auto [ex, ey] = g.cell_center(r, c);
      const double dist = std::hypot(ex, ey);
      if (dist > model.range) continue;
      if (dist > 1e-9 && std::abs(std::atan2(ey, ex)) > half_fov) continue;
      bool blocked = false;
      for (double s = step; s < dist - stop_short; s += step) {
        const Vec3 w = pose.apply({ex * s / dist, ey * s / dist, 0.0});
        if (map.occupied(w.x, w.y)) {
          blocked = true;
          break;
        }
      }
      if (blocked) continue;
      const Vec3 w = pose.apply({ex, ey, 0.0});
      g.set(r, c, map.occupied(w.x, w.y) ? model.p_occ : model.p_free);
    }
  }
  return g;
}

// --- Dataset sampling -------------------------------------------------------------

std::vector<SampleGroup> sample_groups(const World &world, int n_groups, int n_max, double d_max,
                                       std::uint64_t seed, const SampleOptions &opts) {
  if (n_groups < 0 || n_max < 1 || !(d_max >= 0.0)) {
    throw std::invalid_argument("sample_groups: bad group parameters");
  }
  auto rng = substream(seed, {0x6A0CULL});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<SampleGroup> out;
  out.reserve(static_cast<std::size_t>(n_groups));
  for (int g = 0; g < n_groups; ++g) {
    SampleGroup group;
    const Vec3 anchor = sample_free(world.map, rng, opts.clearance, opts.max_tries);
    std::vector<Vec3> pos{anchor};
    for (int i = 1; i < n_max; ++i) {
      bool placed = false;
      for (int t = 0; t < opts.max_tries; ++t) {
        const double rad = d_max * std::sqrt(unit(rng));
        const double th = 2.0 * kPi * unit(rng);
        const Vec3 p{anchor.x + rad * std::cos(th), anchor.y + rad * std::sin(th), 0.0};
        if (world.map.clear(p.x, p.y, opts.clearance)) {
          pos.push_back(p);
          placed = true;
          break;
        }
      }
      if (!placed) throw std::runtime_error("sample_groups: rejection sampling exhausted");
    }
    for (int i = 0; i < n_max; ++i) {
      GroupNode node;
      node.id = static_cast<NodeId>(i);
      node.fov_deg = opts.observation.fov_deg;
      const Vec3 &p = pos[static_cast<std::size_t>(i)];
      node.pose = Pose::planar(p.x, p.y, kPi * (2.0 * unit(rng) - 1.0));
      if (opts.render_bev) {
        node.bev = bev_crop(world.map, node.pose);
        node.bev_pred = local_observation(world.map, node.pose, opts.observation);
      }
      group.nodes.push_back(std::move(node));
    }
    out.push_back(std::move(group));
  }
  return out;
}

void estimate_all_pairs(SampleGroup &group, Estimator &est, std::uint32_t tick) {
  group.estimates.clear();
  for (const auto &a : group.nodes) {
    for (const auto &b : group.nodes) {
      if (a.id == b.id) continue;
      const Observation oa{a.id, tick, a.pose, a.fov_deg, {}};
      const Observation ob{b.id, tick, b.pose, b.fov_deg, {}};
      group.estimates.push_back(est.estimate(oa, ob));
    }
  }
}

// --- Trajectories -------------------------------------------------------------

void TrajectorySpec::validate() const {
  auto pos = [](double v) { return std::isfinite(v) && v > 0.0; };
  switch (kind) {
    case TrajectoryKind::Fig8Dynamic:
    case TrajectoryKind::Fig8Static:
      if (!pos(period)) throw std::invalid_argument("trajectory period must be > 0");
      if (!std::isfinite(amp_x) || !std::isfinite(amp_y)) {
        throw std::invalid_argument("trajectory amplitudes must be finite");
      }
      break;
    case TrajectoryKind::RectDynamic:
      if (!pos(width) || !pos(height) || !pos(corner_radius) ||
          corner_radius > std::min(width, height) / 2.0) {
        throw std::invalid_argument("rectangle needs 0 < corner_radius <= min(w, h) / 2");
      }
      if (!pos(speed) && !pos(period)) {
        throw std::invalid_argument("rectangle needs a positive speed or period");
      }
      break;
  }
}

double TrajectorySpec::rect_perimeter() const {
  return 2.0 * (width - 2.0 * corner_radius) + 2.0 * (height - 2.0 * corner_radius) +
         2.0 * kPi * corner_radius;
}

namespace {

// Position and tangent heading at arc length s along the rounded rectangle,
// starting at the middle of the bottom edge and running counter-clockwise.
Pose rect_at(const TrajectorySpec &spec, double s) {
  const double r = spec.corner_radius;
  const double hw = spec.width / 2.0;
  const double hh = spec.height / 2.0;
  const double sx = spec.width - 2.0 * r;
  const double sy = spec.height - 2.0 * r;
  const double arc = kPi * r / 2.0;
  struct Straight {
    double x0, y0, heading, len;
  };
  struct Corner {
    double cx, cy, a0;
  };
  // Alternating straight / corner pieces.
  const std::array<Straight, 5> straights{{{0.0, -hh, 0.0, sx / 2.0},
                                           {hw, -hh + r, kPi / 2.0, sy},
                                           {hw - r, hh, kPi, sx},
                                           {-hw, hh - r, -kPi / 2.0, sy},
                                           {-hw + r, -hh, 0.0, sx / 2.0}}};
  const std::array<Corner, 4> corners{{{hw - r, -hh + r, -kPi / 2.0},
                                       {hw - r, hh - r, 0.0},
                                       {-hw + r, hh - r, kPi / 2.0},
                                       {-hw + r, -hh + r, kPi}}};
  for (std::size_t i = 0; i < straights.size(); ++i) {
    const Straight &st = straights[i];
    if (s <= st.len || i + 1 == straights.size()) {
      const double d = std::min(s, st.len);
      return Pose::planar(st.x0 + d * std::cos(st.heading), st.y0 + d * std::sin(st.heading),
                          st.heading);
    }
    s -= st.len;
    const Corner &co = corners[i];
    if (s <= arc) {
      const double a = co.a0 + s / r;
      return Pose::planar(co.cx + r * std::cos(a), co.cy + r * std::sin(a), a + kPi / 2.0);
    }
    s -= arc;
  }
  return Pose::identity();
}

Pose fig8_at(const TrajectorySpec &spec, double t, bool fixed_heading) {
  const double w = 2.0 * kPi / spec.period;
  const double x = spec.amp_x * std::sin(w * t);
  const double y = spec.amp_y * std::sin(w * t) * std::cos(w * t);
  const double tt = fixed_heading ? 0.0 : t;
  const double vx = spec.amp_x * w * std::cos(w * tt);
  const double vy = spec.amp_y * w * std::cos(2.0 * w * tt);
  return Pose::planar(x, y, std::atan2(vy, vx));
}

}  // namespace

Pose leader_pose(const TrajectorySpec &spec, double t) {
  const bool fixed = spec.effective_heading() == HeadingMode::Fixed;
  if (spec.kind != TrajectoryKind::RectDynamic) return fig8_at(spec, t, fixed);
  const double len = spec.rect_perimeter();
  const double speed = spec.speed > 0.0 ? spec.speed : len / spec.period;
  double s = std::fmod(speed * t, len);
  if (s < 0.0) s += len;
  Pose p = rect_at(spec, s);
  if (fixed) p.rotation = UnitQuat::identity();
  return p;
}

Twist leader_twist(const TrajectorySpec &spec, double t) {
  constexpr double h = 1e-4;
  const Pose a = leader_pose(spec, t - h);
  const Pose b = leader_pose(spec, t + h);
  return {(b.position.x - a.position.x) / (2.0 * h), (b.position.y - a.position.y) / (2.0 * h),
          wrap_angle(b.rotation.yaw() - a.rotation.yaw()) / (2.0 * h)};
}

// --- Estimators ---------------------------------------------------------------

std::unique_ptr<Estimator> make_estimator(const EstimatorConfig &cfg, std::uint64_t seed) {
  switch (cfg.kind) {
    case EstimatorKind::Oracle: return std::make_unique<OracleEstimator>(cfg.oracle_sigma);
    case EstimatorKind::Synthetic: return std::make_unique<SyntheticEstimator>(cfg.noise, seed);
    case EstimatorKind::Remote: return std::make_unique<RemoteEstimator>(cfg.remote);
  }
  throw std::invalid_argument("unknown estimator kind");
}

// --- Formation ----------------------------------------------------------------

namespace {

/// One-dimensional constant-velocity Kalman filter.
class CvFilter {
 public:
  void init(double z, double r) {
    x_ = z;
    v_ = 0.0;
    pxx_ = r;
    pxv_ = 0.0;
    pvv_ = 1.0;
  }
  void predict(double dt, double q) {
    if (dt <= 0.0) return;
    x_ += v_ * dt;
    const double pxx = pxx_ + 2.0 * dt * pxv_ + dt * dt * pvv_ + q * dt * dt * dt / 3.0;
    const double pxv = pxv_ + dt * pvv_ + q * dt * dt / 2.0;
    pvv_ += q * dt;
    pxx_ = pxx;
    pxv_ = pxv;
  }
  void update(double z, double r) {
    const double s = pxx_ + r;
    const double kx = pxx_ / s;
    const double kv = pxv_ / s;
    const double innov = z - x_;
    x_ += kx * innov;
    v_ += kv * innov;
    const double pxx = (1.0 - kx) * pxx_;
    const double pxv = (1.0 - kx) * pxv_;
    const double pvv = pvv_ - kv * pxv_;
    pxx_ = pxx;
    pxv_ = pxv;
    pvv_ = pvv;
  }
  [[nodiscard]] double x() const { return x_; }
  [[nodiscard]] double v() const { return v_; }

 private:
  double x_ = 0.0;
  double v_ = 0.0;
  double pxx_ = 1.0;
  double pxv_ = 0.0;
  double pvv_ = 1.0;
};

/// Planar constant-velocity tracker; yaw is unwrapped across updates.
class LeaderTracker {
 public:
  explicit LeaderTracker(TrackerConfig cfg) : cfg_(cfg) {}

  void update(const Pose &meas, double sigma_pos, double sigma_yaw, double t) {
    const double rp = std::max(sigma_pos * sigma_pos, 1e-12);
    const double ry = std::max(sigma_yaw * sigma_yaw, 1e-12);
    const double yaw = meas.rotation.yaw();
    if (!init_) {
      x_.init(meas.position.x, rp);
      y_.init(meas.position.y, rp);
      yaw_.init(yaw, ry);
      init_ = true;
    } else {
      const double dt = t - t_;
      x_.predict(dt, cfg_.accel_noise * cfg_.accel_noise);
      y_.predict(dt, cfg_.accel_noise * cfg_.accel_noise);
      yaw_.predict(dt, cfg_.yaw_accel_noise * cfg_.yaw_accel_noise);
      x_.update(meas.position.x, rp);
      y_.update(meas.position.y, rp);
      yaw_.update(yaw_.x() + wrap_angle(yaw - yaw_.x()), ry);
    }
    t_ = t;
  }

  [[nodiscard]] bool ready() const { return init_; }

  /// Pose and world-frame twist extrapolated to time t.
  [[nodiscard]] std::pair<Pose, Twist> at(double t) const {
    const double dt = t - t_;
    return {Pose::planar(x_.x() + x_.v() * dt, y_.x() + y_.v() * dt, yaw_.x() + yaw_.v() * dt),
            Twist{x_.v(), y_.v(), yaw_.v()}};
  }

 private:
  TrackerConfig cfg_;
  bool init_ = false;
  double t_ = 0.0;
  CvFilter x_, y_, yaw_;
};

double angle_from_chordal_sigma(double sigma_q) {
  return 2.0 * std::asin(std::min(1.0, sigma_q / (2.0 * std::numbers::sqrt2)));
}

Pose integrate(const Pose &pose, const Command &cmd, double dt) {
  const double yaw = pose.rotation.yaw();
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return Pose::planar(pose.position.x + (c * cmd.v.x - s * cmd.v.y) * dt,
                      pose.position.y + (s * cmd.v.x + c * cmd.v.y) * dt, yaw + cmd.w * dt);
}

struct Follower {
  NodeId id = 0;
  Pose offset;
  Pose ref;  // leader as seen from the follower in formation
  Pose pose;
  PdState pd;
  LeaderTracker tracker;
  std::optional<PoseEstimate> latest;
  std::optional<Pose> latest_meas;  // odometry frame
  double latest_time = -1.0;
  std::uint32_t latest_tick = 0;
  bool has_tick = false;
  std::vector<std::pair<std::uint32_t, std::vector<std::uint8_t>>> inbox;
};

}  // namespace

RunLog run_formation(const FormationConfig &cfg, std::uint64_t seed) {
  if (!(cfg.duration > 0.0)) throw std::invalid_argument("run_formation: duration must be > 0");
  if (cfg.offsets.empty()) throw std::invalid_argument("run_formation: no followers");
  if (!(cfg.stale_timeout > 0.0)) throw std::invalid_argument("stale_timeout must be > 0");
  cfg.trajectory.validate();
  cfg.gains.validate();
  cfg.gate.validate();

  net::NetWorld net = cfg.net;
  net.nodes.clear();
  for (std::size_t i = 0; i <= cfg.offsets.size(); ++i) net.nodes.push_back(static_cast<NodeId>(i));
  if (cfg.lossless) net.loss_override = 0.0;
  net.record_events = cfg.record_net_events;
  const double dt = net.scheduler.superframe_period;
  constexpr std::uint32_t kHistory = 64;

  auto estimator = make_estimator(cfg.estimator, seed);
  std::vector<Follower> followers;
  for (std::size_t i = 0; i < cfg.offsets.size(); ++i) {
    Follower f{static_cast<NodeId>(i + 1), cfg.offsets[i], cfg.offsets[i].inverse(), {}, {},
               LeaderTracker(cfg.tracker), {}, {}, -1.0, 0, false, {}};
    f.pose = compose(leader_pose(cfg.trajectory, 0.0), f.offset);
    followers.push_back(std::move(f));
  }

  // (node, tick) -> observation; embeddings are attached when transmitted.
  std::map<std::pair<NodeId, std::uint32_t>, Observation> history;
  RunLog log;

  net::NetCallbacks cb;
  cb.payload = [&](NodeId node, std::uint64_t k) {
    auto emb = make_embedding(seed, node, static_cast<std::uint32_t>(k), net.payload_bytes);
    auto it = history.find({node, static_cast<std::uint32_t>(k)});
    if (it != history.end()) it->second.embedding = emb;
    return emb;
  };
  cb.on_deliver = [&](NodeId rx, const net::Frame &frame, double) {
    if (frame.type != net::MsgType::Embedding || frame.node_id != 0 || rx == 0) return;
    followers[rx - 1].inbox.emplace_back(frame.superframe_idx, frame.payload);
  };
  cb.on_tick = [&](std::uint64_t k64, double t) {
    const auto k = static_cast<std::uint32_t>(k64);
    const Pose leader = leader_pose(cfg.trajectory, t);
    history[{0, k}] = Observation{0, k, leader, cfg.fov_deg, {}};
    for (const auto &f : followers) history[{f.id, k}] = Observation{f.id, k, f.pose, cfg.fov_deg, {}};

    for (auto &f : followers) {
      TickRecord rec;
      rec.t = t;
      rec.tick = k;
      rec.node = f.id;
      rec.pose_truth = f.pose;
      rec.follower = true;

      for (auto &[j, payload] : f.inbox) {
        if (f.has_tick && j <= f.latest_tick) continue;
        const auto own = history.find({f.id, j});
        const auto lead = history.find({0, j});
        if (own == history.end() || lead == history.end()) continue;
        Observation leader_obs = lead->second;
        leader_obs.embedding = std::move(payload);
        const PoseEstimate est = estimator->estimate(own->second, leader_obs);
        const Pose truth = relative_pose(own->second.pose_truth, leader_obs.pose_truth);
        rec.estimates.push_back({est, truth, j});
        const double tj = static_cast<double>(j) * dt;
        const Pose meas = compose(own->second.pose_truth, est.pose());
        const double sp = std::sqrt((est.sigma_p.x * est.sigma_p.x + est.sigma_p.y * est.sigma_p.y) / 2.0);
        f.tracker.update(meas, sp, angle_from_chordal_sigma(est.sigma_q), tj);
        f.latest = est;
        f.latest_meas = meas;
        f.latest_time = tj;
        f.latest_tick = j;
        f.has_tick = true;
      }
      f.inbox.clear();

      Command cmd;
      if (!f.latest || t - f.latest_time > cfg.stale_timeout) {
        cmd = gated_command();
        f.pd.reset();
      } else {
        Pose leader_now = *f.latest_meas;
        FeedForward ff;
        if (cfg.tracker.enabled && f.tracker.ready()) {
          const auto [pose, twist] = f.tracker.at(t);
          leader_now = pose;
          if (cfg.feed_forward) {
            const Vec3 arm = leader_now.rotation.rotate(f.offset.position);
            const Vec3 v_world{twist.vx - twist.w * arm.y, twist.vy + twist.w * arm.x, 0.0};
            ff.v = f.pose.rotation.inverse().rotate(v_world);
            ff.w = twist.w;
          }
        }
        const Pose rel = relative_pose(f.pose, leader_now);
        PoseEstimate e = *f.latest;
        e.p_hat = rel.position;
        e.q_hat = rel.rotation;
        cmd = formation_cmd(e, f.ref, f.pd, dt, cfg.gains, cfg.gate, ff);
      }
      rec.cmd = cmd;
      rec.gated = cmd.gated_pos;
      const Pose desired = compose(leader, f.offset);
      rec.track_err_m = pos_dist(f.pose.position, desired.position);
      rec.track_rot_deg = std::abs(rad2deg(wrap_angle(f.pose.rotation.yaw() - desired.rotation.yaw())));
      log.records.push_back(std::move(rec));
      f.pose = integrate(f.pose, cmd, dt);
    }

    TickRecord lrec;
    lrec.t = t;
    lrec.tick = k;
    lrec.node = 0;
    lrec.pose_truth = leader;
    const Twist tw = leader_twist(cfg.trajectory, t);
    lrec.cmd.v = leader.rotation.inverse().rotate({tw.vx, tw.vy, 0.0});
    lrec.cmd.w = tw.w;
    log.records.push_back(std::move(lrec));

    if (k >= kHistory) {
      const std::uint32_t drop = k - kHistory;
      for (NodeId n = 0; n <= followers.size(); ++n) history.erase({n, drop});
    }
  };

  net::NetSim sim(net, seed, cb);
  sim.run_until(cfg.duration);
  log.summary = summarize(log.records, cfg.transient);
  log.net_events = sim.events();
  log.net_stats = sim.stats();
  return log;
}

std::vector<FollowerSummary> summarize(const std::vector<TickRecord> &records, double transient) {
  std::map<NodeId, std::vector<const TickRecord *>> by_node;
  for (const auto &r : records) {
    if (r.follower && r.t >= transient) by_node[r.node].push_back(&r);
  }
  std::vector<FollowerSummary> out;
  for (const auto &[id, recs] : by_node) {
    FollowerSummary s;
    s.node = id;
    s.samples = recs.size();
    std::vector<double> err;
    std::vector<double> rot;
    double speed = 0.0;
    for (const TickRecord *r : recs) {
      err.push_back(r->track_err_m);
      rot.push_back(r->track_rot_deg);
      speed += r->cmd.v.norm();
    }
    double se = 0.0;
    double sr = 0.0;
    for (double e : err) se += e;
    for (double e : rot) sr += e;
    const auto n = static_cast<double>(recs.size());
    s.mean_abs_err_m = se / n;
    s.mean_abs_rot_deg = sr / n;
    s.mean_speed = speed / n;
    s.median_err_m = lower_median(err);
    s.median_rot_deg = lower_median(rot);
    out.push_back(s);
  }
  return out;
}

// --- Homing -------------------------------------------------------------------

double cross_track(const std::vector<Pose> &path, const Vec3 &p) {
  if (path.empty()) throw std::invalid_argument("cross_track: empty path");
  double best = std::hypot(p.x - path.front().position.x, p.y - path.front().position.y);
  for (std::size_t i = 1; i < path.size(); ++i) {
    const Vec3 &a = path[i - 1].position;
    const Vec3 &b = path[i].position;
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double u = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    best = std::min(best, std::hypot(p.x - (a.x + u * dx), p.y - (a.y + u * dy)));
  }
  return best;
}

namespace {

// Inverse-variance average of repeated estimates of one keyframe, carried in
// the odometry frame so the robot's own motion between ticks cancels.
class KeyframeAverage {
 public:
  void reset() { *this = KeyframeAverage{}; }

  PoseEstimate add(const Pose &odom, const PoseEstimate &est) {
    const Pose m = compose(odom, est.pose());
    const double w = 1.0 / std::max(est.sigma_p.x * est.sigma_p.x, 1e-12);
    sw_ += w;
    sx_ += w * m.position.x;
    sy_ += w * m.position.y;
    const double yaw = m.rotation.yaw();
    const double wq = 1.0 / std::max(est.sigma_q * est.sigma_q, 1e-12);
    swq_ += wq;
    sc_ += wq * std::cos(yaw);
    ss_ += wq * std::sin(yaw);
    const Pose avg = Pose::planar(sx_ / sw_, sy_ / sw_, std::atan2(ss_, sc_));
    const Pose rel = relative_pose(odom, avg);
    PoseEstimate out = est;
    const double sig = 1.0 / std::sqrt(sw_);
    out.p_hat = rel.position;
    out.q_hat = rel.rotation;
    out.sigma_p = {sig, sig, sig};
    out.sigma_q = 1.0 / std::sqrt(swq_);
    return out;
  }

 private:
  double sw_ = 0.0, sx_ = 0.0, sy_ = 0.0, sc_ = 0.0, ss_ = 0.0, swq_ = 0.0;
};

}  // namespace

HomingResult run_homing(const HomingConfig &cfg, std::uint64_t seed) {
  cfg.trajectory.validate();
  cfg.gains.validate();
  cfg.gate.validate();
  if (!(cfg.dt > 0.0) || !(cfg.eps_reach > 0.0) || !(cfg.d_kf > 0.0) || !(cfg.sigma_kf > 0.0)) {
    throw std::invalid_argument("run_homing: dt, eps_reach, d_kf and sigma_kf must be > 0");
  }
  double t_rec = cfg.record_duration;
  if (!(t_rec > 0.0)) {
    const TrajectorySpec &s = cfg.trajectory;
    t_rec = s.kind == TrajectoryKind::RectDynamic && s.speed > 0.0 ? s.rect_perimeter() / s.speed
                                                                   : s.period;
  }
  auto estimator = make_estimator(cfg.estimator, seed);
  constexpr std::size_t kEmbedding = 256;
  HomingResult res;

  // Record.
  std::vector<Pose> taught;
  KeyframeAverage rec_avg;
  const auto rec_ticks = static_cast<std::uint32_t>(std::floor(t_rec / cfg.dt));
  for (std::uint32_t k = 0; k <= rec_ticks; ++k) {
    const Pose pose = leader_pose(cfg.trajectory, k * cfg.dt);
    taught.push_back(pose);
    Observation obs{0, k, pose, cfg.fov_deg, make_embedding(seed, 0, k, kEmbedding)};
    if (res.keyframes.empty()) {
      res.keyframes.push_back({obs.embedding, 0.0, k, pose});
      continue;
    }
    const Keyframe &last = res.keyframes.back();
    const Observation kf_obs{0, last.tick, last.pose_truth, cfg.fov_deg, last.embedding};
    PoseEstimate est = estimator->estimate(obs, kf_obs);
    if (cfg.average) est = rec_avg.add(pose, est);
    if (kf_record_step(est, cfg.d_kf, cfg.sigma_kf)) {
      res.keyframes.push_back({obs.embedding, est.p_hat.norm(), k, pose});
      rec_avg.reset();
    }
  }

  // Replay from the first keyframe.
  const std::size_t n = res.keyframes.size();
  Pose pose = res.keyframes.front().pose_truth;
  PdState pd;
  std::size_t idx = 0;
  KeyframeAverage avg;
  const auto max_ticks = static_cast<std::uint32_t>(std::ceil(cfg.timeout_factor * t_rec / cfg.dt));
  const std::uint32_t tick0 = rec_ticks + 1000;
  res.replay_path.push_back(pose);
  for (std::uint32_t i = 0; i < max_ticks; ++i) {
    const double t = i * cfg.dt;
    const std::uint32_t tick = tick0 + i;
    const Keyframe &kf = res.keyframes[idx];
    const Observation cur{0, tick, pose, cfg.fov_deg, make_embedding(seed, 0, tick, kEmbedding)};
    const Observation kf_obs{0, kf.tick, kf.pose_truth, cfg.fov_deg, kf.embedding};
    PoseEstimate est = estimator->estimate(cur, kf_obs);
    if (cfg.average) est = avg.add(pose, est);
    const FollowStep step = kf_follow_step(est, cfg.eps_reach, idx, n, pd, cfg.dt, cfg.gains, cfg.gate);
    if (step.reached) {
      res.arrivals.push_back({idx, true, pos_dist(pose.position, kf.pose_truth.position), t});
      avg.reset();
      if (idx + 1 == n) {
        res.completed = true;
        res.replay_time = t;
        break;
      }
      idx = step.next_index;
    }
    pose = integrate(pose, step.cmd, cfg.dt);
    res.replay_path.push_back(pose);
    res.replay_time = t + cfg.dt;
  }
  for (std::size_t i = res.arrivals.size(); i < n; ++i) {
    res.arrivals.push_back({i, false, std::numeric_limits<double>::infinity(), res.replay_time});
  }

  std::vector<double> ct;
  for (const Pose &p : res.replay_path) ct.push_back(cross_track(taught, p.position));
  res.median_cross_track_m = lower_median(ct);
  res.max_cross_track_m = *std::max_element(ct.begin(), ct.end());
  return res;
}

}  // namespace covis
