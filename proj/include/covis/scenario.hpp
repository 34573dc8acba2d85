// SPDX-License-Identifier: Apache-2.0
//
// Synthetic floor plans, leader trajectories, the closed-loop formation and
// homing experiments, and dataset sampling.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "covis/bev.hpp"
#include "covis/control.hpp"
#include "covis/estimator.hpp"
#include "covis/geometry.hpp"
#include "covis/netsim.hpp"

namespace covis {

// --- World ------------------------------------------------------------------

/// World-frame occupancy raster. Cell (ix, iy) spans
/// [origin_x + ix*res, origin_x + (ix+1)*res) and likewise in y.
class FloorMap {
 public:
  FloorMap() = default;
  FloorMap(int nx, int ny, double resolution, double origin_x, double origin_y);

  [[nodiscard]] int nx() const { return nx_; }
  [[nodiscard]] int ny() const { return ny_; }
  [[nodiscard]] double resolution() const { return res_; }
  [[nodiscard]] double origin_x() const { return ox_; }
  [[nodiscard]] double origin_y() const { return oy_; }

  [[nodiscard]] bool occupied_cell(int ix, int iy) const;  // outside = occupied
  void set_occupied(int ix, int iy, bool occ);
  /// Marks the world-frame rectangle [x0,x1) x [y0,y1).
  void fill_rect(double x0, double y0, double x1, double y1, bool occ);
  [[nodiscard]] bool occupied(double x, double y) const;
  /// True when every cell within `radius` of (x, y) is free.
  [[nodiscard]] bool clear(double x, double y, double radius) const;
  [[nodiscard]] std::size_t free_count() const;
  /// Free cells form one 4-connected component.
  [[nodiscard]] bool free_space_connected() const;

  friend bool operator==(const FloorMap &, const FloorMap &) = default;

 private:
  int nx_ = 0;
  int ny_ = 0;
  double res_ = 0.05;
  double ox_ = 0.0;
  double oy_ = 0.0;
  std::vector<std::uint8_t> occ_;
};

struct WorldNode {
  NodeId id = 0;
  Pose pose;
  double fov_deg = 120.0;
};

struct World {
  FloorMap map;
  double extent = 0.0;
  std::vector<WorldNode> nodes;
  std::uint64_t seed = 0;
};

struct WorldOptions {
  double resolution = 0.05;  // m
  double wall = 0.2;         // m
  double door = 1.0;         // m
  double min_room = 2.5;     // m, smallest room side
  int obstacles = 0;         // free-standing boxes
  int n_nodes = 0;           // placed uniformly on free space
  double clearance = 0.25;   // m, node distance to any wall
  double fov_deg = 120.0;
};

/// Axis-aligned rooms from recursive splits, each split wall pierced by a
/// doorway; the map spans [-extent/2, extent/2]^2. Throws
/// std::invalid_argument on infeasible parameters.
World gen_world(std::uint64_t seed, double extent, int n_rooms, const WorldOptions &opts = {});

/// Uniform free position with the given clearance; throws std::runtime_error
/// after max_tries rejections.
Vec3 sample_free(const FloorMap &map, std::mt19937_64 &rng, double clearance,
                 int max_tries = 100000);

// --- BEV rendering ------------------------------------------------------------

/// Ground-truth ego crop: 1 where the floor map is occupied, else 0.
BevGrid bev_crop(const FloorMap &map, const Pose &pose, int size = BevGrid::kDefaultSize,
                 double extent = BevGrid::kDefaultExtent);

struct ObservationModel {
  double range = 3.0;  // m
  double fov_deg = 120.0;
  float p_occ = 0.8F;
  float p_free = 0.35F;
};

/// What one robot sees: cells inside its view cone and range that a ray from
/// the robot reaches get p_occ or p_free; everything else stays 0.5.
BevGrid local_observation(const FloorMap &map, const Pose &pose, const ObservationModel &model,
                          int size = BevGrid::kDefaultSize,
                          double extent = BevGrid::kDefaultExtent);

// --- Dataset sampling -----------------------------------------------------------

struct GroupNode {
  NodeId id = 0;
  Pose pose;
  double fov_deg = 120.0;
  BevGrid bev;       // ground truth crop
  BevGrid bev_pred;  // local observation, the stand-in for a predicted map

  friend bool operator==(const GroupNode &, const GroupNode &) = default;
};

struct SampleGroup {
  std::vector<GroupNode> nodes;
  std::vector<PoseEstimate> estimates;  // optional; src/dst index nodes by id

  friend bool operator==(const SampleGroup &, const SampleGroup &) = default;
};

struct SampleOptions {
  double clearance = 0.25;
  bool render_bev = true;
  ObservationModel observation;
  int max_tries = 100000;
};

/// Anchor uniform on free space, the other n_max - 1 nodes uniform in the
/// d_max disc around it (rejected when not free), yaw uniform.
std::vector<SampleGroup> sample_groups(const World &world, int n_groups, int n_max, double d_max,
                                       std::uint64_t seed, const SampleOptions &opts = {});

/// Fills group.estimates with all ordered pairs from `est`.
void estimate_all_pairs(SampleGroup &group, Estimator &est, std::uint32_t tick = 0);

// --- Trajectories ---------------------------------------------------------------

enum class TrajectoryKind { Fig8Dynamic, Fig8Static, RectDynamic };
enum class HeadingMode { FaceMotion, Fixed };

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::Fig8Dynamic;
  double amp_x = 2.0;  // m, figure eight
  double amp_y = 2.0;  // m
  double period = 40.0;  // s, figure eight; rectangle lap when speed <= 0
  double width = 4.0;    // m, rectangle along x
  double height = 3.0;   // m
  double corner_radius = 1.0;
  double speed = 0.4;  // m/s, rectangle
  HeadingMode heading = HeadingMode::FaceMotion;

  void validate() const;
  /// Static variants hold the initial heading.
  [[nodiscard]] HeadingMode effective_heading() const {
    return kind == TrajectoryKind::Fig8Static ? HeadingMode::Fixed : heading;
  }
  [[nodiscard]] double rect_perimeter() const;
};

struct Twist {
  double vx = 0.0;  // world frame
  double vy = 0.0;
  double w = 0.0;
};

Pose leader_pose(const TrajectorySpec &spec, double t);
/// World-frame velocity by central difference of leader_pose.
Twist leader_twist(const TrajectorySpec &spec, double t);

// --- Formation experiment -----------------------------------------------------

enum class EstimatorKind { Oracle, Synthetic, Remote };

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::Synthetic;
  NoiseProfile noise;
  double oracle_sigma = 1e-3;
  Endpoint remote;
};

std::unique_ptr<Estimator> make_estimator(const EstimatorConfig &cfg, std::uint64_t seed);

/// Constant-velocity tracker of the leader in the follower's odometry
/// frame. Measurements are weighted by their reported sigmas.
struct TrackerConfig {
  bool enabled = true;
  double accel_noise = 0.5;  // m/s^2, white-acceleration spectral density
  double yaw_accel_noise = 0.5;  // rad/s^2
};

struct FormationConfig {
  TrajectorySpec trajectory;
  /// Follower placements in the leader frame.
  std::vector<Pose> offsets{Pose::planar(0.0, 1.0, 0.0), Pose::planar(0.0, -1.0, 0.0)};
  EstimatorConfig estimator;
  net::NetWorld net;  // nodes are filled in by run_formation
  bool lossless = false;
  PdGains gains;
  Gate gate;
  TrackerConfig tracker;
  bool feed_forward = true;
  double stale_timeout = 0.5;  // s
  double duration = 120.0;     // s
  double transient = 10.0;     // s excluded from summaries
  double fov_deg = 120.0;
  bool record_net_events = false;
};

struct LoggedEstimate {
  PoseEstimate est;
  Pose truth;  // relative pose at the embedding's tick
  std::uint32_t tick = 0;
};

struct TickRecord {
  double t = 0.0;
  std::uint32_t tick = 0;
  NodeId node = 0;
  Pose pose_truth;
  std::vector<LoggedEstimate> estimates;
  Command cmd;
  bool gated = false;
  bool follower = false;
  double track_err_m = 0.0;     // followers only
  double track_rot_deg = 0.0;   // followers only
};

struct FollowerSummary {
  NodeId node = 0;
  std::size_t samples = 0;
  double mean_abs_err_m = 0.0;
  double median_err_m = 0.0;
  double mean_abs_rot_deg = 0.0;
  double median_rot_deg = 0.0;
  double mean_speed = 0.0;  // m/s
};

struct RunLog {
  std::vector<TickRecord> records;
  std::vector<FollowerSummary> summary;
  std::vector<net::SimEvent> net_events;
  std::vector<net::NodeStats> net_stats;
};

/// Leader is node 0 and follower i is node i + 1. Deterministic per seed.
RunLog run_formation(const FormationConfig &cfg, std::uint64_t seed);

std::vector<FollowerSummary> summarize(const std::vector<TickRecord> &records, double transient);

// --- Homing ---------------------------------------------------------------------

struct HomingConfig {
  TrajectorySpec trajectory{TrajectoryKind::RectDynamic};
  double record_duration = 0.0;  // s; one lap or period when <= 0
  EstimatorConfig estimator;
  PdGains gains;
  Gate gate;
  double d_kf = 1.0;
  double sigma_kf = 1.0;
  double eps_reach = 0.2;
  double dt = 1.0 / 15.0;
  double timeout_factor = 4.0;  // replay budget relative to the recording
  double fov_deg = 120.0;
  /// Inverse-variance average of the estimates of the current keyframe,
  /// carried in odometry frame between ticks.
  bool average = true;
};

struct KeyframeArrival {
  std::size_t index = 0;
  bool reached = false;
  double arrival_err_m = 0.0;  // truth distance when declared reached
  double t = 0.0;
};

struct HomingResult {
  std::vector<Keyframe> keyframes;
  std::vector<KeyframeArrival> arrivals;
  std::vector<Pose> replay_path;
  bool completed = false;
  double median_cross_track_m = 0.0;
  double max_cross_track_m = 0.0;
  double replay_time = 0.0;
};

HomingResult run_homing(const HomingConfig &cfg, std::uint64_t seed);

/// Distance from p to the polyline through `path` (planar).
double cross_track(const std::vector<Pose> &path, const Vec3 &p);

}  // namespace covis
