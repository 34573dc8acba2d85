// SPDX-License-Identifier: Apache-2.0
#include "covis/config.hpp"

#include <fstream>

namespace covis::config {

const Json &defaults() {
  static const Json d = {
      // general
      {"seed", 7},
      {"duration_s", 120.0},
      {"fov_deg", 120.0},
      // network
      {"n_nodes", 3},
      {"superframe_hz", 15.0},
      {"n_slots", 4},
      {"payload_bytes", 6144},
      {"max_divisor", 8},
      {"high_watermark", 0.10},
      {"low_watermark", 0.05},
      {"loss_window_s", 2.0},
      {"loss_min_samples", 30},
      {"adaptive", true},
      {"backoff_signal", "reported"},
      {"backoff_aggregate", "max"},
      {"heartbeats", true},
      {"bitrate_bps", 6e6},
      {"base_loss", 0.03},
      {"loss_slope", 0.01},
      {"propagation_s", 0.0},
      {"lossless", false},
      {"loss_override", nullptr},
      {"jam_every", 0},
      {"jam_phase", 1},
      {"jam_slots", Json::array()},
      {"record_events", true},
      {"capture", false},
      // estimator
      {"estimator", "synthetic"},
      {"median_pos_visible_m", 0.33},
      {"median_pos_invisible_m", 0.97},
      {"median_rot_visible_deg", 5.8},
      {"median_rot_invisible_deg", 7.9},
      {"miscalibration", 1.0},
      {"scale_spread", 0.5},
      {"oracle_sigma", 1e-3},
      {"remote_host", "127.0.0.1"},
      {"remote_port", 0},
      {"remote_timeout_ms", 1000},
      // control
      {"kp_pos", 1.5},
      {"kd_pos", 0.3},
      {"kp_yaw", 1.5},
      {"kd_yaw", 0.3},
      {"v_max", 0.8},
      {"w_max", 1.5},
      {"tau_p", 1.0},
      {"tau_q", 0.5},
      {"gain_attenuation", false},
      {"feed_forward", true},
      {"tracker", true},
      {"tracker_accel_noise", 0.5},
      {"tracker_yaw_accel_noise", 0.5},
      {"stale_timeout_s", 0.5},
      {"transient_s", 10.0},
      {"follower_distance_m", 1.0},
      // trajectory
      {"trajectory", "fig8_dynamic"},
      {"amp_x_m", 2.0},
      {"amp_y_m", 2.0},
      {"period_s", 40.0},
      {"rect_width_m", 4.0},
      {"rect_height_m", 3.0},
      {"corner_radius_m", 1.0},
      {"speed_mps", 0.4},
      {"heading", "face_motion"},
      // metrics
      {"youden_label", "large_error"},
      {"error_cutoff_m", 1.0},
      {"uncertainty_scalar", "norm"},
      {"auc_thresholds_deg", Json::array({20.0, 45.0, 90.0})},
      {"bin_threshold", 0.5},
      {"max_malformed_fraction", 0.01},
      // dataset
      {"world_extent_m", 16.0},
      {"n_rooms", 6},
      {"obstacles", 4},
      {"n_groups", 100},
      {"n_max", 5},
      {"d_max_m", 2.0},
      {"obs_range_m", 3.0},
      {"with_estimates", true},
      // homing
      {"d_kf_m", 1.0},
      {"sigma_kf_m", 1.0},
      {"eps_reach_m", 0.2},
      {"homing_timeout_factor", 4.0},
      {"homing_average", true},
  };
  return d;
}

namespace {

bool same_kind(const Json &def, const Json &v) {
  if (def.is_null()) return v.is_null() || v.is_number();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    for (const auto &e : v) {
      if (!e.is_number()) return false;
    }
    return true;
  }
  return false;
}

template <typename T>
T get(const Json &cfg, const char *key) {
  return cfg.at(key).get<T>();
}

template <typename F>
auto checked(F &&build) {
  try {
    return build();
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

Json merge(const Json &user) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  Json out = defaults();
  for (const auto &[key, value] : user.items()) {
    if (!out.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    if (!same_kind(defaults().at(key), value)) {
      throw ConfigError("config key '" + key + "' has the wrong type");
    }
    out[key] = value;
  }
  return out;
}

Json load_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Json user;
  try {
    user = Json::parse(in);
  } catch (const nlohmann::json::parse_error &e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return merge(user);
}

net::NetWorld net_world(const Json &cfg) {
  return checked([&] {
    net::NetWorld w;
    const double hz = get<double>(cfg, "superframe_hz");
    if (!(hz > 0.0)) throw std::invalid_argument("superframe_hz must be > 0");
    w.scheduler.superframe_period = 1.0 / hz;
    w.scheduler.n_slots = get<int>(cfg, "n_slots");
    w.scheduler.max_divisor = get<int>(cfg, "max_divisor");
    w.scheduler.high_watermark = get<double>(cfg, "high_watermark");
    w.scheduler.low_watermark = get<double>(cfg, "low_watermark");
    w.scheduler.window = get<double>(cfg, "loss_window_s");
    const int min_samples = get<int>(cfg, "loss_min_samples");
    if (min_samples < 1) throw std::invalid_argument("loss_min_samples must be >= 1");
    w.scheduler.min_samples = static_cast<std::size_t>(min_samples);
    w.scheduler.adaptive = get<bool>(cfg, "adaptive");
    const auto signal = get<std::string>(cfg, "backoff_signal");
    if (signal == "reported") {
      w.scheduler.signal = net::BackoffSignal::Reported;
    } else if (signal == "observed") {
      w.scheduler.signal = net::BackoffSignal::Observed;
    } else {
      throw std::invalid_argument("backoff_signal must be 'reported' or 'observed'");
    }
    const auto agg = get<std::string>(cfg, "backoff_aggregate");
    if (agg == "max") {
      w.scheduler.aggregate = net::LossAggregate::Max;
    } else if (agg == "mean") {
      w.scheduler.aggregate = net::LossAggregate::Mean;
    } else {
      throw std::invalid_argument("backoff_aggregate must be 'max' or 'mean'");
    }
    w.heartbeats = get<bool>(cfg, "heartbeats");
    const int payload = get<int>(cfg, "payload_bytes");
    if (payload < 0) throw std::invalid_argument("payload_bytes must be >= 0");
    w.payload_bytes = static_cast<std::size_t>(payload);
    w.medium.bitrate = get<double>(cfg, "bitrate_bps");
    w.medium.base_loss = get<double>(cfg, "base_loss");
    w.medium.loss_slope = get<double>(cfg, "loss_slope");
    w.medium.propagation = get<double>(cfg, "propagation_s");
    if (!cfg.at("loss_override").is_null()) w.loss_override = get<double>(cfg, "loss_override");
    if (get<bool>(cfg, "lossless")) w.loss_override = 0.0;
    w.record_events = get<bool>(cfg, "record_events");
    const int n = get<int>(cfg, "n_nodes");
    if (n < 0 || n >= 0xFF00) throw std::invalid_argument("n_nodes out of range");
    for (int i = 0; i < n; ++i) w.nodes.push_back(static_cast<NodeId>(i));
    const int every = get<int>(cfg, "jam_every");
    if (every < 0) throw std::invalid_argument("jam_every must be >= 0");
    if (every > 0) {
      net::JammerSpec j;
      j.every = static_cast<std::uint32_t>(every);
      const int phase = get<int>(cfg, "jam_phase");
      if (phase < 0) throw std::invalid_argument("jam_phase must be >= 0");
      j.phase = static_cast<std::uint32_t>(phase);
      for (const auto &s : cfg.at("jam_slots")) j.slots.push_back(s.get<int>());
      w.jammers.push_back(j);
    }
    w.validate();
    return w;
  });
}

EstimatorConfig estimator(const Json &cfg) {
  return checked([&] {
    EstimatorConfig e;
    const auto kind = get<std::string>(cfg, "estimator");
    if (kind == "synthetic") {
      e.kind = EstimatorKind::Synthetic;
    } else if (kind == "oracle") {
      e.kind = EstimatorKind::Oracle;
    } else if (kind == "remote") {
      e.kind = EstimatorKind::Remote;
    } else {
      throw std::invalid_argument("estimator must be 'synthetic', 'oracle' or 'remote'");
    }
    e.noise.median_pos_visible = get<double>(cfg, "median_pos_visible_m");
    e.noise.median_pos_invisible = get<double>(cfg, "median_pos_invisible_m");
    e.noise.median_rot_visible = get<double>(cfg, "median_rot_visible_deg");
    e.noise.median_rot_invisible = get<double>(cfg, "median_rot_invisible_deg");
    e.noise.miscalibration = get<double>(cfg, "miscalibration");
    e.noise.scale_spread = get<double>(cfg, "scale_spread");
    e.noise.validate();
    e.oracle_sigma = get<double>(cfg, "oracle_sigma");
    if (!(e.oracle_sigma > 0.0)) throw std::invalid_argument("oracle_sigma must be > 0");
    e.remote.host = get<std::string>(cfg, "remote_host");
    const int port = get<int>(cfg, "remote_port");
    if (port < 0 || port > 65535) throw std::invalid_argument("remote_port out of range");
    e.remote.port = static_cast<std::uint16_t>(port);
    e.remote.timeout = std::chrono::milliseconds(get<int>(cfg, "remote_timeout_ms"));
    return e;
  });
}

TrajectorySpec trajectory(const Json &cfg) {
  return checked([&] {
    TrajectorySpec t;
    const auto kind = get<std::string>(cfg, "trajectory");
    if (kind == "fig8_dynamic") {
      t.kind = TrajectoryKind::Fig8Dynamic;
    } else if (kind == "fig8_static") {
      t.kind = TrajectoryKind::Fig8Static;
    } else if (kind == "rect_dynamic") {
      t.kind = TrajectoryKind::RectDynamic;
    } else {
      throw std::invalid_argument(
          "trajectory must be 'fig8_dynamic', 'fig8_static' or 'rect_dynamic'");
    }
    t.amp_x = get<double>(cfg, "amp_x_m");
    t.amp_y = get<double>(cfg, "amp_y_m");
    t.period = get<double>(cfg, "period_s");
    t.width = get<double>(cfg, "rect_width_m");
    t.height = get<double>(cfg, "rect_height_m");
    t.corner_radius = get<double>(cfg, "corner_radius_m");
    t.speed = get<double>(cfg, "speed_mps");
    const auto heading = get<std::string>(cfg, "heading");
    if (heading == "face_motion") {
      t.heading = HeadingMode::FaceMotion;
    } else if (heading == "fixed") {
      t.heading = HeadingMode::Fixed;
    } else {
      throw std::invalid_argument("heading must be 'face_motion' or 'fixed'");
    }
    t.validate();
    return t;
  });
}

namespace {

PdGains gains(const Json &cfg) {
  PdGains g;
  g.kp_pos = get<double>(cfg, "kp_pos");
  g.kd_pos = get<double>(cfg, "kd_pos");
  g.kp_yaw = get<double>(cfg, "kp_yaw");
  g.kd_yaw = get<double>(cfg, "kd_yaw");
  g.v_max = get<double>(cfg, "v_max");
  g.w_max = get<double>(cfg, "w_max");
  g.validate();
  return g;
}

Gate gate(const Json &cfg) {
  Gate g;
  g.tau_p = get<double>(cfg, "tau_p");
  g.tau_q = get<double>(cfg, "tau_q");
  g.attenuate = get<bool>(cfg, "gain_attenuation");
  g.validate();
  return g;
}

}  // namespace

FormationConfig formation(const Json &cfg) {
  FormationConfig f;
  f.trajectory = trajectory(cfg);
  f.estimator = estimator(cfg);
  f.net = net_world(cfg);
  return checked([&] {
    const double d = get<double>(cfg, "follower_distance_m");
    if (!(d > 0.0)) throw std::invalid_argument("follower_distance_m must be > 0");
    f.offsets = {Pose::planar(0.0, d, 0.0), Pose::planar(0.0, -d, 0.0)};
    f.lossless = get<bool>(cfg, "lossless");
    f.gains = gains(cfg);
    f.gate = gate(cfg);
    f.tracker.enabled = get<bool>(cfg, "tracker");
    f.tracker.accel_noise = get<double>(cfg, "tracker_accel_noise");
    f.tracker.yaw_accel_noise = get<double>(cfg, "tracker_yaw_accel_noise");
    f.feed_forward = get<bool>(cfg, "feed_forward");
    f.stale_timeout = get<double>(cfg, "stale_timeout_s");
    f.duration = get<double>(cfg, "duration_s");
    f.transient = get<double>(cfg, "transient_s");
    f.fov_deg = get<double>(cfg, "fov_deg");
    f.record_net_events = get<bool>(cfg, "record_events");
    if (!(f.duration > 0.0)) throw std::invalid_argument("duration_s must be > 0");
    if (!(f.stale_timeout > 0.0)) throw std::invalid_argument("stale_timeout_s must be > 0");
    return f;
  });
}

HomingConfig homing(const Json &cfg) {
  HomingConfig h;
  h.trajectory = trajectory(cfg);
  h.estimator = estimator(cfg);
  return checked([&] {
    h.gains = gains(cfg);
    h.gate = gate(cfg);
    h.d_kf = get<double>(cfg, "d_kf_m");
    h.sigma_kf = get<double>(cfg, "sigma_kf_m");
    h.eps_reach = get<double>(cfg, "eps_reach_m");
    h.timeout_factor = get<double>(cfg, "homing_timeout_factor");
    h.average = get<bool>(cfg, "homing_average");
    h.fov_deg = get<double>(cfg, "fov_deg");
    const double hz = get<double>(cfg, "superframe_hz");
    if (!(hz > 0.0)) throw std::invalid_argument("superframe_hz must be > 0");
    h.dt = 1.0 / hz;
    if (!(h.d_kf > 0.0) || !(h.sigma_kf > 0.0) || !(h.eps_reach > 0.0) ||
        !(h.timeout_factor > 0.0)) {
      throw std::invalid_argument("homing thresholds must be > 0");
    }
    return h;
  });
}

MetricsConfig metrics(const Json &cfg) {
  return checked([&] {
    MetricsConfig m;
    const auto label = get<std::string>(cfg, "youden_label");
    if (label == "large_error") {
      m.label = YoudenLabel::LargeError;
    } else if (label == "invisible") {
      m.label = YoudenLabel::Invisible;
    } else {
      throw std::invalid_argument("youden_label must be 'large_error' or 'invisible'");
    }
    m.error_cutoff_m = get<double>(cfg, "error_cutoff_m");
    const auto scalar = get<std::string>(cfg, "uncertainty_scalar");
    if (scalar == "norm") {
      m.scalar = UncertaintyScalar::Norm;
    } else if (scalar == "max_axis") {
      m.scalar = UncertaintyScalar::MaxAxis;
    } else {
      throw std::invalid_argument("uncertainty_scalar must be 'norm' or 'max_axis'");
    }
    m.auc_thresholds_deg = cfg.at("auc_thresholds_deg").get<std::vector<double>>();
    for (double t : m.auc_thresholds_deg) {
      if (!(t > 0.0)) throw std::invalid_argument("auc thresholds must be > 0");
    }
    m.bin_threshold = get<double>(cfg, "bin_threshold");
    return m;
  });
}

WorldOptions world_options(const Json &cfg) {
  return checked([&] {
    WorldOptions w;
    w.obstacles = get<int>(cfg, "obstacles");
    w.fov_deg = get<double>(cfg, "fov_deg");
    if (w.obstacles < 0) throw std::invalid_argument("obstacles must be >= 0");
    return w;
  });
}

SampleOptions sample_options(const Json &cfg) {
  return checked([&] {
    SampleOptions s;
    s.observation.fov_deg = get<double>(cfg, "fov_deg");
    s.observation.range = get<double>(cfg, "obs_range_m");
    if (!(s.observation.range > 0.0)) throw std::invalid_argument("obs_range_m must be > 0");
    return s;
  });
}

}  // namespace covis::config
