// SPDX-License-Identifier: Apache-2.0
#include "covis/io.hpp"

#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "covis/bytes.hpp"

namespace covis::io {

namespace {

double num(const Json &j) {
  if (!j.is_number()) throw std::invalid_argument("expected a number");
  return j.get<double>();
}

const Json &field(const Json &j, const char *key) {
  if (!j.is_object() || !j.contains(key)) {
    throw std::invalid_argument(std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

std::string fmt(double v) { return Json(v).dump(); }

}  // namespace

Json to_json(const Vec3 &v) { return Json::array({v.x, v.y, v.z}); }

Json to_json(const UnitQuat &q) { return Json::array({q.w(), q.x(), q.y(), q.z()}); }

Json to_json(const Pose &p) { return Json{{"p", to_json(p.position)}, {"q", to_json(p.rotation)}}; }

Json to_json(const PoseEstimate &e) {
  return Json{{"src", e.src},
              {"dst", e.dst},
              {"p_hat", to_json(e.p_hat)},
              {"sigma_p", to_json(e.sigma_p)},
              {"q_hat", to_json(e.q_hat)},
              {"sigma_q", e.sigma_q}};
}

Vec3 vec3_from_json(const Json &j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected [x, y, z]");
  return {num(j[0]), num(j[1]), num(j[2])};
}

UnitQuat quat_from_json(const Json &j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("expected [w, x, y, z]");
  return UnitQuat(num(j[0]), num(j[1]), num(j[2]), num(j[3]));
}

Pose pose_from_json(const Json &j) {
  return {vec3_from_json(field(j, "p")), quat_from_json(field(j, "q"))};
}

PoseEstimate estimate_from_json(const Json &j) {
  PoseEstimate e;
  e.src = field(j, "src").get<NodeId>();
  e.dst = field(j, "dst").get<NodeId>();
  e.p_hat = vec3_from_json(field(j, "p_hat"));
  e.sigma_p = vec3_from_json(field(j, "sigma_p"));
  e.q_hat = quat_from_json(field(j, "q_hat"));
  e.sigma_q = num(field(j, "sigma_q"));
  validate(e);
  return e;
}

std::string bev_to_b64(const BevGrid &g) { return bytes::base64_encode(serialize(g)); }

BevGrid bev_from_b64(std::string_view text) { return deserialize_bev(bytes::base64_decode(text)); }

void write_header(std::ostream &os, std::string_view schema) {
  os << Json{{"schema", schema}}.dump() << '\n';
}

Json group_to_json(const SampleGroup &g) {
  Json nodes = Json::array();
  for (const auto &n : g.nodes) {
    Json jn{{"id", n.id}, {"pose", to_json(n.pose)}, {"fov_deg", n.fov_deg}};
    if (n.bev.size() > 0) jn["bev_b64"] = bev_to_b64(n.bev);
    if (n.bev_pred.size() > 0) jn["bev_pred_b64"] = bev_to_b64(n.bev_pred);
    nodes.push_back(std::move(jn));
  }
  Json out{{"nodes", std::move(nodes)}};
  if (!g.estimates.empty()) {
    Json est = Json::array();
    for (const auto &e : g.estimates) est.push_back(to_json(e));
    out["estimates"] = std::move(est);
  }
  return out;
}

void write_dataset(std::ostream &os, std::span<const SampleGroup> groups) {
  write_header(os, kDatasetSchema);
  for (const auto &g : groups) os << group_to_json(g).dump() << '\n';
}

Json tick_to_json(const TickRecord &r) {
  Json est = Json::array();
  for (const auto &e : r.estimates) {
    Json je = to_json(e.est);
    je["tick"] = e.tick;
    je["truth"] = to_json(e.truth);
    est.push_back(std::move(je));
  }
  Json j{{"t", r.t},
         {"tick", r.tick},
         {"node_id", r.node},
         {"pose_truth", to_json(r.pose_truth)},
         {"estimates", std::move(est)},
         {"cmd", Json{{"v", to_json(r.cmd.v)}, {"w", r.cmd.w}}},
         {"gated", r.gated}};
  if (r.follower) {
    j["track_err_m"] = r.track_err_m;
    j["track_rot_deg"] = r.track_rot_deg;
  }
  return j;
}

void write_runlog(std::ostream &os, const RunLog &log) {
  write_header(os, kRunLogSchema);
  for (const auto &r : log.records) os << tick_to_json(r).dump() << '\n';
}

void write_formation_summary(std::ostream &os, std::span<const FollowerSummary> rows) {
  os << "# schema=" << kFormationSummarySchema << '\n';
  os << "node_id,samples,mean_abs_err_m,median_err_m,mean_abs_rot_deg,median_rot_deg,mean_vel_mps\n";
  for (const auto &s : rows) {
    os << s.node << ',' << s.samples << ',' << fmt(s.mean_abs_err_m) << ','
       << fmt(s.median_err_m) << ',' << fmt(s.mean_abs_rot_deg) << ',' << fmt(s.median_rot_deg)
       << ',' << fmt(s.mean_speed) << '\n';
  }
}

void write_homing_csv(std::ostream &os, const HomingResult &res) {
  os << "# schema=" << kHomingSchema << '\n';
  os << "keyframe,reached,arrival_err_m,t\n";
  for (const auto &a : res.arrivals) {
    os << a.index << ',' << (a.reached ? 1 : 0) << ','
       << (a.reached ? fmt(a.arrival_err_m) : std::string("nan")) << ',' << fmt(a.t) << '\n';
  }
}

MetricsInput read_metrics_input(std::istream &is, double fov_deg) {
  MetricsInput in;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    bool counted = false;
    try {
      const Json j = Json::parse(line);
      if (j.is_object() && j.contains("schema") && !j.contains("nodes") &&
          !j.contains("node_id")) {
        continue;
      }
      ++in.lines;
      counted = true;
      if (j.contains("nodes")) {
        struct Node {
          Pose pose;
          double fov;
        };
        std::map<NodeId, Node> nodes;
        std::vector<std::pair<BevGrid, BevGrid>> bev;
        for (const auto &jn : field(j, "nodes")) {
          const auto id = field(jn, "id").get<NodeId>();
          const double fov = jn.contains("fov_deg") ? num(jn.at("fov_deg")) : fov_deg;
          nodes[id] = {pose_from_json(field(jn, "pose")), fov};
          if (jn.contains("bev_b64") && jn.contains("bev_pred_b64")) {
            bev.emplace_back(bev_from_b64(jn.at("bev_b64").get<std::string>()),
                             bev_from_b64(jn.at("bev_pred_b64").get<std::string>()));
          }
        }
        std::vector<EdgeRecord> edges;
        if (j.contains("estimates")) {
          for (const auto &je : j.at("estimates")) {
            const PoseEstimate e = estimate_from_json(je);
            const auto s = nodes.find(e.src);
            const auto d = nodes.find(e.dst);
            if (s == nodes.end() || d == nodes.end()) {
              throw std::invalid_argument("estimate references an unknown node");
            }
            edges.push_back({relative_pose(s->second.pose, d->second.pose), e, s->second.fov});
          }
        }
        in.edges.insert(in.edges.end(), edges.begin(), edges.end());
        for (auto &p : bev) in.bev_pairs.push_back(std::move(p));
      } else if (j.contains("node_id")) {
        const double fov = j.contains("fov_deg") ? num(j.at("fov_deg")) : fov_deg;
        std::vector<EdgeRecord> edges;
        for (const auto &je : field(j, "estimates")) {
          edges.push_back({pose_from_json(field(je, "truth")), estimate_from_json(je), fov});
        }
        in.edges.insert(in.edges.end(), edges.begin(), edges.end());
      } else {
        throw std::invalid_argument("neither a dataset nor a runlog record");
      }
    } catch (const std::exception &e) {
      if (!counted) ++in.lines;  // unparsable lines are data lines too
      in.malformed.emplace_back(lineno, e.what());
    }
  }
  return in;
}

void write_metrics_csv(std::ostream &os, const MetricsReport &r) {
  os << "# schema=" << kMetricsSchema << '\n';
  std::vector<std::pair<std::string, std::string>> cols;
  cols.emplace_back("n_edges", std::to_string(r.categories[0].count));
  cols.emplace_back("youden_threshold", r.youden ? fmt(r.youden->threshold) : "inf");
  cols.emplace_back("youden_j", r.youden ? fmt(r.youden->j) : "nan");
  for (const auto &c : r.categories) {
    const std::string name(to_string(c.category));
    cols.emplace_back(name + "_count", std::to_string(c.count));
    cols.emplace_back(name + "_median_pos_m", fmt(c.median_pos));
    cols.emplace_back(name + "_median_rot_deg", fmt(c.median_rot));
  }
  for (std::size_t i = 0; i < r.auc.auc.size(); ++i) {
    std::ostringstream name;
    name << "auc" << r.auc_thresholds_deg[i];
    cols.emplace_back(name.str(), fmt(r.auc.auc[i]));
  }
  cols.emplace_back("auc_excluded", std::to_string(r.auc.excluded));
  if (r.bev) {
    cols.emplace_back("dice", fmt(r.bev->dice));
    cols.emplace_back("iou", fmt(r.bev->iou));
  }
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i].first;
  os << '\n';
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i].second;
  os << '\n';
}

}  // namespace covis::io
