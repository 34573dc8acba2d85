// SPDX-License-Identifier: Apache-2.0
//
// Python bindings. Run configurations cross the boundary as JSON text so the
// flat key/value schema, its defaults and its validation stay in C++.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <stdexcept>
#include <string>

#include "covis/bev.hpp"
#include "covis/config.hpp"
#include "covis/geometry.hpp"
#include "covis/losses.hpp"
#include "covis/metrics.hpp"
#include "covis/netproto.hpp"
#include "covis/netsim.hpp"
#include "covis/scenario.hpp"

namespace py = pybind11;

namespace {

using covis::BevGrid;
using covis::Pose;
using covis::PoseEstimate;
using covis::UnitQuat;
using covis::Vec3;
using covis::config::Json;

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

BevGrid grid_from_array(const FloatArray &a, double resolution) {
  if (a.ndim() != 2) throw std::invalid_argument("grid must be two-dimensional");
  BevGrid g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), resolution);
  std::memcpy(g.cells().data(), a.data(), g.size() * sizeof(float));
  return g;
}

FloatArray grid_to_array(const BevGrid &g) {
  FloatArray out({g.rows(), g.cols()});
  std::memcpy(out.mutable_data(), g.cells().data(), g.size() * sizeof(float));
  return out;
}

Json parse_config(const std::string &text) {
  return covis::config::merge(Json::parse(text.empty() ? "{}" : text));
}

std::uint64_t seed_of(const Json &cfg) {
  const auto &s = cfg.at("seed");
  if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
    throw covis::config::ConfigError("seed must be a non-negative integer");
  }
  return s.get<std::uint64_t>();
}

py::dict stats_dict(const covis::net::NodeStats &s) {
  py::dict d;
  d["node"] = s.node;
  d["frames_tx"] = s.frames_tx;
  d["frames_rx"] = s.frames_rx;
  d["collisions"] = s.collisions;
  d["copies_expected"] = s.copies_expected;
  d["copies_delivered"] = s.copies_delivered;
  d["loss_rate"] = s.loss_rate;
  d["mean_divisor"] = s.mean_divisor;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Relative-pose estimation, formation control and TDMA broadcast simulation";

  py::register_exception<covis::config::ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<Vec3>(m, "Vec3")
      .def(py::init<>())
      .def(py::init([](double x, double y, double z) { return Vec3{x, y, z}; }), py::arg("x"),
           py::arg("y"), py::arg("z"))
      .def_readwrite("x", &Vec3::x)
      .def_readwrite("y", &Vec3::y)
      .def_readwrite("z", &Vec3::z)
      .def("norm", &Vec3::norm)
      .def("__iter__", [](const Vec3 &v) { return py::iter(py::make_tuple(v.x, v.y, v.z)); })
      .def("__eq__", [](const Vec3 &a, const Vec3 &b) { return a == b; })
      .def("__repr__", [](const Vec3 &v) {
        return "Vec3(" + std::to_string(v.x) + ", " + std::to_string(v.y) + ", " +
               std::to_string(v.z) + ")";
      });

  py::class_<UnitQuat>(m, "UnitQuat")
      .def(py::init<>())
      .def(py::init<double, double, double, double>(), py::arg("w"), py::arg("x"), py::arg("y"),
           py::arg("z"))
      .def_static("normalized", &UnitQuat::normalized)
      .def_static("from_yaw", &UnitQuat::from_yaw, py::arg("yaw_rad"))
      .def_static("from_axis_angle", &UnitQuat::from_axis_angle, py::arg("axis"),
                  py::arg("angle_rad"))
      .def_property_readonly("w", &UnitQuat::w)
      .def_property_readonly("x", &UnitQuat::x)
      .def_property_readonly("y", &UnitQuat::y)
      .def_property_readonly("z", &UnitQuat::z)
      .def("components", &UnitQuat::components)
      .def("inverse", &UnitQuat::inverse)
      .def("rotate", &UnitQuat::rotate)
      .def("yaw", &UnitQuat::yaw)
      .def("__mul__", [](const UnitQuat &a, const UnitQuat &b) { return a * b; })
      .def("__eq__", [](const UnitQuat &a, const UnitQuat &b) { return a == b; });

  py::class_<Pose>(m, "Pose")
      .def(py::init<>())
      .def(py::init([](const Vec3 &p, const UnitQuat &q) { return Pose{p, q}; }),
           py::arg("position"), py::arg("rotation"))
      .def_static("planar", &Pose::planar, py::arg("x"), py::arg("y"), py::arg("yaw_rad"))
      .def_readwrite("position", &Pose::position)
      .def_readwrite("rotation", &Pose::rotation)
      .def("inverse", &Pose::inverse)
      .def("apply", &Pose::apply)
      .def("__eq__", [](const Pose &a, const Pose &b) { return a == b; });

  py::class_<PoseEstimate>(m, "PoseEstimate")
      .def(py::init<>())
      .def_readwrite("p_hat", &PoseEstimate::p_hat)
      .def_readwrite("sigma_p", &PoseEstimate::sigma_p)
      .def_readwrite("q_hat", &PoseEstimate::q_hat)
      .def_readwrite("sigma_q", &PoseEstimate::sigma_q)
      .def_readwrite("src", &PoseEstimate::src)
      .def_readwrite("dst", &PoseEstimate::dst)
      .def("pose", &PoseEstimate::pose);

  m.def("compose", &covis::compose, py::arg("a"), py::arg("b"));
  m.def("relative_pose", &covis::relative_pose, py::arg("pose_i"), py::arg("pose_j"));
  m.def("quat_dist", &covis::quat_dist, py::arg("q"), py::arg("q_hat"));
  m.def("rot_geodesic_deg", &covis::rot_geodesic_deg, py::arg("q"), py::arg("q_hat"));
  m.def("pos_dist", &covis::pos_dist, py::arg("p"), py::arg("p_hat"));
  m.def("wrap_angle", &covis::wrap_angle, py::arg("a"));

  m.def(
      "gnll",
      [](double mu, double mu_hat, double sigma2_hat) {
        return covis::gnll({mu, mu_hat, sigma2_hat});
      },
      py::arg("mu"), py::arg("mu_hat"), py::arg("sigma2_hat"));
  m.def("chord_gnll", &covis::chord_gnll, py::arg("q"), py::arg("q_hat"), py::arg("sigma2_hat"));
  m.def(
      "pose_loss",
      [](const Pose &truth, const PoseEstimate &est, double alpha, double beta) {
        return covis::pose_loss(truth, est, {alpha, beta});
      },
      py::arg("truth"), py::arg("est"), py::arg("alpha") = 0.5, py::arg("beta") = 1.0);

  m.def(
      "youden_threshold",
      [](const std::vector<double> &uncertainty, const std::vector<bool> &positive) {
        if (uncertainty.size() != positive.size()) {
          throw std::invalid_argument("uncertainty and positive differ in length");
        }
        std::vector<covis::LabeledScore> s(uncertainty.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = {uncertainty[i], positive[i]};
        const auto r = covis::youden_threshold(s);
        return py::make_tuple(r.threshold, r.j);
      },
      py::arg("uncertainty"), py::arg("positive"),
      "Returns (threshold, j); reject iff uncertainty >= threshold.");
  m.def("lower_median", &covis::lower_median, py::arg("values"));
  m.def(
      "dice_iou",
      [](const FloatArray &truth, const FloatArray &pred, double bin_threshold) {
        const auto r = covis::dice_iou(grid_from_array(truth, 1.0), grid_from_array(pred, 1.0),
                                       bin_threshold);
        return py::make_tuple(r.dice, r.iou);
      },
      py::arg("truth"), py::arg("pred"), py::arg("bin_threshold") = 0.5);

  m.def(
      "transform_grid",
      [](const FloatArray &src, double resolution, const Pose &rel) {
        return grid_to_array(covis::transform_grid(grid_from_array(src, resolution), rel));
      },
      py::arg("src"), py::arg("resolution"), py::arg("rel"));

  m.def("crc32", [](const py::bytes &b) {
    const std::string s = b;
    return covis::net::crc32(
        {reinterpret_cast<const std::uint8_t *>(s.data()), s.size()});
  });
  m.def(
      "encode_frame",
      [](int type, covis::NodeId node_id, std::uint32_t seq, std::uint32_t superframe_idx,
         const py::bytes &payload) {
        if (type != 0 && type != 1) throw std::invalid_argument("type must be 0 or 1");
        const std::string p = payload;
        covis::net::Frame f{static_cast<covis::net::MsgType>(type), node_id, seq, superframe_idx,
                            {p.begin(), p.end()}};
        const auto wire = covis::net::encode(f);
        return py::bytes(reinterpret_cast<const char *>(wire.data()), wire.size());
      },
      py::arg("type"), py::arg("node_id"), py::arg("seq"), py::arg("superframe_idx"),
      py::arg("payload") = py::bytes());
  m.def(
      "decode_frame",
      [](const py::bytes &wire) {
        const std::string s = wire;
        const auto r = covis::net::decode(
            {reinterpret_cast<const std::uint8_t *>(s.data()), s.size()});
        if (const auto *e = std::get_if<covis::net::FrameError>(&r)) {
          throw std::invalid_argument(std::string(covis::net::to_string(*e)));
        }
        const auto &f = std::get<covis::net::Frame>(r);
        py::dict d;
        d["type"] = static_cast<int>(f.type);
        d["node_id"] = f.node_id;
        d["seq"] = f.seq;
        d["superframe_idx"] = f.superframe_idx;
        d["payload"] = py::bytes(reinterpret_cast<const char *>(f.payload.data()),
                                 f.payload.size());
        return d;
      },
      py::arg("wire"), "Raises ValueError naming the frame error.");

  m.def("default_config", [] { return covis::config::defaults().dump(); });
  m.def(
      "run_formation",
      [](const std::string &config) {
        const Json cfg = parse_config(config);
        const auto fc = covis::config::formation(cfg);
        const auto seed = seed_of(cfg);
        covis::RunLog log;
        {
          py::gil_scoped_release release;
          log = covis::run_formation(fc, seed);
        }
        py::list rows;
        for (const auto &s : log.summary) {
          py::dict d;
          d["node"] = s.node;
          d["samples"] = s.samples;
          d["mean_abs_err_m"] = s.mean_abs_err_m;
          d["median_err_m"] = s.median_err_m;
          d["mean_abs_rot_deg"] = s.mean_abs_rot_deg;
          d["median_rot_deg"] = s.median_rot_deg;
          d["mean_speed"] = s.mean_speed;
          rows.append(d);
        }
        return rows;
      },
      py::arg("config") = "", "Follower summaries of a formation run.");
  m.def(
      "run_homing",
      [](const std::string &config) {
        const Json cfg = parse_config(config);
        const auto hc = covis::config::homing(cfg);
        const auto seed = seed_of(cfg);
        covis::HomingResult r;
        {
          py::gil_scoped_release release;
          r = covis::run_homing(hc, seed);
        }
        py::list arrivals;
        for (const auto &a : r.arrivals) {
          py::dict d;
          d["index"] = a.index;
          d["reached"] = a.reached;
          d["arrival_err_m"] = a.arrival_err_m;
          d["t"] = a.t;
          arrivals.append(d);
        }
        py::dict d;
        d["completed"] = r.completed;
        d["keyframes"] = r.keyframes.size();
        d["arrivals"] = arrivals;
        d["median_cross_track_m"] = r.median_cross_track_m;
        d["max_cross_track_m"] = r.max_cross_track_m;
        d["replay_time"] = r.replay_time;
        return d;
      },
      py::arg("config") = "", "Keyframe homing run.");
  m.def(
      "run_netbench",
      [](const std::string &config) {
        const Json cfg = parse_config(config);
        const auto world = covis::config::net_world(cfg);
        const auto seed = seed_of(cfg);
        const double duration = cfg.at("duration_s").get<double>();
        if (!(duration > 0.0)) throw covis::config::ConfigError("duration_s must be > 0");
        covis::net::NetRunResult r;
        {
          py::gil_scoped_release release;
          r = covis::net::run(world, duration, seed);
        }
        py::list rows;
        for (const auto &s : r.stats) rows.append(stats_dict(s));
        return rows;
      },
      py::arg("config") = "", "Per-node statistics of a broadcast simulation.");
}
