// SPDX-License-Identifier: Apache-2.0
//
// covis: reproducible experiments on top of the covis library.
//
//   covis simulate --config run.json --out results/
//   covis metrics  --input results/runlog.jsonl --out report/
//   covis datagen | netbench | homing --config ... --out ...
//   covis config   (print every key with its default)
//
// Exit codes: 0 success, 2 configuration, 3 I/O, 4 validation.
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "covis/config.hpp"
#include "covis/io.hpp"
#include "covis/netsim.hpp"

namespace {

namespace fs = std::filesystem;
using covis::config::ConfigError;
using covis::config::Json;

enum Exit : int { kOk = 0, kConfig = 2, kIo = 3, kValidation = 4 };

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::string format = "jsonl";
  std::string input;
};

void set_log_level() {
  const char *env = std::getenv("COVIS_LOG_LEVEL");
  if (env == nullptr) {
    spdlog::set_level(spdlog::level::info);
    return;
  }
  const std::string v(env);
  if (v == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (v == "warn") {
    spdlog::set_level(spdlog::level::warn);
  } else if (v == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (v == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
    spdlog::warn("ignoring COVIS_LOG_LEVEL='{}' (expected error, warn, info or debug)", v);
  }
}

Json load_config(const Options &o) {
  Json cfg = o.config.empty() ? covis::config::merge(Json::object())
                              : covis::config::load_file(o.config);
  if (o.seed) cfg["seed"] = *o.seed;
  return cfg;
}

std::uint64_t seed_of(const Json &cfg) {
  if (!cfg.at("seed").is_number_integer() || cfg.at("seed").get<std::int64_t>() < 0) {
    throw ConfigError("seed must be a non-negative integer");
  }
  return cfg.at("seed").get<std::uint64_t>();
}

fs::path prepare_out(const Options &o) {
  const fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory '" + o.out + "'");
  }
  return dir;
}

std::ofstream open_out(const fs::path &path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  return os;
}

void close_out(std::ofstream &os, const fs::path &path) {
  os.close();
  if (!os) throw IoError("failed writing '" + path.string() + "'");
  spdlog::info("wrote {}", path.string());
}

void require_format(const Options &o, std::initializer_list<const char *> allowed) {
  for (const char *a : allowed) {
    if (o.format == a) return;
  }
  throw ConfigError("--format " + o.format + " is not supported by this command");
}

// Gnuplot-friendly per-tick trace.
void write_trace_csv(std::ostream &os, const covis::RunLog &log) {
  os << "# schema=covis.trace/1\n";
  os << "t,node_id,x,y,yaw,vx,vy,w,gated,track_err_m,track_rot_deg,n_estimates\n";
  for (const auto &r : log.records) {
    os << Json(r.t).dump() << ',' << r.node << ',' << Json(r.pose_truth.position.x).dump() << ','
       << Json(r.pose_truth.position.y).dump() << ','
       << Json(r.pose_truth.rotation.yaw()).dump() << ',' << Json(r.cmd.v.x).dump() << ','
       << Json(r.cmd.v.y).dump() << ',' << Json(r.cmd.w).dump() << ',' << (r.gated ? 1 : 0)
       << ',' << Json(r.track_err_m).dump() << ',' << Json(r.track_rot_deg).dump() << ','
       << r.estimates.size() << '\n';
  }
}

int cmd_simulate(const Options &o) {
  require_format(o, {"jsonl", "csv"});
  const Json cfg = load_config(o);
  const auto fc = covis::config::formation(cfg);
  const auto seed = seed_of(cfg);
  const auto dir = prepare_out(o);
  spdlog::info("simulating {} s formation run, seed {}", fc.duration, seed);
  const auto log = covis::run_formation(fc, seed);

  if (o.format == "jsonl") {
    const auto p = dir / "runlog.jsonl";
    auto os = open_out(p);
    covis::io::write_runlog(os, log);
    close_out(os, p);
  } else {
    const auto p = dir / "trace.csv";
    auto os = open_out(p);
    write_trace_csv(os, log);
    close_out(os, p);
  }
  {
    const auto p = dir / "summary.csv";
    auto os = open_out(p);
    covis::io::write_formation_summary(os, log.summary);
    close_out(os, p);
  }
  {
    const auto p = dir / "net_summary.csv";
    auto os = open_out(p);
    covis::net::write_summary_csv(os, log.net_stats);
    close_out(os, p);
  }
  for (const auto &s : log.summary) {
    spdlog::info("follower {}: median {:.3f} m / {:.2f} deg, mean speed {:.2f} m/s", s.node,
                 s.median_err_m, s.median_rot_deg, s.mean_speed);
  }
  return kOk;
}

int cmd_metrics(const Options &o) {
  require_format(o, {"jsonl", "csv"});
  if (o.input.empty()) throw ConfigError("metrics needs --input PATH");
  const Json cfg = load_config(o);
  const auto mc = covis::config::metrics(cfg);
  const double max_bad = cfg.at("max_malformed_fraction").get<double>();
  std::ifstream in(o.input);
  if (!in) throw IoError("cannot read '" + o.input + "'");
  const auto input = covis::io::read_metrics_input(in, cfg.at("fov_deg").get<double>());
  for (const auto &[line, why] : input.malformed) {
    spdlog::warn("{}:{}: malformed record: {}", o.input, line, why);
  }
  const double total = static_cast<double>(input.lines);
  if (total == 0.0) throw ValidationError("no records in '" + o.input + "'");
  if (static_cast<double>(input.malformed.size()) > max_bad * total) {
    throw ValidationError(std::to_string(input.malformed.size()) + " of " +
                          std::to_string(input.lines) + " records are malformed");
  }
  if (input.edges.empty()) throw ValidationError("no pose estimates in '" + o.input + "'");
  covis::MetricsReport report;
  try {
    report = covis::evaluate(input.edges, input.bev_pairs, mc);
  } catch (const std::invalid_argument &e) {
    throw ValidationError(e.what());
  }
  const auto dir = prepare_out(o);
  if (o.format == "csv") {
    const auto p = dir / "metrics.csv";
    auto os = open_out(p);
    covis::io::write_metrics_csv(os, report);
    close_out(os, p);
  } else {
    Json j{{"schema", covis::io::kMetricsSchema}, {"n_edges", report.categories[0].count}};
    j["youden_threshold"] = report.youden ? Json(report.youden->threshold) : Json(nullptr);
    for (const auto &c : report.categories) {
      j[std::string(covis::to_string(c.category))] = {
          {"count", c.count}, {"median_pos_m", c.median_pos}, {"median_rot_deg", c.median_rot}};
    }
    Json auc = Json::object();
    for (std::size_t i = 0; i < report.auc.auc.size(); ++i) {
      std::ostringstream k;
      k << report.auc_thresholds_deg[i];
      auc[k.str()] = report.auc.auc[i];
    }
    j["auc"] = auc;
    j["auc_excluded"] = report.auc.excluded;
    if (report.bev) j["bev"] = {{"dice", report.bev->dice}, {"iou", report.bev->iou}};
    const auto p = dir / "metrics.jsonl";
    auto os = open_out(p);
    os << j.dump() << '\n';
    close_out(os, p);
  }
  {
    const auto p = dir / "categories.csv";
    auto os = open_out(p);
    os << "# schema=covis.categories/1\n";
    covis::write_categories_csv(os, report.categories);
    close_out(os, p);
  }
  {
    const auto p = dir / "auc.csv";
    auto os = open_out(p);
    os << "# schema=covis.auc/1\n";
    covis::write_auc_csv(os, report);
    close_out(os, p);
  }
  return kOk;
}

int cmd_datagen(const Options &o) {
  require_format(o, {"jsonl"});
  const Json cfg = load_config(o);
  const auto seed = seed_of(cfg);
  const auto wopts = covis::config::world_options(cfg);
  const auto sopts = covis::config::sample_options(cfg);
  const auto est_cfg = covis::config::estimator(cfg);
  const int n_groups = cfg.at("n_groups").get<int>();
  const int n_max = cfg.at("n_max").get<int>();
  const double d_max = cfg.at("d_max_m").get<double>();
  std::vector<covis::SampleGroup> groups;
  try {
    const auto world = covis::gen_world(seed, cfg.at("world_extent_m").get<double>(),
                                        cfg.at("n_rooms").get<int>(), wopts);
    groups = covis::sample_groups(world, n_groups, n_max, d_max, seed, sopts);
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
  if (cfg.at("with_estimates").get<bool>()) {
    auto est = covis::make_estimator(est_cfg, seed);
    for (std::size_t i = 0; i < groups.size(); ++i) {
      covis::estimate_all_pairs(groups[i], *est, static_cast<std::uint32_t>(i));
    }
  }
  const auto dir = prepare_out(o);
  const auto p = dir / "dataset.jsonl";
  auto os = open_out(p);
  covis::io::write_dataset(os, groups);
  close_out(os, p);
  return kOk;
}

int cmd_netbench(const Options &o) {
  require_format(o, {"jsonl", "csv"});
  const Json cfg = load_config(o);
  const auto seed = seed_of(cfg);
  auto world = covis::config::net_world(cfg);
  const double duration = cfg.at("duration_s").get<double>();
  if (!(duration > 0.0)) throw ConfigError("duration_s must be > 0");
  const auto dir = prepare_out(o);

  std::optional<std::ofstream> capture;
  const auto capture_path = dir / "capture.jsonl";
  covis::net::NetCallbacks cb;
  if (cfg.at("capture").get<bool>()) {
    capture = open_out(capture_path);
    covis::io::write_header(*capture, covis::net::kCaptureSchema);
    cb.on_capture = [&](double t, std::span<const std::uint8_t> wire) {
      covis::net::write_capture_line(*capture, t, wire);
    };
  }
  spdlog::info("netbench: {} nodes, {} slots, {} s", world.nodes.size(), world.scheduler.n_slots,
               duration);
  covis::net::NetSim sim(world, seed, cb);
  sim.run_until(duration);
  sim.drain();
  if (capture) close_out(*capture, capture_path);

  const auto stats = sim.stats();
  {
    const auto p = dir / "summary.csv";
    auto os = open_out(p);
    covis::net::write_summary_csv(os, stats);
    close_out(os, p);
  }
  {
    const auto p = dir / "divisor_trace.csv";
    auto os = open_out(p);
    os << "# schema=covis.divisor_trace/1\n";
    os << "t,node_id,divisor,phase\n";
    for (const auto &d : sim.divisor_trace()) {
      os << Json(d.time).dump() << ',' << d.node << ',' << d.divisor << ',' << d.phase << '\n';
    }
    close_out(os, p);
  }
  if (world.record_events && o.format == "jsonl") {
    const auto p = dir / "events.jsonl";
    auto os = open_out(p);
    covis::net::write_events_jsonl(os, sim.events());
    close_out(os, p);
  }
  std::uint64_t collisions = 0;
  for (const auto &s : stats) collisions += s.collisions;
  spdlog::info("netbench: {} collisions", collisions);
  return kOk;
}

int cmd_homing(const Options &o) {
  require_format(o, {"csv"});
  const Json cfg = load_config(o);
  const auto seed = seed_of(cfg);
  const auto hc = covis::config::homing(cfg);
  const auto res = covis::run_homing(hc, seed);
  const auto dir = prepare_out(o);
  {
    const auto p = dir / "homing.csv";
    auto os = open_out(p);
    covis::io::write_homing_csv(os, res);
    close_out(os, p);
  }
  {
    double worst = 0.0;
    for (const auto &a : res.arrivals) worst = std::max(worst, a.arrival_err_m);
    const auto p = dir / "homing_summary.csv";
    auto os = open_out(p);
    os << "# schema=covis.homing_summary/1\n";
    os << "keyframes,completed,max_arrival_err_m,median_cross_track_m,max_cross_track_m,"
          "replay_time_s\n";
    os << res.keyframes.size() << ',' << (res.completed ? 1 : 0) << ',' << Json(worst).dump()
       << ',' << Json(res.median_cross_track_m).dump() << ','
       << Json(res.max_cross_track_m).dump() << ',' << Json(res.replay_time).dump() << '\n';
    close_out(os, p);
  }
  spdlog::info("homing: {} keyframes, completed={}, median cross-track {:.3f} m",
               res.keyframes.size(), res.completed, res.median_cross_track_m);
  return kOk;
}

int cmd_config() {
  std::cout << covis::config::defaults().dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char **argv) {
  set_log_level();
  CLI::App app{"covis: multi-robot relative pose, networking and formation experiments"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App *sub) {
    sub->add_option("--config", o.config, "JSON config file (flat keys)");
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "Overrides the config seed");
    sub->add_option("--format", o.format, "Primary output format")
        ->check(CLI::IsMember({"csv", "jsonl"}));
  };
  auto *simulate = app.add_subcommand("simulate", "Closed-loop leader-follower formation run");
  auto *metrics = app.add_subcommand("metrics", "Evaluate a dataset or run log");
  auto *datagen = app.add_subcommand("datagen", "Sample observation groups from a synthetic world");
  auto *netbench = app.add_subcommand("netbench", "Network-only stress run");
  auto *homing = app.add_subcommand("homing", "Record-then-replay keyframe homing run");
  app.add_subcommand("config", "Print the default configuration");
  for (auto *s : {simulate, metrics, datagen, netbench, homing}) add_common(s);
  metrics->add_option("--input", o.input, "Dataset or run log (JSONL)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  // Commands default to CSV where JSONL makes no sense.
  if (homing->parsed() && o.format == "jsonl") o.format = "csv";

  try {
    if (simulate->parsed()) return cmd_simulate(o);
    if (metrics->parsed()) return cmd_metrics(o);
    if (datagen->parsed()) return cmd_datagen(o);
    if (netbench->parsed()) return cmd_netbench(o);
    if (homing->parsed()) return cmd_homing(o);
    return cmd_config();
  } catch (const ConfigError &e) {
    spdlog::error("config: {}", e.what());
    return kConfig;
  } catch (const IoError &e) {
    spdlog::error("i/o: {}", e.what());
    return kIo;
  } catch (const ValidationError &e) {
    spdlog::error("validation: {}", e.what());
    return kValidation;
  } catch (const covis::RemoteEstimateError &e) {
    spdlog::error("remote estimator: {}", e.what());
    return kIo;
  } catch (const std::exception &e) {
    spdlog::error("{}", e.what());
    return kValidation;
  }
}
