// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("covis_cli_" + std::to_string(::getpid()) + "_" +
                                       std::to_string(counter()++));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  static int &counter() {
    static int n = 0;
    return n;
  }
  [[nodiscard]] fs::path write(const std::string &name, const std::string &text) const {
    const auto p = dir / name;
    std::ofstream(p) << text;
    return p;
  }
};

int run(const std::string &args) {
  const std::string cmd = std::string(COVIS_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Rows of a CSV with a schema comment line and a header line.
std::vector<std::map<std::string, std::string>> read_csv(const fs::path &p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  REQUIRE(line.rfind("# schema=", 0) == 0);
  std::getline(in, line);
  std::vector<std::string> cols;
  std::stringstream hs(line);
  for (std::string c; std::getline(hs, c, ',');) cols.push_back(c);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::map<std::string, std::string> row;
    std::size_t i = 0;
    for (std::string c; std::getline(ls, c, ',') && i < cols.size(); ++i) row[cols[i]] = c;
    rows.push_back(row);
  }
  return rows;
}

std::string q(const fs::path &p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run("--help") == 0);
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("simulate --format xml") == 2);
  CHECK(run("simulate --seed notanumber") == 2);
  CHECK(run("config") == 0);
}

TEST_CASE("config errors exit 2") {
  Scratch s;
  CHECK(run("simulate --config " + q(s.dir / "missing.json") + " --out " + q(s.dir)) == 2);
  const auto bad = s.write("bad.json", "{ nope");
  CHECK(run("simulate --config " + q(bad) + " --out " + q(s.dir)) == 2);
  const auto unknown = s.write("unknown.json", R"({"no_such_key": 1})");
  CHECK(run("netbench --config " + q(unknown) + " --out " + q(s.dir)) == 2);
  const auto invalid = s.write("invalid.json", R"({"v_max": -1.0, "duration_s": 1.0})");
  CHECK(run("simulate --config " + q(invalid) + " --out " + q(s.dir)) == 2);
}

TEST_CASE("i/o errors exit 3") {
  Scratch s;
  const auto file = s.write("plain", "x");
  const auto cfg = s.write("c.json", R"({"duration_s": 1.0, "n_nodes": 2})");
  CHECK(run("netbench --config " + q(cfg) + " --out " + q(file / "sub")) == 3);
  CHECK(run("metrics --input " + q(s.dir / "absent.jsonl") + " --out " + q(s.dir)) == 3);
}

TEST_CASE("validation errors exit 4") {
  Scratch s;
  const auto junk = s.write("junk.jsonl", "{\"schema\":\"covis.dataset/1\"}\nnot json\nmore junk\n");
  CHECK(run("metrics --input " + q(junk) + " --out " + q(s.dir / "m")) == 4);
  const auto empty = s.write("empty.jsonl", "{\"schema\":\"covis.dataset/1\"}\n");
  CHECK(run("metrics --input " + q(empty) + " --out " + q(s.dir / "m")) == 4);
}

TEST_CASE("simulate is deterministic per seed") {
  Scratch s;
  const auto cfg = s.write("c.json", R"({"duration_s": 8.0, "transient_s": 2.0})");
  REQUIRE(run("simulate --config " + q(cfg) + " --seed 7 --out " + q(s.dir / "a")) == 0);
  REQUIRE(run("simulate --config " + q(cfg) + " --seed 7 --out " + q(s.dir / "b")) == 0);
  for (const char *f : {"runlog.jsonl", "summary.csv", "net_summary.csv"}) {
    CHECK(slurp(s.dir / "a" / f) == slurp(s.dir / "b" / f));
    CHECK_FALSE(slurp(s.dir / "a" / f).empty());
  }
  CHECK(slurp(s.dir / "a" / "runlog.jsonl").rfind("{\"schema\":\"covis.runlog/1\"}", 0) == 0);
  const auto rows = read_csv(s.dir / "a" / "summary.csv");
  CHECK(rows.size() == 2);
  REQUIRE(run("simulate --config " + q(cfg) + " --format csv --out " + q(s.dir / "c")) == 0);
  CHECK(slurp(s.dir / "c" / "trace.csv").rfind("# schema=covis.trace/1", 0) == 0);
}

TEST_CASE("rectangle run reports distinct follower speeds") {
  Scratch s;
  const auto cfg = s.write("c.json", R"({"duration_s": 60.0, "trajectory": "rect_dynamic"})");
  REQUIRE(run("simulate --config " + q(cfg) + " --out " + q(s.dir)) == 0);
  const auto rows = read_csv(s.dir / "summary.csv");
  REQUIRE(rows.size() == 2);
  const double v1 = std::stod(rows[0].at("mean_vel_mps"));
  const double v2 = std::stod(rows[1].at("mean_vel_mps"));
  CHECK(std::abs(v1 - v2) > 0.05);
}

TEST_CASE("metrics over an exact dataset") {
  Scratch s;
  const auto cfg = s.write("c.json", R"({"estimator": "oracle", "n_groups": 20})");
  REQUIRE(run("datagen --config " + q(cfg) + " --out " + q(s.dir)) == 0);
  REQUIRE(run("metrics --format csv --input " + q(s.dir / "dataset.jsonl") + " --out " +
              q(s.dir / "m")) == 0);
  for (const auto &r : read_csv(s.dir / "m" / "categories.csv")) {
    CHECK(std::stod(r.at("median_pos_m")) < 1e-6);
    CHECK(std::stod(r.at("median_rot_deg")) < 1e-4);
  }
  for (const auto &r : read_csv(s.dir / "m" / "auc.csv")) {
    CHECK(std::stod(r.at("auc")) == doctest::Approx(1.0));
  }
  const std::string m = slurp(s.dir / "m" / "metrics.csv");
  CHECK(m.find("dice") != std::string::npos);
  CHECK(slurp(s.dir / "m" / "metrics.csv").rfind("# schema=", 0) == 0);
}

TEST_CASE("metrics on a run log without BEV grids") {
  Scratch s;
  const auto cfg = s.write("c.json", R"({"duration_s": 5.0, "transient_s": 1.0})");
  REQUIRE(run("simulate --config " + q(cfg) + " --out " + q(s.dir)) == 0);
  REQUIRE(run("metrics --format csv --input " + q(s.dir / "runlog.jsonl") + " --out " +
              q(s.dir / "m")) == 0);
  const std::string m = slurp(s.dir / "m" / "metrics.csv");
  REQUIRE(m.find("youden") != std::string::npos);
  CHECK(m.find("dice") == std::string::npos);
  CHECK(run("metrics --format jsonl --input " + q(s.dir / "runlog.jsonl") + " --out " +
            q(s.dir / "j")) == 0);
  CHECK(slurp(s.dir / "j" / "metrics.jsonl").find("\"schema\":\"covis.metrics/1\"") !=
        std::string::npos);
}

TEST_CASE("netbench with four nodes in four slots has no collisions") {
  Scratch s;
  const auto cfg = s.write("c.json", R"({"n_nodes": 4, "n_slots": 4, "duration_s": 30.0})");
  REQUIRE(run("netbench --config " + q(cfg) + " --out " + q(s.dir)) == 0);
  const auto rows = read_csv(s.dir / "summary.csv");
  REQUIRE(rows.size() == 4);
  for (const auto &r : rows) CHECK(r.at("collisions") == "0");
  CHECK(fs::exists(s.dir / "divisor_trace.csv"));
}

TEST_CASE("netbench with nine nodes in four slots backs off") {
  Scratch s;
  const auto cfg = s.write("c.json", R"({"n_nodes": 9, "n_slots": 4, "duration_s": 60.0})");
  REQUIRE(run("netbench --config " + q(cfg) + " --format jsonl --out " + q(s.dir)) == 0);
  const auto rows = read_csv(s.dir / "summary.csv");
  REQUIRE(rows.size() == 9);
  long collisions = 0;
  double max_div = 0.0;
  for (const auto &r : rows) {
    collisions += std::stol(r.at("collisions"));
    max_div = std::max(max_div, std::stod(r.at("mean_divisor")));
  }
  CHECK(collisions > 0);
  CHECK(max_div > 1.0);
  // Steady state: the last recorded divisor of some node stays above one.
  std::map<std::string, int> last;
  std::ifstream in(s.dir / "divisor_trace.csv");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::string t, node, div;
    std::getline(ls, t, ',');
    std::getline(ls, node, ',');
    std::getline(ls, div, ',');
    last[node] = std::stoi(div);
  }
  int above = 0;
  for (const auto &[n, d] : last) above += d > 1 ? 1 : 0;
  CHECK(above > 0);
  CHECK(slurp(s.dir / "events.jsonl").rfind("{\"schema\":\"covis.netsim.event/1\"}", 0) == 0);
}

TEST_CASE("homing with the oracle estimator") {
  Scratch s;
  const auto cfg = s.write("c.json", R"({"estimator": "oracle"})");
  REQUIRE(run("homing --config " + q(cfg) + " --out " + q(s.dir)) == 0);
  const auto rows = read_csv(s.dir / "homing_summary.csv");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].at("completed") == "1");
  CHECK(std::stod(rows[0].at("max_arrival_err_m")) < 0.2);
  CHECK(slurp(s.dir / "homing.csv").rfind("# schema=covis.homing/1", 0) == 0);
}

TEST_CASE("log level from the environment") {
  CHECK(std::system((std::string("COVIS_LOG_LEVEL=debug ") + COVIS_BIN + " config >/dev/null 2>&1").c_str()) == 0);
}
