// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <map>
#include <sstream>

#include "covis/netsim.hpp"

using namespace covis;
using namespace covis::net;

namespace {

NetWorld world_of(std::vector<NodeId> nodes, bool adaptive = true) {
  NetWorld w;
  w.nodes = std::move(nodes);
  w.scheduler.adaptive = adaptive;
  return w;
}

}  // namespace

TEST_CASE("loss_probability examples") {
  const Medium m;
  CHECK(loss_probability(m, 2) == doctest::Approx(0.03));
  CHECK(loss_probability(m, 7) == doctest::Approx(0.08));
  CHECK(loss_probability(m, 100) == 0.5);
  CHECK(loss_probability(m, 1) == doctest::Approx(0.03));
}

TEST_CASE("empty world logs only ticks") {
  const NetRunResult r = run(world_of({}), 2.0, 1);
  REQUIRE_FALSE(r.events.empty());
  for (const auto &e : r.events) CHECK(e.kind == EventKind::Tick);
  CHECK(r.events.size() == 30);
}

TEST_CASE("runs are deterministic per seed") {
  const NetWorld w = world_of({0, 1, 2, 4, 5});
  const NetRunResult a = run(w, 10.0, 17);
  const NetRunResult b = run(w, 10.0, 17);
  CHECK(a.events == b.events);
  std::ostringstream sa;
  std::ostringstream sb;
  write_events_jsonl(sa, a.events);
  write_events_jsonl(sb, b.events);
  CHECK(sa.str() == sb.str());
  const NetRunResult c = run(w, 10.0, 18);
  CHECK_FALSE(a.events == c.events);
}

TEST_CASE("events are processed in time order with kind tiebreak") {
  const NetRunResult r = run(world_of({0, 1, 2, 3}), 3.0, 2);
  for (std::size_t i = 1; i < r.events.size(); ++i) {
    const auto &p = r.events[i - 1];
    const auto &q = r.events[i];
    CHECK(p.time <= q.time);
    if (p.time == q.time) CHECK(static_cast<int>(p.kind) <= static_cast<int>(q.kind));
  }
}

TEST_CASE("four nodes in four slots never collide") {
  const NetRunResult r = run(world_of({0, 1, 2, 3}), 60.0, 3);
  for (const auto &s : r.stats) CHECK(s.collisions == 0);
  for (const auto &e : r.events) CHECK_FALSE(e.collided);
}

TEST_CASE("overlapping frames are destroyed at every receiver") {
  NetWorld w = world_of({0, 4, 1}, false);
  w.heartbeats = false;
  NetSim sim(w, 4);
  sim.run_until(5.0);
  sim.drain();
  for (const auto &s : sim.stats()) {
    if (s.node == 1) {
      CHECK(s.collisions == 0);
      CHECK(s.copies_delivered > 0);
    } else {
      CHECK(s.collisions == s.frames_tx);
      CHECK(s.copies_delivered == 0);
    }
  }
}

TEST_CASE("conservation of frames") {
  NetWorld w = world_of({0, 1, 2, 4, 5, 6});
  NetSim sim(w, 5);
  sim.run_until(20.0);
  sim.drain();
  std::map<std::pair<NodeId, std::uint32_t>, int> starts;
  std::map<std::pair<NodeId, std::uint32_t>, int> ends;
  std::map<std::pair<NodeId, std::uint32_t>, int> delivers;
  for (const auto &e : sim.events()) {
    if (e.jam) continue;
    const auto key = std::make_pair(e.node, e.seq);
    if (e.kind == EventKind::TxStart) ++starts[key];
    if (e.kind == EventKind::TxEnd) ++ends[key];
    if (e.kind == EventKind::Deliver) {
      ++delivers[key];
      CHECK(e.receiver != e.node);
    }
  }
  CHECK(starts == ends);
  for (const auto &[k, n] : starts) CHECK(n == 1);
  for (const auto &[k, n] : delivers) {
    CHECK(n <= static_cast<int>(w.nodes.size()) - 1);
    CHECK(starts.count(k) == 1);
  }
}

TEST_CASE("Bernoulli loss matches the configured probability") {
  NetWorld w = world_of({0, 1}, false);
  w.heartbeats = false;
  w.codec_roundtrip = false;
  w.record_events = false;
  w.payload_bytes = 64;
  NetSim sim(w, 6);
  sim.run_until(3340.0);
  sim.drain();
  std::uint64_t expected = 0;
  std::uint64_t delivered = 0;
  for (const auto &s : sim.stats()) {
    expected += s.copies_expected;
    delivered += s.copies_delivered;
  }
  REQUIRE(expected >= 100000);
  const double loss = 1.0 - static_cast<double>(delivered) / static_cast<double>(expected);
  CHECK(std::abs(loss - 0.03) <= 0.005);
}

TEST_CASE("TDMA throughput at divisor one") {
  NetWorld w = world_of({0, 1, 2, 3}, false);
  NetSim sim(w, 7);
  sim.run_until(60.0);
  sim.drain();
  const double p = loss_probability(w.medium, 4);
  for (const auto &s : sim.stats()) {
    CHECK(s.frames_tx == 900);
    // Embedding frames this node received, per peer and second.
    const double goodput = static_cast<double>(s.frames_rx) / (3.0 * 60.0);
    CHECK(goodput == doctest::Approx(15.0 * (1.0 - p)).epsilon(0.05));
    CHECK(goodput == doctest::Approx(15.0 * (1.0 - s.loss_rate)).epsilon(0.05));
  }
}

TEST_CASE("backoff recovers from a jammer on half the superframes") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    NetWorld w = world_of({0, 1, 2, 3});
    JammerSpec j;
    j.slots = {0};
    j.every = 2;
    j.phase = 1;
    w.jammers = {j};
    NetSim sim(w, seed);
    sim.run_until(40.0);
    sim.drain();
    // Divisor rises within three windows.
    bool raised = false;
    for (const auto &c : sim.divisor_trace()) {
      if (c.node == 0 && c.divisor > 1 && c.time <= 3 * w.scheduler.window) raised = true;
    }
    CHECK(raised);
    for (const auto &s : sim.stats(10.0, 40.0)) {
      if (s.node == 0) CHECK(s.loss_rate < w.scheduler.high_watermark);
    }
  }
}

TEST_CASE("total blackout via loss override") {
  NetWorld w = world_of({0, 1, 2});
  w.loss_override = 1.0;
  const NetRunResult r = run(w, 5.0, 8);
  for (const auto &s : r.stats) CHECK(s.copies_delivered == 0);
}

TEST_CASE("world validation") {
  NetWorld w = world_of({0, 0});
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  NetWorld m = world_of({0, 1});
  m.medium.bitrate = 0.0;
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}

TEST_CASE("writers emit schema headers") {
  const NetRunResult r = run(world_of({0, 1}), 0.5, 9);
  std::ostringstream ev;
  write_events_jsonl(ev, r.events);
  CHECK(ev.str().rfind("{\"schema\":\"covis.netsim.event/1\"}", 0) == 0);
  std::ostringstream sum;
  write_summary_csv(sum, r.stats);
  CHECK(sum.str().rfind("# schema=covis.netsim.summary/1", 0) == 0);
}
