// SPDX-License-Identifier: Apache-2.0
#include "covis/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <stdexcept>
#include <tuple>

#include "covis/bytes.hpp"
#include "covis/rng.hpp"

namespace covis::net {

void Medium::validate() const {
  if (!(bitrate > 0.0) || !std::isfinite(bitrate)) throw std::invalid_argument("bitrate must be > 0");
  if (!(base_loss >= 0.0 && base_loss < 1.0)) throw std::invalid_argument("base_loss not in [0,1)");
  if (!(loss_slope >= 0.0 && loss_slope < 1.0)) {
    throw std::invalid_argument("loss_slope not in [0,1)");
  }
  if (!(propagation >= 0.0) || !std::isfinite(propagation)) {
    throw std::invalid_argument("propagation must be >= 0");
  }
}

double loss_probability(const Medium &medium, std::size_t n_nodes) {
  const double extra = n_nodes > 2 ? static_cast<double>(n_nodes - 2) : 0.0;
  return std::min(0.5, medium.base_loss + medium.loss_slope * extra);
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::TxStart: return "tx_start";
    case EventKind::TxEnd: return "tx_end";
    case EventKind::Deliver: return "deliver";
    case EventKind::Tick: return "tick";
  }
  return "unknown";
}

void NetWorld::validate() const {
  medium.validate();
  scheduler.validate();
  const std::set<NodeId> unique(nodes.begin(), nodes.end());
  if (unique.size() != nodes.size()) throw std::invalid_argument("duplicate node ids");
  if (unique.count(kNoNode) != 0) throw std::invalid_argument("node id 0xFFFF is reserved");
  if (payload_bytes > kMaxPayload) throw std::invalid_argument("payload_bytes exceeds 8192");
  if (loss_override && !(*loss_override >= 0.0 && *loss_override <= 1.0)) {
    throw std::invalid_argument("loss_override not in [0,1]");
  }
  for (const auto &j : jammers) {
    if (unique.count(j.id) != 0) throw std::invalid_argument("jammer id collides with a node");
    if (j.every == 0 || j.phase >= j.every) throw std::invalid_argument("jammer phase/every");
    if (!(j.duty > 0.0 && j.duty <= 1.0)) throw std::invalid_argument("jammer duty not in (0,1]");
    for (int s : j.slots) {
      if (s < 0 || s >= scheduler.n_slots) throw std::invalid_argument("jammer slot out of range");
    }
  }
}

bool NetSim::Later::operator()(const Pending &a, const Pending &b) const {
  return std::tie(a.time, a.kind, a.node, a.seq, a.receiver, a.order) >
         std::tie(b.time, b.kind, b.node, b.seq, b.receiver, b.order);
}

NetSim::NetSim(NetWorld world, std::uint64_t seed, NetCallbacks callbacks)
    : world_(std::move(world)), cb_(std::move(callbacks)), rng_(substream(seed, {0x3ED1ULL})) {
  world_.validate();
  for (NodeId id : world_.nodes) {
    schedulers_.emplace(id, Scheduler(id, world_.scheduler, seed));
  }
}

const Scheduler &NetSim::scheduler(NodeId node) const {
  const auto it = schedulers_.find(node);
  if (it == schedulers_.end()) throw std::out_of_range("unknown node");
  return it->second;
}

double NetSim::loss_probability() const {
  return world_.loss_override.value_or(net::loss_probability(world_.medium, world_.nodes.size()));
}

void NetSim::push(double time, EventKind kind, NodeId node, std::uint32_t seq, NodeId receiver,
                  std::uint64_t frame_id) {
  queue_.push({time, kind, node, seq, receiver, next_order_++, frame_id});
}

void NetSim::run_until(double t_end) {
  const double period = world_.scheduler.superframe_period;
  while (static_cast<double>(next_tick_) * period < t_end) {
    push(static_cast<double>(next_tick_) * period, EventKind::Tick, kNoNode, 0, kNoNode,
         next_tick_);
    ++next_tick_;
  }
  while (!queue_.empty() && queue_.top().time < t_end) {
    const Pending ev = queue_.top();
    queue_.pop();
    process(ev);
  }
  now_ = std::max(now_, t_end);
}

void NetSim::drain() {
  while (!queue_.empty()) {
    const Pending ev = queue_.top();
    queue_.pop();
    process(ev);
  }
}

void NetSim::process(const Pending &ev) {
  now_ = ev.time;
  switch (ev.kind) {
    case EventKind::Tick: on_tick(ev.frame_id, ev.time); break;
    case EventKind::TxStart: start_tx(ev); break;
    case EventKind::TxEnd: end_tx(ev); break;
    case EventKind::Deliver: deliver(ev); break;
  }
}

void NetSim::log(const SimEvent &e) {
  if (world_.record_events) events_.push_back(e);
}

std::uint64_t NetSim::queue_frame(InFlight f, double start) {
  const std::uint64_t id = next_frame_++;
  f.start = start;
  if (!f.jam) {
    if (world_.codec_roundtrip || cb_.on_capture) f.wire = encode(f.frame);
    f.end = start + world_.medium.airtime(f.frame.wire_size());
  }
  const NodeId node = f.sender;
  const std::uint32_t seq = f.frame.seq;
  in_flight_.emplace(id, std::move(f));
  push(start, EventKind::TxStart, node, seq, kNoNode, id);
  return id;
}

void NetSim::on_tick(std::uint64_t k, double t) {
  SimEvent tick;
  tick.time = t;
  tick.kind = EventKind::Tick;
  tick.superframe = k;
  log(tick);
  if (cb_.on_tick) cb_.on_tick(k, t);
  ++ticks_done_;

  for (auto &[id, sched] : schedulers_) {
    const int div_before = sched.tx_divisor();
    const int phase_before = sched.phase();
    sched.adapt_rate(t);
    if (k == 0 || sched.tx_divisor() != div_before || sched.phase() != phase_before) {
      divisor_trace_.push_back({t, id, sched.tx_divisor(), sched.phase()});
    }
    divisor_sum_[id] += sched.tx_divisor();
    if (!sched.transmits_in(k)) continue;

    auto payload = cb_.payload ? cb_.payload(id, k)
                               : std::vector<std::uint8_t>(world_.payload_bytes, 0);
    InFlight emb;
    emb.sender = id;
    emb.frame = sched.make_frame(MsgType::Embedding, std::move(payload),
                                 static_cast<std::uint32_t>(k), t);
    const double start = sched.tx_time(k);
    const double emb_air = world_.medium.airtime(emb.frame.wire_size());
    queue_frame(std::move(emb), start);
    if (world_.heartbeats) {
      InFlight hb;
      hb.sender = id;
      hb.frame = sched.make_frame(MsgType::Heartbeat, encode_heartbeat(sched.heartbeat(t)),
                                  static_cast<std::uint32_t>(k), t);
      queue_frame(std::move(hb), start + emb_air);
    }
  }

  const double period = world_.scheduler.superframe_period;
  const double width = world_.scheduler.slot_width();
  for (const auto &j : world_.jammers) {
    if (t < j.start || t >= j.stop || k % j.every != j.phase) continue;
    std::vector<int> slots = j.slots;
    if (slots.empty()) {
      for (int s = 0; s < world_.scheduler.n_slots; ++s) slots.push_back(s);
    }
    for (int s : slots) {
      InFlight jam;
      jam.sender = j.id;
      jam.jam = true;
      const double start = static_cast<double>(k) * period + s * width;
      jam.end = start + j.duty * width;
      queue_frame(std::move(jam), start);
    }
  }
}

void NetSim::start_tx(const Pending &ev) {
  InFlight &f = in_flight_.at(ev.frame_id);
  for (std::uint64_t other : active_) {
    in_flight_.at(other).collided = true;
    f.collided = true;
  }
  active_.push_back(ev.frame_id);
  if (!f.jam) {
    f.outcome = outcomes_.size();
    outcomes_.push_back({f.start, f.sender, f.frame.type, false,
                         static_cast<std::uint16_t>(schedulers_.size() - 1), 0});
    if (cb_.on_capture) cb_.on_capture(ev.time, f.wire);
  }
  SimEvent e;
  e.time = ev.time;
  e.kind = EventKind::TxStart;
  e.node = f.sender;
  e.seq = f.frame.seq;
  e.superframe = f.frame.superframe_idx;
  e.jam = f.jam;
  e.type = f.frame.type;
  log(e);
  push(f.end, EventKind::TxEnd, f.sender, f.frame.seq, kNoNode, ev.frame_id);
}

void NetSim::end_tx(const Pending &ev) {
  auto it = in_flight_.find(ev.frame_id);
  InFlight &f = it->second;
  active_.erase(std::find(active_.begin(), active_.end(), ev.frame_id));

  SimEvent e;
  e.time = ev.time;
  e.kind = EventKind::TxEnd;
  e.node = f.sender;
  e.seq = f.frame.seq;
  e.superframe = f.frame.superframe_idx;
  e.jam = f.jam;
  e.type = f.frame.type;
  e.collided = f.collided;
  log(e);

  if (f.jam) {
    in_flight_.erase(it);
    return;
  }
  outcomes_[f.outcome].collided = f.collided;
  if (!f.collided) {
    const double p = loss_probability();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const auto &[rx, sched] : schedulers_) {
      if (rx == f.sender) continue;
      if (u(rng_) < p) continue;
      ++f.pending_deliveries;
      push(f.end + world_.medium.propagation, EventKind::Deliver, f.sender, f.frame.seq, rx,
           ev.frame_id);
    }
  }
  if (f.pending_deliveries == 0) in_flight_.erase(it);
}

void NetSim::deliver(const Pending &ev) {
  auto it = in_flight_.find(ev.frame_id);
  InFlight &f = it->second;
  Frame frame;
  if (world_.codec_roundtrip) {
    auto decoded = decode(f.wire);
    if (!std::holds_alternative<Frame>(decoded)) throw std::logic_error("codec roundtrip failed");
    frame = std::move(std::get<Frame>(decoded));
  } else {
    frame = f.frame;
  }
  schedulers_.at(ev.receiver).on_frame_received(frame, ev.time);
  ++outcomes_[f.outcome].delivered;

  SimEvent e;
  e.time = ev.time;
  e.kind = EventKind::Deliver;
  e.node = f.sender;
  e.receiver = ev.receiver;
  e.seq = frame.seq;
  e.superframe = frame.superframe_idx;
  e.type = frame.type;
  log(e);
  if (frame.type == MsgType::Embedding) rx_log_.emplace_back(f.start, ev.receiver);
  if (cb_.on_deliver) cb_.on_deliver(ev.receiver, frame, ev.time);

  if (--f.pending_deliveries == 0) in_flight_.erase(it);
}

std::vector<NodeStats> NetSim::stats(double since, double until) const {
  std::map<NodeId, NodeStats> by_node;
  for (NodeId id : world_.nodes) by_node[id].node = id;
  for (const auto &o : outcomes_) {
    if (o.start < since || o.start >= until) continue;
    NodeStats &s = by_node[o.sender];
    if (o.type == MsgType::Embedding) ++s.frames_tx;
    if (o.collided) ++s.collisions;
    s.copies_expected += o.expected;
    s.copies_delivered += o.delivered;
  }
  for (const auto &[start, rx] : rx_log_) {
    if (start >= since && start < until) ++by_node[rx].frames_rx;
  }
  std::vector<NodeStats> out;
  for (auto &[id, s] : by_node) {
    s.loss_rate = s.copies_expected == 0
                      ? 0.0
                      : 1.0 - static_cast<double>(s.copies_delivered) /
                                  static_cast<double>(s.copies_expected);
    const auto sum = divisor_sum_.find(id);
    s.mean_divisor = (sum == divisor_sum_.end() || ticks_done_ == 0)
                         ? 1.0
                         : sum->second / static_cast<double>(ticks_done_);
    out.push_back(s);
  }
  return out;
}

NetRunResult run(const NetWorld &world, double duration, std::uint64_t seed) {
  if (!(duration > 0.0)) throw std::invalid_argument("duration must be > 0");
  NetSim sim(world, seed);
  sim.run_until(duration);
  sim.drain();
  return {sim.events(), sim.stats(), sim.divisor_trace()};
}

void write_events_jsonl(std::ostream &os, std::span<const SimEvent> events) {
  os << nlohmann::ordered_json{{"schema", kEventSchema}}.dump() << '\n';
  for (const auto &e : events) {
    nlohmann::ordered_json j;
    j["t"] = e.time;
    j["kind"] = to_string(e.kind);
    if (e.kind == EventKind::Tick) {
      j["superframe"] = e.superframe;
    } else if (e.jam) {
      j["node"] = e.node;
      j["jam"] = true;
    } else {
      j["node"] = e.node;
      j["seq"] = e.seq;
      j["superframe"] = e.superframe;
      j["type"] = e.type == MsgType::Embedding ? "embedding" : "heartbeat";
    }
    if (e.kind == EventKind::Deliver) j["rx"] = e.receiver;
    if (e.kind == EventKind::TxEnd) j["collided"] = e.collided;
    os << j.dump() << '\n';
  }
}

void write_summary_csv(std::ostream &os, std::span<const NodeStats> stats) {
  os << "# schema=" << kNetSummarySchema << '\n';
  os << "node_id,frames_tx,frames_rx,collisions,loss_rate,mean_divisor\n";
  for (const auto &s : stats) {
    os << s.node << ',' << s.frames_tx << ',' << s.frames_rx << ',' << s.collisions << ','
       << nlohmann::json(s.loss_rate).dump() << ',' << nlohmann::json(s.mean_divisor).dump()
       << '\n';
  }
}

void write_capture_line(std::ostream &os, double t, std::span<const std::uint8_t> wire) {
  nlohmann::ordered_json j;
  j["t"] = t;
  j["frame"] = bytes::base64_encode(wire);
  os << j.dump() << '\n';
}

}  // namespace covis::net
