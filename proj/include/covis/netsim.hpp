// SPDX-License-Identifier: Apache-2.0
//
// Deterministic discrete-event simulation of a shared broadcast medium.
// Overlapping transmissions destroy each other at every receiver; otherwise
// each receiver drops a copy independently.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "covis/netproto.hpp"

namespace covis::net {

struct Medium {
  double bitrate = 6e6;  // bit/s
  double base_loss = 0.03;
  double loss_slope = 0.01;  // per node beyond two
  double propagation = 0.0;  // s

  void validate() const;
  [[nodiscard]] double airtime(std::size_t frame_bytes) const {
    return static_cast<double>(frame_bytes) * 8.0 / bitrate;
  }
};

/// min(0.5, base + slope * max(0, n - 2)).
double loss_probability(const Medium &medium, std::size_t n_nodes);

// Declaration order is the tiebreak rank at equal times: a transmission
// ending at t frees the medium before one starting at t, and deliveries at
// t are visible to the tick at t.
enum class EventKind : std::uint8_t { TxEnd = 0, Deliver = 1, Tick = 2, TxStart = 3 };

std::string_view to_string(EventKind k);

inline constexpr NodeId kNoNode = 0xFFFF;

struct SimEvent {
  double time = 0.0;
  EventKind kind = EventKind::Tick;
  NodeId node = kNoNode;      // sender; kNoNode for ticks
  NodeId receiver = kNoNode;  // Deliver only
  std::uint32_t seq = 0;
  std::uint64_t superframe = 0;
  bool jam = false;
  MsgType type = MsgType::Embedding;
  bool collided = false;  // TxEnd only

  friend bool operator==(const SimEvent &, const SimEvent &) = default;
};

/// Periodic interferer. It occupies `duty` of each listed slot (all slots
/// when empty) in superframes k with k mod every == phase. It is not a
/// protocol participant and never counts towards n_nodes.
struct JammerSpec {
  NodeId id = 0xFF00;
  std::vector<int> slots;
  std::uint32_t every = 2;
  std::uint32_t phase = 1;
  double duty = 1.0;
  double start = 0.0;
  double stop = std::numeric_limits<double>::infinity();
};

struct NetWorld {
  Medium medium;
  SchedulerConfig scheduler;
  std::vector<NodeId> nodes;
  std::vector<JammerSpec> jammers;
  std::size_t payload_bytes = 6144;
  /// Each transmission is followed in the same slot by a heartbeat carrying
  /// reception reports.
  bool heartbeats = true;
  /// Deliveries go through encode/decode of the wire bytes.
  bool codec_roundtrip = true;
  bool record_events = true;
  /// Replaces loss_probability when set (ablations such as total blackout).
  std::optional<double> loss_override;

  void validate() const;
};

struct NodeStats {
  NodeId node = 0;
  std::uint64_t frames_tx = 0;  // embedding frames offered
  std::uint64_t frames_rx = 0;  // embedding frames received from peers
  std::uint64_t collisions = 0;  // own frames lost to overlap
  std::uint64_t copies_expected = 0;
  std::uint64_t copies_delivered = 0;
  double loss_rate = 0.0;  // 1 - delivered / expected over own frames
  double mean_divisor = 1.0;
};

struct DivisorChange {
  double time = 0.0;
  NodeId node = 0;
  int divisor = 1;
  int phase = 0;
};

struct NetCallbacks {
  /// Embedding payload for a node's transmission in a superframe; zeros of
  /// world.payload_bytes when unset.
  std::function<std::vector<std::uint8_t>(NodeId, std::uint64_t)> payload;
  /// Runs at each tick before nodes schedule their transmissions.
  std::function<void(std::uint64_t superframe, double t)> on_tick;
  std::function<void(NodeId receiver, const Frame &frame, double t)> on_deliver;
  /// Wire bytes of every protocol frame at its TxStart.
  std::function<void(double t, std::span<const std::uint8_t> wire)> on_capture;
};

class NetSim {
 public:
  NetSim(NetWorld world, std::uint64_t seed, NetCallbacks callbacks = {});

  /// Processes ticks at k * period < t_end and every event they cause that
  /// falls before t_end.
  void run_until(double t_end);
  /// Processes all pending events; no new ticks.
  void drain();

  [[nodiscard]] double now() const { return now_; }
  [[nodiscard]] const NetWorld &world() const { return world_; }
  [[nodiscard]] const std::vector<SimEvent> &events() const { return events_; }
  [[nodiscard]] const std::vector<DivisorChange> &divisor_trace() const { return divisor_trace_; }
  [[nodiscard]] const Scheduler &scheduler(NodeId node) const;
  /// Counts frames whose TxStart lies in [since, until).
  [[nodiscard]] std::vector<NodeStats> stats(
      double since = 0.0, double until = std::numeric_limits<double>::infinity()) const;
  [[nodiscard]] double loss_probability() const;

 private:
  struct Pending {
    double time;
    EventKind kind;
    NodeId node;
    std::uint32_t seq;
    NodeId receiver;
    std::uint64_t order;  // insertion counter, last tiebreak
    std::uint64_t frame_id;
  };
  struct Later {
    bool operator()(const Pending &a, const Pending &b) const;
  };
  struct InFlight {
    Frame frame;
    std::vector<std::uint8_t> wire;
    NodeId sender = kNoNode;
    bool jam = false;
    bool collided = false;
    double start = 0.0;
    double end = 0.0;
    int pending_deliveries = 0;
    std::size_t outcome = 0;
  };
  struct Outcome {
    double start;
    NodeId sender;
    MsgType type;
    bool collided;
    std::uint16_t expected;
    std::uint16_t delivered;
  };

  void push(double time, EventKind kind, NodeId node, std::uint32_t seq, NodeId receiver,
            std::uint64_t frame_id);
  void process(const Pending &ev);
  void on_tick(std::uint64_t k, double t);
  void start_tx(const Pending &ev);
  void end_tx(const Pending &ev);
  void deliver(const Pending &ev);
  void log(const SimEvent &e);
  std::uint64_t queue_frame(InFlight f, double start);

  NetWorld world_;
  NetCallbacks cb_;
  std::mt19937_64 rng_;
  std::map<NodeId, Scheduler> schedulers_;
  std::map<NodeId, double> divisor_sum_;
  std::priority_queue<Pending, std::vector<Pending>, Later> queue_;
  std::map<std::uint64_t, InFlight> in_flight_;
  std::vector<std::uint64_t> active_;
  std::vector<Outcome> outcomes_;
  std::vector<std::pair<double, NodeId>> rx_log_;  // (frame start, receiver), embeddings
  std::vector<SimEvent> events_;
  std::vector<DivisorChange> divisor_trace_;
  std::uint64_t next_order_ = 0;
  std::uint64_t next_frame_ = 0;
  std::uint64_t next_tick_ = 0;
  std::uint64_t ticks_done_ = 0;
  double now_ = 0.0;
};

struct NetRunResult {
  std::vector<SimEvent> events;
  std::vector<NodeStats> stats;
  std::vector<DivisorChange> divisor_trace;
};

/// Pure function of (world, duration, seed).
NetRunResult run(const NetWorld &world, double duration, std::uint64_t seed);

inline constexpr std::string_view kEventSchema = "covis.netsim.event/1";
inline constexpr std::string_view kNetSummarySchema = "covis.netsim.summary/1";
inline constexpr std::string_view kCaptureSchema = "covis.capture/1";

void write_events_jsonl(std::ostream &os, std::span<const SimEvent> events);
void write_summary_csv(std::ostream &os, std::span<const NodeStats> stats);
void write_capture_line(std::ostream &os, double t, std::span<const std::uint8_t> wire);

}  // namespace covis::net
