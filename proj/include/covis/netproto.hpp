// SPDX-License-Identifier: Apache-2.0
//
// Broadcast frame codec and the shared-slot TDMA scheduler.
//
// Frame layout (all fields little-endian):
//
//   offset  size  field
//   0       2     magic 0x43 0x56
//   2       1     version (1)
//   3       1     msg_type (0 embedding, 1 heartbeat)
//   4       2     node_id
//   6       4     seq
//   10      4     superframe_idx
//   14      2     payload_len (<= 8192)
//   16      n     payload
//   16+n    4     CRC-32 (IEEE, reflected) over bytes [0, 16+n)
#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "covis/pose_estimate.hpp"

namespace covis::net {

inline constexpr std::array<std::uint8_t, 2> kMagic{0x43, 0x56};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 16;
inline constexpr std::size_t kCrcBytes = 4;
inline constexpr std::size_t kMaxPayload = 8192;

enum class MsgType : std::uint8_t { Embedding = 0, Heartbeat = 1 };

struct Frame {
  MsgType type = MsgType::Embedding;
  NodeId node_id = 0;
  std::uint32_t seq = 0;
  std::uint32_t superframe_idx = 0;
  std::vector<std::uint8_t> payload;

  [[nodiscard]] std::size_t wire_size() const { return kHeaderBytes + payload.size() + kCrcBytes; }
  friend bool operator==(const Frame &, const Frame &) = default;
};

enum class FrameError {
  Truncated,
  BadMagic,
  BadVersion,
  BadMsgType,
  OverlongPayload,
  TrailingBytes,
  BadCrc,
};

std::string_view to_string(FrameError e);

std::uint32_t crc32(std::span<const std::uint8_t> data);

/// Throws std::invalid_argument when the payload exceeds kMaxPayload.
std::vector<std::uint8_t> encode(const Frame &frame);

/// Total: every byte string yields either a frame or a typed error.
std::variant<Frame, FrameError> decode(std::span<const std::uint8_t> bytes);

/// One entry of a heartbeat: the sender's loss estimate for `peer` and the
/// number of expected frames behind it (saturating).
struct ReceptionReport {
  NodeId peer = 0;
  double loss = 0.0;
  std::uint16_t expected = 0;
};

/// Heartbeat payload: u16 tx_divisor, u16 phase, u16 count, then per entry
/// u16 peer, u16 loss in units of 1e-4, u16 expected.
struct Heartbeat {
  std::uint16_t divisor = 1;
  std::uint16_t phase = 0;
  std::vector<ReceptionReport> reports;
  friend bool operator==(const Heartbeat &, const Heartbeat &) = default;
};

std::vector<std::uint8_t> encode_heartbeat(const Heartbeat &hb);
/// Empty optional on malformed input.
std::optional<Heartbeat> decode_heartbeat(std::span<const std::uint8_t> payload);

/// Per-peer loss from sequence gaps over a trailing time window. At least
/// `min_samples` most recent receptions are retained even when older than
/// the window, so slow senders still get an estimate.
class LossEstimator {
 public:
  struct Estimate {
    double loss = 0.0;
    std::uint32_t expected = 0;
  };

  LossEstimator(double window_s, std::size_t min_samples)
      : window_(window_s), min_samples_(min_samples) {}

  void on_received(NodeId peer, std::uint32_t seq, double now);

  /// A known peer that has been silent for longer than the window reports
  /// full loss. Unknown peers yield nothing.
  [[nodiscard]] std::optional<Estimate> estimate(NodeId peer, double now) const;
  [[nodiscard]] std::vector<NodeId> peers() const;

 private:
  struct History {
    std::deque<std::pair<double, std::uint32_t>> rx;  // (time, seq)
    std::uint32_t anchor = 0;  // last seq known to precede the retained span
    double last_rx = 0.0;
  };
  void prune(History &h, double now) const;

  double window_;
  std::size_t min_samples_;
  std::map<NodeId, History> peers_;
};

enum class BackoffSignal {
  Reported,  // peers' reception reports about this node's frames
  Observed,  // this node's own loss estimates of its peers' frames
};

enum class LossAggregate { Max, Mean };

struct SchedulerConfig {
  int n_slots = 4;
  double superframe_period = 1.0 / 15.0;  // s
  int max_divisor = 8;
  double high_watermark = 0.10;
  double low_watermark = 0.05;
  double window = 2.0;  // s
  std::size_t min_samples = 30;  // one window of frames at the undivided rate
  /// Decrease hold doubles after each failed probe, up to 2^this.
  int max_probe_backoff = 4;
  bool adaptive = true;  // false pins tx_divisor at its current value
  BackoffSignal signal = BackoffSignal::Reported;
  LossAggregate aggregate = LossAggregate::Max;

  void validate() const;
  [[nodiscard]] double slot_width() const { return superframe_period / n_slots; }
};

/// Single-owner TDMA state of one node. The node transmits in slot
/// node_id mod n_slots of every superframe k with k mod tx_divisor == phase.
///
/// Heartbeats advertise (tx_divisor, phase). New phases avoid the fresh
/// advertised schedules of same-slot peers and this node's own recent
/// schedules that lost most frames, where possible. A decrease is skipped
/// when every phase of the smaller divisor meets such a schedule, and a
/// decrease that fails returns to the schedule it left.
class Scheduler {
 public:
  Scheduler(NodeId node_id, SchedulerConfig cfg, std::uint64_t seed = 0);

  [[nodiscard]] NodeId node_id() const { return node_id_; }
  [[nodiscard]] const SchedulerConfig &config() const { return cfg_; }
  [[nodiscard]] int slot() const { return node_id_ % cfg_.n_slots; }
  [[nodiscard]] double slot_offset() const { return slot() * cfg_.slot_width(); }
  [[nodiscard]] int tx_divisor() const { return divisor_; }
  [[nodiscard]] int phase() const { return phase_; }

  [[nodiscard]] bool transmits_in(std::uint64_t superframe) const {
    return static_cast<int>(superframe % static_cast<std::uint64_t>(divisor_)) == phase_;
  }
  /// Earliest transmit instant >= now.
  [[nodiscard]] double next_tx_time(double now) const;
  [[nodiscard]] double tx_time(std::uint64_t superframe) const {
    return static_cast<double>(superframe) * cfg_.superframe_period + slot_offset();
  }

  /// Stamps node id, sequence number and superframe index.
  Frame make_frame(MsgType type, std::vector<std::uint8_t> payload, std::uint32_t superframe,
                   double now);

  void on_frame_received(const Frame &frame, double now);
  /// AIMD step; the owner calls it once per superframe.
  void adapt_rate(double now);

  /// Aggregated loss driving adapt_rate, if enough data exists. Under the
  /// Reported signal, silence counts as total loss once this node has been
  /// sending for a window: from a peer whose fresh heartbeat omits it, or
  /// from everyone when no fresh heartbeat arrives at all.
  [[nodiscard]] std::optional<double> loss_signal(double now) const;
  /// This node's view of its peers, as carried in heartbeats.
  [[nodiscard]] std::vector<ReceptionReport> reports(double now) const;
  [[nodiscard]] Heartbeat heartbeat(double now) const;
  /// False when a fresh same-slot peer schedule or a recently lost own
  /// schedule shares a superframe with (divisor, phase).
  [[nodiscard]] bool phase_free(int divisor, int phase, double now) const;
  [[nodiscard]] const LossEstimator &loss_estimator() const { return estimator_; }

  /// Overrides the backoff state (tests and manual tuning).
  void set_divisor(int divisor, int phase);

 private:
  enum class Change { None, Increase, Decrease };
  static constexpr double kLostFraction = 0.5;
  static constexpr double kLostMemoryWindows = 8.0;
  struct PeerSchedule {
    int divisor = 1;
    int phase = 0;
    double time = 0.0;
  };
  [[nodiscard]] int draw_phase(int divisor, double now);
  struct PeerReport {
    double loss = 0.0;
    std::uint16_t expected = 0;
    bool mentions_me = false;
    double time = 0.0;
  };

  NodeId node_id_;
  SchedulerConfig cfg_;
  std::mt19937_64 rng_;
  int divisor_ = 1;
  int phase_ = 0;
  std::uint32_t seq_ = 0;
  std::optional<double> first_tx_;
  Change last_change_ = Change::None;
  double last_change_time_ = 0.0;
  int failed_probes_ = 0;
  std::size_t sent_since_change_ = 0;  // embedding frames
  LossEstimator estimator_;
  std::map<NodeId, PeerReport> peer_reports_;
  std::map<NodeId, PeerSchedule> slot_peers_;
  std::vector<PeerSchedule> lost_schedules_;
  PeerSchedule before_probe_;
};

}  // namespace covis::net
