// SPDX-License-Identifier: Apache-2.0
#include "covis/netproto.hpp"

#include <zlib.h>

#include <algorithm>
#include <numeric>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "covis/bytes.hpp"
#include "covis/rng.hpp"

namespace covis::net {

std::string_view to_string(FrameError e) {
  switch (e) {
    case FrameError::Truncated: return "truncated";
    case FrameError::BadMagic: return "bad_magic";
    case FrameError::BadVersion: return "bad_version";
    case FrameError::BadMsgType: return "bad_msg_type";
    case FrameError::OverlongPayload: return "overlong_payload";
    case FrameError::TrailingBytes: return "trailing_bytes";
    case FrameError::BadCrc: return "bad_crc";
  }
  return "unknown";
}

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length; feed in chunks to stay in range.
  constexpr std::size_t kChunk = 1U << 30U;
  for (std::size_t off = 0; off < data.size(); off += kChunk) {
    const auto n = static_cast<uInt>(std::min(kChunk, data.size() - off));
    crc = ::crc32(crc, data.data() + off, n);
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode(const Frame &frame) {
  if (frame.payload.size() > kMaxPayload) {
    throw std::invalid_argument("frame payload of " + std::to_string(frame.payload.size()) +
                                " bytes exceeds " + std::to_string(kMaxPayload));
  }
  std::vector<std::uint8_t> out;
  out.reserve(frame.wire_size());
  out.push_back(kMagic[0]);
  out.push_back(kMagic[1]);
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(frame.type));
  bytes::put_le(out, frame.node_id);
  bytes::put_le(out, frame.seq);
  bytes::put_le(out, frame.superframe_idx);
  bytes::put_le(out, static_cast<std::uint16_t>(frame.payload.size()));
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  bytes::put_le(out, crc32(out));
  return out;
}

std::variant<Frame, FrameError> decode(std::span<const std::uint8_t> in) {
  if (in.size() < 2) return FrameError::Truncated;
  if (in[0] != kMagic[0] || in[1] != kMagic[1]) return FrameError::BadMagic;
  if (in.size() < 3) return FrameError::Truncated;
  if (in[2] != kVersion) return FrameError::BadVersion;
  if (in.size() < kHeaderBytes) return FrameError::Truncated;
  if (in[3] > static_cast<std::uint8_t>(MsgType::Heartbeat)) return FrameError::BadMsgType;
  const auto payload_len = bytes::get_le<std::uint16_t>(in, 14);
  if (payload_len > kMaxPayload) return FrameError::OverlongPayload;
  const std::size_t total = kHeaderBytes + payload_len + kCrcBytes;
  if (in.size() < total) return FrameError::Truncated;
  if (in.size() > total) return FrameError::TrailingBytes;
  const auto body = in.first(kHeaderBytes + payload_len);
  if (crc32(body) != bytes::get_le<std::uint32_t>(in, body.size())) return FrameError::BadCrc;

  Frame f;
  f.type = static_cast<MsgType>(in[3]);
  f.node_id = bytes::get_le<std::uint16_t>(in, 4);
  f.seq = bytes::get_le<std::uint32_t>(in, 6);
  f.superframe_idx = bytes::get_le<std::uint32_t>(in, 10);
  f.payload.assign(in.begin() + kHeaderBytes, in.begin() + kHeaderBytes + payload_len);
  return f;
}

std::vector<std::uint8_t> encode_heartbeat(const Heartbeat &hb) {
  if (hb.reports.size() > (kMaxPayload - 6) / 6) {
    throw std::invalid_argument("too many reception reports for one frame");
  }
  std::vector<std::uint8_t> out;
  out.reserve(6 + 6 * hb.reports.size());
  bytes::put_le(out, hb.divisor);
  bytes::put_le(out, hb.phase);
  bytes::put_le(out, static_cast<std::uint16_t>(hb.reports.size()));
  for (const auto &r : hb.reports) {
    const double clamped = std::clamp(r.loss, 0.0, 1.0);
    bytes::put_le(out, r.peer);
    bytes::put_le(out, static_cast<std::uint16_t>(std::lround(clamped * 1e4)));
    bytes::put_le(out, r.expected);
  }
  return out;
}

std::optional<Heartbeat> decode_heartbeat(std::span<const std::uint8_t> in) {
  if (in.size() < 6) return std::nullopt;
  Heartbeat hb;
  hb.divisor = bytes::get_le<std::uint16_t>(in, 0);
  hb.phase = bytes::get_le<std::uint16_t>(in, 2);
  if (hb.divisor == 0 || hb.phase >= hb.divisor) return std::nullopt;
  const auto count = bytes::get_le<std::uint16_t>(in, 4);
  if (in.size() != 6 + 6 * static_cast<std::size_t>(count)) return std::nullopt;
  hb.reports.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = 6 + 6 * i;
    const auto loss = bytes::get_le<std::uint16_t>(in, off + 2);
    if (loss > 10000) return std::nullopt;
    hb.reports.push_back({bytes::get_le<std::uint16_t>(in, off), loss * 1e-4,
                          bytes::get_le<std::uint16_t>(in, off + 4)});
  }
  return hb;
}

// --- LossEstimator ----------------------------------------------------------

void LossEstimator::on_received(NodeId peer, std::uint32_t seq, double now) {
  auto [it, inserted] = peers_.try_emplace(peer);
  History &h = it->second;
  if (inserted) {
    h.anchor = seq - 1;
  } else if (!h.rx.empty() && seq <= h.rx.back().second) {
    return;  // duplicate or reordered
  }
  h.rx.emplace_back(now, seq);
  h.last_rx = now;
  prune(h, now);
}

void LossEstimator::prune(History &h, double now) const {
  while (h.rx.size() > min_samples_ && h.rx.front().first < now - window_) {
    h.anchor = h.rx.front().second;
    h.rx.pop_front();
  }
}

std::optional<LossEstimator::Estimate> LossEstimator::estimate(NodeId peer, double now) const {
  const auto it = peers_.find(peer);
  if (it == peers_.end()) return std::nullopt;
  const History &h = it->second;
  if (now - h.last_rx > window_) {
    return Estimate{1.0, static_cast<std::uint32_t>(min_samples_)};
  }
  History pruned = h;
  prune(pruned, now);
  const std::uint32_t expected = pruned.rx.back().second - pruned.anchor;
  const double received = static_cast<double>(pruned.rx.size());
  const double loss = expected == 0 ? 0.0 : std::clamp(1.0 - received / expected, 0.0, 1.0);
  return Estimate{loss, expected};
}

std::vector<NodeId> LossEstimator::peers() const {
  std::vector<NodeId> out;
  out.reserve(peers_.size());
  for (const auto &[id, h] : peers_) out.push_back(id);
  return out;
}

// --- Scheduler --------------------------------------------------------------

void SchedulerConfig::validate() const {
  if (n_slots < 1) throw std::invalid_argument("n_slots must be >= 1");
  if (!(superframe_period > 0.0) || !std::isfinite(superframe_period)) {
    throw std::invalid_argument("superframe_period must be positive");
  }
  if (max_divisor < 1) throw std::invalid_argument("max_divisor must be >= 1");
  if (!(low_watermark >= 0.0) || !(high_watermark > low_watermark) || high_watermark > 1.0) {
    throw std::invalid_argument("watermarks must satisfy 0 <= low < high <= 1");
  }
  if (!(window > 0.0)) throw std::invalid_argument("window must be positive");
  if (min_samples < 1) throw std::invalid_argument("min_samples must be >= 1");
  if (max_probe_backoff < 0 || max_probe_backoff > 16) {
    throw std::invalid_argument("max_probe_backoff must be in [0, 16]");
  }
}

Scheduler::Scheduler(NodeId node_id, SchedulerConfig cfg, std::uint64_t seed)
    : node_id_(node_id),
      cfg_(cfg),
      rng_(substream(seed, {0x5C4EDULL, node_id})),
      estimator_(cfg.window, cfg.min_samples) {
  cfg_.validate();
}

double Scheduler::next_tx_time(double now) const {
  constexpr double kEps = 1e-9;
  const double p = cfg_.superframe_period;
  double k0 = std::ceil((now - slot_offset()) / p - kEps);
  k0 = std::max(k0, 0.0);
  auto k = static_cast<std::uint64_t>(k0);
  const auto d = static_cast<std::uint64_t>(divisor_);
  const auto ph = static_cast<std::uint64_t>(phase_);
  k += (ph + d - k % d) % d;
  return tx_time(k);
}

Frame Scheduler::make_frame(MsgType type, std::vector<std::uint8_t> payload,
                            std::uint32_t superframe, double now) {
  if (!first_tx_) first_tx_ = now;
  Frame f;
  f.type = type;
  f.node_id = node_id_;
  f.seq = seq_++;
  f.superframe_idx = superframe;
  f.payload = std::move(payload);
  if (type == MsgType::Embedding) ++sent_since_change_;
  return f;
}

void Scheduler::on_frame_received(const Frame &frame, double now) {
  if (frame.node_id == node_id_) return;
  estimator_.on_received(frame.node_id, frame.seq, now);
  if (frame.type != MsgType::Heartbeat) return;
  const auto hb = decode_heartbeat(frame.payload);
  if (!hb) return;
  if (frame.node_id % cfg_.n_slots == slot()) {
    slot_peers_[frame.node_id] = {hb->divisor, hb->phase, now};
  }
  PeerReport pr;
  pr.time = now;
  for (const auto &r : hb->reports) {
    if (r.peer != node_id_) continue;
    pr.mentions_me = true;
    pr.loss = r.loss;
    pr.expected = r.expected;
  }
  peer_reports_[frame.node_id] = pr;
}

std::optional<double> Scheduler::loss_signal(double now) const {
  std::vector<double> samples;
  if (cfg_.signal == BackoffSignal::Reported) {
    // A fresh heartbeat that omits this node means the peer has heard
    // nothing from it, once this node has been sending for a full window.
    const bool sending_long_enough = first_tx_ && now - *first_tx_ > cfg_.window;
    bool heard_any = false;
    for (const auto &[peer, r] : peer_reports_) {
      if (now - r.time > cfg_.window) continue;
      heard_any = true;
      if (r.mentions_me) {
        if (r.expected >= cfg_.min_samples) samples.push_back(r.loss);
      } else if (sending_long_enough) {
        samples.push_back(1.0);
      }
    }
    // Hearing no heartbeat at all is indistinguishable from every frame on
    // the shared slot colliding; without this, fully contended nodes never
    // learn anything and never back off.
    if (!heard_any && sending_long_enough) samples.push_back(1.0);
  } else {
    for (NodeId peer : estimator_.peers()) {
      const auto e = estimator_.estimate(peer, now);
      if (e && e->expected >= cfg_.min_samples) samples.push_back(e->loss);
    }
  }
  if (samples.empty()) return std::nullopt;
  if (cfg_.aggregate == LossAggregate::Max) {
    return *std::max_element(samples.begin(), samples.end());
  }
  double sum = 0.0;
  for (double s : samples) sum += s;
  return sum / static_cast<double>(samples.size());
}

std::vector<ReceptionReport> Scheduler::reports(double now) const {
  std::vector<ReceptionReport> out;
  for (NodeId peer : estimator_.peers()) {
    const auto e = estimator_.estimate(peer, now);
    if (!e) continue;
    const auto expected = static_cast<std::uint16_t>(
        std::min<std::uint32_t>(e->expected, std::numeric_limits<std::uint16_t>::max()));
    out.push_back({peer, e->loss, expected});
  }
  return out;
}

Heartbeat Scheduler::heartbeat(double now) const {
  return {static_cast<std::uint16_t>(divisor_), static_cast<std::uint16_t>(phase_), reports(now)};
}

bool Scheduler::phase_free(int divisor, int phase, double now) const {
  // k = phase (mod divisor) and k = s.phase (mod s.divisor) share a
  // solution iff the phases agree modulo the gcd.
  auto meets = [&](const PeerSchedule &s) {
    const int g = std::gcd(divisor, s.divisor);
    return phase % g == s.phase % g;
  };
  for (const auto &[peer, s] : slot_peers_) {
    if (now - s.time <= cfg_.window && meets(s)) return false;
  }
  for (const auto &s : lost_schedules_) {
    if (now - s.time <= kLostMemoryWindows * cfg_.window && meets(s)) return false;
  }
  return true;
}

int Scheduler::draw_phase(int divisor, double now) {
  std::vector<int> free;
  for (int p = 0; p < divisor; ++p) {
    if (phase_free(divisor, p, now)) free.push_back(p);
  }
  if (free.empty()) return std::uniform_int_distribution<int>(0, divisor - 1)(rng_);
  const auto i = std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng_);
  return free[i];
}

void Scheduler::adapt_rate(double now) {
  if (!cfg_.adaptive) return;
  const auto signal = loss_signal(now);
  if (!signal) return;
  const bool changed_before = last_change_ != Change::None;
  const double since = changed_before ? now - last_change_time_
                                      : std::numeric_limits<double>::infinity();
  if (last_change_ == Change::Decrease && since > 4.0 * cfg_.window) failed_probes_ = 0;

  // After an increase, peers' windows still hold pre-change frames: further
  // increases wait until a full window and min_samples frames were sent at
  // the new rate. A failed probe is answered at once.
  // Total loss for a full window is conclusive without further frames.
  const bool may_increase =
      last_change_ != Change::Increase ||
      (since >= cfg_.window && (sent_since_change_ >= cfg_.min_samples || *signal >= 1.0));
  if (*signal > cfg_.high_watermark && may_increase) {
    // Losing most frames means a deterministic conflict, e.g. an interferer
    // that does not advertise; its superframes are avoided like a peer's.
    if (*signal >= kLostFraction && divisor_ > 1) {
      std::erase_if(lost_schedules_, [&](const PeerSchedule &s) {
        return now - s.time > kLostMemoryWindows * cfg_.window;
      });
      lost_schedules_.push_back({divisor_, phase_, now});
    }
    const bool failed_probe = last_change_ == Change::Decrease && since < 2.0 * cfg_.window;
    if (failed_probe) {
      failed_probes_ = std::min(failed_probes_ + 1, cfg_.max_probe_backoff);
    }
    if (failed_probe && phase_free(before_probe_.divisor, before_probe_.phase, now)) {
      divisor_ = before_probe_.divisor;
      phase_ = before_probe_.phase;
    } else {
      const int next = std::min(divisor_ * 2, cfg_.max_divisor);
      int phase = -1;
      if (*signal < kLostFraction && next == 2 * divisor_) {
        // The schedule mostly works: thin it to one of its own sub-phases
        // rather than move onto superframes it has not tried.
        const int a = phase_;
        const int b = phase_ + divisor_;
        const bool fa = phase_free(next, a, now);
        const bool fb = phase_free(next, b, now);
        if (fa && fb) {
          phase = std::uniform_int_distribution<int>(0, 1)(rng_) ? b : a;
        } else if (fa || fb) {
          phase = fa ? a : b;
        }
      }
      // Otherwise a fresh phase moves this node off a superframe pattern
      // that may be shared with a contender or an interferer.
      divisor_ = next;
      phase_ = phase >= 0 ? phase : draw_phase(next, now);
    }
    last_change_ = Change::Increase;
    last_change_time_ = now;
    sent_since_change_ = 0;
    return;
  }
  const double hold = cfg_.window * std::ldexp(1.0, failed_probes_);
  if (*signal < cfg_.low_watermark && divisor_ > 1 && since >= hold) {
    // Step down by one, skipping divisors on which every phase meets a
    // same-slot peer; without a usable divisor the probe is not made.
    int next = divisor_ - 1;
    for (; next >= 1; --next) {
      bool any = false;
      for (int p = 0; p < next && !any; ++p) any = phase_free(next, p, now);
      if (any) break;
    }
    if (next < 1) return;
    int phase = phase_ % next;
    if (!phase_free(next, phase, now)) phase = draw_phase(next, now);
    before_probe_ = {divisor_, phase_, now};
    divisor_ = next;
    phase_ = phase;
    last_change_ = Change::Decrease;
    last_change_time_ = now;
    sent_since_change_ = 0;
  }
}

void Scheduler::set_divisor(int divisor, int phase) {
  if (divisor < 1 || divisor > cfg_.max_divisor) {
    throw std::invalid_argument("divisor out of range");
  }
  if (phase < 0 || phase >= divisor) throw std::invalid_argument("phase out of range");
  divisor_ = divisor;
  phase_ = phase;
}

}  // namespace covis::net
