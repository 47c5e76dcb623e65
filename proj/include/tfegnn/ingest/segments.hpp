#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "tfegnn/ingest/packet.hpp"
#include "tfegnn/ingest/pcap.hpp"

namespace tfegnn::ingest {

enum class SegmentMode { kFlow, kTimeBlock };

/// Time-ordered packets of one flow (or one time block of a flow).
struct TrafficSegment {
  std::vector<CleanPacket> packets;
  int label = -1;
  std::string origin;
  /// Packets of the flow/block with a readable 5-tuple, before any
  /// filtering or truncation. Used by the overlong filter.
  std::size_t raw_packet_count = 0;

  bool operator==(const TrafficSegment&) const = default;
};

struct IngestOptions {
  SegmentMode mode = SegmentMode::kFlow;
  double block_seconds = 60.0;
  TruncationLimits limits;
  bool verify_checksums = true;
  bool drop_retransmissions = true;
  /// Segments with more raw packets than this are anomalous.
  std::size_t max_raw_packets = 10000;
};

/// Diagnostic counters; every dropped packet or segment lands in exactly one bucket.
struct IngestCounters {
  std::size_t frames = 0;
  std::size_t unsupported_link = 0;
  std::size_t unsupported_frame = 0;
  std::size_t truncated = 0;
  std::size_t bad_checksum = 0;
  std::size_t no_payload = 0;
  std::size_t retransmission = 0;
  std::size_t over_packet_limit = 0;
  std::size_t empty_segments = 0;
  std::size_t overlong_segments = 0;

  void count(SkipReason r) {
    switch (r) {
      case SkipReason::kUnsupportedLink: ++unsupported_link; break;
      case SkipReason::kUnsupportedFrame: ++unsupported_frame; break;
      case SkipReason::kTruncated: ++truncated; break;
      case SkipReason::kBadChecksum: ++bad_checksum; break;
      case SkipReason::kNoPayload: ++no_payload; break;
      case SkipReason::kNone: break;
    }
  }

  IngestCounters& operator+=(const IngestCounters& o) {
    frames += o.frames;
    unsupported_link += o.unsupported_link;
    unsupported_frame += o.unsupported_frame;
    truncated += o.truncated;
    bad_checksum += o.bad_checksum;
    no_payload += o.no_payload;
    retransmission += o.retransmission;
    over_packet_limit += o.over_packet_limit;
    empty_segments += o.empty_segments;
    overlong_segments += o.overlong_segments;
    return *this;
  }

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"frames", frames},
            {"unsupported_link", unsupported_link},
            {"unsupported_frame", unsupported_frame},
            {"truncated", truncated},
            {"bad_checksum", bad_checksum},
            {"no_payload", no_payload},
            {"retransmission", retransmission},
            {"over_packet_limit", over_packet_limit},
            {"empty_segments", empty_segments},
            {"overlong_segments", overlong_segments}};
  }
};

/// Groups packets into bidirectional flows and, in time-block mode, splits
/// each flow into non-overlapping windows of `block_seconds` anchored at the
/// flow's first timestamp. Segments come out in order of first appearance of
/// their flow, then by block. Within a segment packets are sorted by
/// timestamp (stable, so capture order breaks ties) and truncated to the
/// first `limits.max_packets` clean packets.
///
/// TCP packets repeating an earlier (direction, seq, payload length) of
/// the same flow are treated as retransmissions and dropped.
inline std::vector<TrafficSegment> assemble_segments(std::span<const RawPacket> packets, const IngestOptions& opt,
                                                     IngestCounters* counters = nullptr,
                                                     const std::string& source = "",
                                                     std::uint32_t link_type = kLinkTypeEthernet) {
  IngestCounters local;
  IngestCounters& ctr = counters ? *counters : local;
  const DecodeOptions dopt{opt.limits, opt.verify_checksums};

  struct Member {
    double ts;
    std::size_t order;
    DecodedFrame frame;
  };
  std::map<FlowKey, std::size_t> flow_index;
  std::vector<FlowKey> flow_keys;
  std::vector<std::vector<Member>> flows;

  for (std::size_t i = 0; i < packets.size(); ++i) {
    ++ctr.frames;
    auto frame = decode_frame(packets[i], dopt, link_type);
    if (!frame.flow) {
      ctr.count(frame.skip);
      continue;
    }
    auto [it, inserted] = flow_index.emplace(*frame.flow, flows.size());
    if (inserted) {
      flows.emplace_back();
      flow_keys.push_back(*frame.flow);
    }
    flows[it->second].push_back({packets[i].timestamp, i, std::move(frame)});
  }

  std::vector<TrafficSegment> out;
  for (std::size_t f = 0; f < flows.size(); ++f) {
    auto& members = flows[f];
    std::stable_sort(members.begin(), members.end(), [](const Member& x, const Member& y) { return x.ts < y.ts; });
    const double anchor = members.front().ts;
    std::set<std::tuple<bool, std::uint32_t, std::size_t>> seen;

    std::map<std::int64_t, TrafficSegment> blocks;
    for (auto& m : members) {
      std::int64_t block = 0;
      if (opt.mode == SegmentMode::kTimeBlock) {
        block = static_cast<std::int64_t>(std::floor((m.ts - anchor) / opt.block_seconds));
      }
      auto& seg = blocks[block];
      ++seg.raw_packet_count;
      if (!m.frame.clean) {
        ctr.count(m.frame.skip);
        continue;
      }
      if (opt.drop_retransmissions && flow_keys[f].transport == Transport::kTcp) {
        if (!seen.emplace(m.frame.from_a, m.frame.tcp_seq, m.frame.payload_length).second) {
          ++ctr.retransmission;
          continue;
        }
      }
      if (seg.packets.size() >= opt.limits.max_packets) {
        ++ctr.over_packet_limit;
        continue;
      }
      seg.packets.push_back(std::move(*m.frame.clean));
    }
    for (auto& [block, seg] : blocks) {
      seg.origin = source + "#" + flow_keys[f].to_string();
      if (opt.mode == SegmentMode::kTimeBlock) seg.origin += "#" + std::to_string(block);
      out.push_back(std::move(seg));
    }
  }
  return out;
}

/// Drops segments with no clean packets and segments whose raw packet
/// count exceeds `max_raw_packets`. Retained segments are untouched.
inline std::vector<TrafficSegment> filter_anomalous(std::vector<TrafficSegment> segments, const IngestOptions& opt,
                                                    IngestCounters* counters = nullptr) {
  std::vector<TrafficSegment> kept;
  kept.reserve(segments.size());
  for (auto& s : segments) {
    if (s.packets.empty()) {
      if (counters) ++counters->empty_segments;
      continue;
    }
    if (s.raw_packet_count > opt.max_raw_packets) {
      if (counters) ++counters->overlong_segments;
      continue;
    }
    kept.push_back(std::move(s));
  }
  return kept;
}

struct CaptureResult {
  std::vector<TrafficSegment> segments;
  IngestCounters counters;
  std::vector<std::string> warnings;
};

/// parse -> assemble -> filter for one capture file.
inline CaptureResult process_capture(const std::filesystem::path& path, const IngestOptions& opt,
                                     const std::string& source_name = "") {
  auto cap = parse_capture(path);
  CaptureResult r;
  r.warnings = std::move(cap.warnings);
  auto segs = assemble_segments(cap.packets, opt, &r.counters, source_name.empty() ? path.filename().string() : source_name,
                                cap.link_type);
  r.segments = filter_anomalous(std::move(segs), opt, &r.counters);
  return r;
}

}  // namespace tfegnn::ingest
