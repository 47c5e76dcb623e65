#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tfegnn/ingest/pcap.hpp"

namespace tfegnn::ingest {

enum class Transport : std::uint8_t { kTcp = 6, kUdp = 17 };

struct Endpoint {
  std::uint32_t address = 0;  // host order
  std::uint16_t port = 0;
  auto operator<=>(const Endpoint&) const = default;
};

/// Bidirectional 5-tuple: endpoints are stored in canonical (sorted) order,
/// so both directions of a conversation produce the same key.
struct FlowKey {
  Endpoint a;
  Endpoint b;
  Transport transport = Transport::kTcp;

  static FlowKey canonical(Endpoint src, Endpoint dst, Transport t) {
    if (dst < src) std::swap(src, dst);
    return {src, dst, t};
  }

  auto operator<=>(const FlowKey&) const = default;

  [[nodiscard]] std::string to_string() const {
    auto ep = [](const Endpoint& e) {
      return std::to_string(e.address >> 24) + "." + std::to_string((e.address >> 16) & 0xff) + "." +
             std::to_string((e.address >> 8) & 0xff) + "." + std::to_string(e.address & 0xff) + ":" +
             std::to_string(e.port);
    };
    return std::string(transport == Transport::kTcp ? "tcp" : "udp") + ":" + ep(a) + "-" + ep(b);
  }
};

/// Packet after link/IP/port excision: what the model sees.
struct CleanPacket {
  double timestamp = 0.0;
  std::vector<std::uint8_t> header_bytes;
  std::vector<std::uint8_t> payload_bytes;

  bool operator==(const CleanPacket&) const = default;
};

struct TruncationLimits {
  std::size_t max_packets = 50;
  std::size_t max_header = 40;
  std::size_t max_payload = 150;
};

enum class SkipReason {
  kNone,
  kUnsupportedLink,   // pcap link type other than Ethernet
  kUnsupportedFrame,  // non-IPv4 ethertype, IP fragment, or non-TCP/UDP protocol
  kTruncated,         // frame shorter than its declared headers
  kBadChecksum,
  kNoPayload,
};

inline const char* skip_reason_name(SkipReason r) {
  switch (r) {
    case SkipReason::kNone: return "none";
    case SkipReason::kUnsupportedLink: return "unsupported_link";
    case SkipReason::kUnsupportedFrame: return "unsupported_frame";
    case SkipReason::kTruncated: return "truncated";
    case SkipReason::kBadChecksum: return "bad_checksum";
    case SkipReason::kNoPayload: return "no_payload";
  }
  return "unknown";
}

/// Everything decoding learns about one frame. `flow` is set whenever the
/// 5-tuple could be read, even if the packet is later skipped, so that
/// payload-free packets still count toward their flow.
struct DecodedFrame {
  SkipReason skip = SkipReason::kNone;
  std::optional<FlowKey> flow;
  bool from_a = true;
  std::uint32_t tcp_seq = 0;
  std::size_t payload_length = 0;  // before truncation
  std::optional<CleanPacket> clean;
};

namespace detail {

inline std::uint16_t be16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] << 8 | p[1]); }
inline std::uint32_t be32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) << 24 | static_cast<std::uint32_t>(p[1]) << 16 |
         static_cast<std::uint32_t>(p[2]) << 8 | p[3];
}

/// One's-complement sum of 16-bit big-endian words (odd tail zero-padded).
inline std::uint32_t ones_sum(std::span<const std::uint8_t> bytes, std::uint32_t acc = 0) {
  std::size_t i = 0;
  for (; i + 1 < bytes.size(); i += 2) acc += be16(bytes.data() + i);
  if (i < bytes.size()) acc += static_cast<std::uint32_t>(bytes[i]) << 8;
  return acc;
}

inline std::uint16_t fold(std::uint32_t acc) {
  while (acc >> 16) acc = (acc & 0xffff) + (acc >> 16);
  return static_cast<std::uint16_t>(acc);
}

}  // namespace detail

/// Internet checksum as stored in IPv4/TCP/UDP headers.
inline std::uint16_t internet_checksum(std::span<const std::uint8_t> bytes, std::uint32_t seed = 0) {
  return static_cast<std::uint16_t>(~detail::fold(detail::ones_sum(bytes, seed)));
}

/// Pseudo-header contribution for TCP/UDP checksums.
inline std::uint32_t pseudo_header_sum(std::uint32_t src, std::uint32_t dst, std::uint8_t proto, std::size_t length) {
  return (src >> 16) + (src & 0xffff) + (dst >> 16) + (dst & 0xffff) + proto + static_cast<std::uint32_t>(length);
}

struct DecodeOptions {
  TruncationLimits limits;
  /// Drop packets whose nonzero IPv4/TCP/UDP checksum does not verify.
  bool verify_checksums = true;
};

/// Decodes an Ethernet II / IPv4 / TCP-or-UDP frame and produces its
/// anonymized header and payload byte sequences.
///
/// The Ethernet header is excised entirely. From the IPv4 header the 8
/// address octets (offsets 12..19) are excised; from the transport header
/// the 4 port octets (offsets 0..3). The remaining header octets, IP first,
/// form header_bytes (truncated to limits.max_header); the IP and transport
/// checksum fields are zeroed in place since they encode the excised
/// octets. The transport payload,
/// bounded by the IP total length so Ethernet padding is ignored, forms
/// payload_bytes (truncated to limits.max_payload).
inline DecodedFrame decode_frame(const RawPacket& raw, const DecodeOptions& opt = {},
                                 std::uint32_t link_type = kLinkTypeEthernet) {
  DecodedFrame out;
  if (link_type != kLinkTypeEthernet) {
    out.skip = SkipReason::kUnsupportedLink;
    return out;
  }
  const auto& f = raw.link_bytes;
  constexpr std::size_t kEth = 14;
  if (f.size() < kEth) {
    out.skip = SkipReason::kTruncated;
    return out;
  }
  if (detail::be16(f.data() + 12) != 0x0800) {
    out.skip = SkipReason::kUnsupportedFrame;
    return out;
  }
  const std::span<const std::uint8_t> ip(f.data() + kEth, f.size() - kEth);
  if (ip.size() < 20) {
    out.skip = SkipReason::kTruncated;
    return out;
  }
  if ((ip[0] >> 4) != 4) {
    out.skip = SkipReason::kUnsupportedFrame;
    return out;
  }
  const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0f) * 4;
  const std::size_t total_len = detail::be16(ip.data() + 2);
  const std::uint16_t frag = detail::be16(ip.data() + 6);
  const std::uint8_t proto = ip[9];
  if (ihl < 20 || ip.size() < ihl || total_len < ihl) {
    out.skip = SkipReason::kTruncated;
    return out;
  }
  if ((frag & 0x1fff) != 0 || (frag & 0x2000) != 0 || (proto != 6 && proto != 17)) {
    out.skip = SkipReason::kUnsupportedFrame;
    return out;
  }
  // bytes of the datagram actually present (snaplen may cut it short)
  const std::size_t ip_avail = std::min(ip.size(), total_len);
  const auto transport_bytes = ip.subspan(ihl, ip_avail - ihl);
  std::size_t thl = proto == 6 ? 20 : 8;
  if (transport_bytes.size() < thl) {
    out.skip = SkipReason::kTruncated;
    return out;
  }
  if (proto == 6) {
    thl = static_cast<std::size_t>(transport_bytes[12] >> 4) * 4;
    if (thl < 20 || transport_bytes.size() < thl) {
      out.skip = SkipReason::kTruncated;
      return out;
    }
  }

  const std::uint32_t src_ip = detail::be32(ip.data() + 12);
  const std::uint32_t dst_ip = detail::be32(ip.data() + 16);
  const Endpoint src{src_ip, detail::be16(transport_bytes.data())};
  const Endpoint dst{dst_ip, detail::be16(transport_bytes.data() + 2)};
  const auto transport = proto == 6 ? Transport::kTcp : Transport::kUdp;
  out.flow = FlowKey::canonical(src, dst, transport);
  out.from_a = out.flow->a == src;
  if (proto == 6) out.tcp_seq = detail::be32(transport_bytes.data() + 4);
  const auto payload = transport_bytes.subspan(thl);
  out.payload_length = payload.size();

  if (opt.verify_checksums) {
    const std::uint16_t ip_sum = detail::be16(ip.data() + 10);
    if (ip_sum != 0 && internet_checksum(ip.subspan(0, ihl)) != 0) {
      out.skip = SkipReason::kBadChecksum;
      return out;
    }
    // transport checksums are only checkable when the whole datagram was captured
    const std::size_t csum_off = proto == 6 ? 16 : 6;
    const std::uint16_t l4_sum = detail::be16(transport_bytes.data() + csum_off);
    if (l4_sum != 0 && ip.size() >= total_len) {
      const auto seed = pseudo_header_sum(src_ip, dst_ip, proto, transport_bytes.size());
      if (internet_checksum(transport_bytes, seed) != 0) {
        out.skip = SkipReason::kBadChecksum;
        return out;
      }
    }
  }

  if (payload.empty()) {
    out.skip = SkipReason::kNoPayload;
    return out;
  }

  CleanPacket clean;
  clean.timestamp = raw.timestamp;
  auto& hdr = clean.header_bytes;
  hdr.insert(hdr.end(), ip.begin(), ip.begin() + 12);
  hdr.insert(hdr.end(), ip.begin() + 20, ip.begin() + static_cast<std::ptrdiff_t>(ihl));
  hdr.insert(hdr.end(), transport_bytes.begin() + 4, transport_bytes.begin() + static_cast<std::ptrdiff_t>(thl));
  // checksums are functions of the excised addresses and ports
  hdr[10] = hdr[11] = 0;
  const std::size_t l4_csum = 12 + (ihl - 20) + (proto == 6 ? 12 : 2);
  hdr[l4_csum] = hdr[l4_csum + 1] = 0;
  if (hdr.size() > opt.limits.max_header) hdr.resize(opt.limits.max_header);
  const std::size_t keep = std::min(payload.size(), opt.limits.max_payload);
  clean.payload_bytes.assign(payload.begin(), payload.begin() + static_cast<std::ptrdiff_t>(keep));
  out.clean = std::move(clean);
  return out;
}

/// Clean packet for a frame, or nullopt when the frame is skipped.
inline std::optional<CleanPacket> anonymize_and_split(const RawPacket& raw, const DecodeOptions& opt = {}) {
  return decode_frame(raw, opt).clean;
}

}  // namespace tfegnn::ingest
