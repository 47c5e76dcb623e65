#pragma once

#include <cstdint>
#include <vector>

#include "tfegnn/ingest/packet.hpp"

namespace tfegnn::ingest {

/// Description of a synthetic Ethernet/IPv4/TCP-or-UDP frame.
struct FrameSpec {
  Endpoint src{0x0a000001, 40000};
  Endpoint dst{0x0a000002, 443};
  Transport transport = Transport::kTcp;
  std::uint32_t seq = 1;
  std::uint32_t ack = 0;
  std::uint8_t tcp_flags = 0x18;  // PSH|ACK
  std::uint16_t ip_id = 0;
  std::uint8_t ttl = 64;
  std::vector<std::uint8_t> ip_options;   // multiple of 4 bytes
  std::vector<std::uint8_t> tcp_options;  // multiple of 4 bytes
  std::vector<std::uint8_t> payload;
  bool fill_checksums = true;
};

/// Serializes a frame with correct IPv4 and transport checksums.
inline std::vector<std::uint8_t> build_frame(const FrameSpec& s) {
  std::vector<std::uint8_t> f;
  auto put16 = [&f](std::uint16_t v) {
    f.push_back(static_cast<std::uint8_t>(v >> 8));
    f.push_back(static_cast<std::uint8_t>(v));
  };
  auto put32 = [&](std::uint32_t v) {
    put16(static_cast<std::uint16_t>(v >> 16));
    put16(static_cast<std::uint16_t>(v));
  };
  auto set16 = [&f](std::size_t at, std::uint16_t v) {
    f[at] = static_cast<std::uint8_t>(v >> 8);
    f[at + 1] = static_cast<std::uint8_t>(v);
  };

  // Ethernet II
  for (int i = 0; i < 6; ++i) f.push_back(0x02);
  for (int i = 0; i < 6; ++i) f.push_back(0x04);
  put16(0x0800);

  const std::size_t ip_at = f.size();
  const std::size_t ihl = 20 + s.ip_options.size();
  const bool tcp = s.transport == Transport::kTcp;
  const std::size_t thl = tcp ? 20 + s.tcp_options.size() : 8;
  const std::size_t total = ihl + thl + s.payload.size();
  f.push_back(static_cast<std::uint8_t>(0x40 | (ihl / 4)));
  f.push_back(0);
  put16(static_cast<std::uint16_t>(total));
  put16(s.ip_id);
  put16(0x4000);  // DF
  f.push_back(s.ttl);
  f.push_back(static_cast<std::uint8_t>(s.transport));
  put16(0);
  put32(s.src.address);
  put32(s.dst.address);
  f.insert(f.end(), s.ip_options.begin(), s.ip_options.end());

  const std::size_t l4_at = f.size();
  put16(s.src.port);
  put16(s.dst.port);
  if (tcp) {
    put32(s.seq);
    put32(s.ack);
    f.push_back(static_cast<std::uint8_t>((thl / 4) << 4));
    f.push_back(s.tcp_flags);
    put16(65535);
    put16(0);
    put16(0);
    f.insert(f.end(), s.tcp_options.begin(), s.tcp_options.end());
  } else {
    put16(static_cast<std::uint16_t>(thl + s.payload.size()));
    put16(0);
  }
  f.insert(f.end(), s.payload.begin(), s.payload.end());

  if (s.fill_checksums) {
    set16(ip_at + 10, internet_checksum(std::span(f).subspan(ip_at, ihl)));
    const auto seed = pseudo_header_sum(s.src.address, s.dst.address, static_cast<std::uint8_t>(s.transport),
                                        f.size() - l4_at);
    std::uint16_t sum = internet_checksum(std::span(f).subspan(l4_at), seed);
    if (!tcp && sum == 0) sum = 0xffff;
    set16(l4_at + (tcp ? 16 : 6), sum);
  }
  return f;
}

}  // namespace tfegnn::ingest
