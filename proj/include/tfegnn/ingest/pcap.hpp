#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

namespace tfegnn::ingest {

inline constexpr std::uint32_t kPcapMagicMicros = 0xA1B2C3D4;
inline constexpr std::uint32_t kPcapMagicNanos = 0xA1B23C4D;
inline constexpr std::uint32_t kLinkTypeEthernet = 1;

/// A captured frame with its capture timestamp in seconds since the epoch.
struct RawPacket {
  double timestamp = 0.0;
  std::vector<std::uint8_t> link_bytes;

  [[nodiscard]] std::size_t caplen() const { return link_bytes.size(); }
};

struct Capture {
  std::uint32_t link_type = kLinkTypeEthernet;
  std::vector<RawPacket> packets;
  /// Non-fatal problems (truncated trailing record, unsupported link type).
  std::vector<std::string> warnings;
};

class PcapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint32_t read_u32(const std::uint8_t* p, bool swapped) {
  std::uint32_t le = static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
                     static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
  if (!swapped) return le;
  return (le >> 24) | ((le >> 8) & 0xff00) | ((le << 8) & 0xff0000) | (le << 24);
}

}  // namespace detail

/// Parses a classic pcap image held in memory. The file's byte order is
/// taken from the magic number, so both endiannesses and both timestamp
/// resolutions (micro/nano) are accepted.
inline Capture parse_capture(const std::vector<std::uint8_t>& bytes, const std::string& name = "<memory>") {
  if (bytes.size() < 24) throw PcapError(name + ": missing pcap global header");
  // Magic is interpreted little-endian first; a mismatch there means the
  // writer used big-endian order.
  const std::uint32_t magic_le = detail::read_u32(bytes.data(), false);
  bool swapped = false;
  bool nanos = false;
  if (magic_le == kPcapMagicMicros || magic_le == kPcapMagicNanos) {
    nanos = magic_le == kPcapMagicNanos;
  } else {
    const std::uint32_t magic_be = detail::read_u32(bytes.data(), true);
    if (magic_be != kPcapMagicMicros && magic_be != kPcapMagicNanos) {
      throw PcapError(name + ": bad pcap magic number");
    }
    swapped = true;
    nanos = magic_be == kPcapMagicNanos;
  }

  Capture cap;
  cap.link_type = detail::read_u32(bytes.data() + 20, swapped) & 0x0fffffff;
  if (cap.link_type != kLinkTypeEthernet) {
    cap.warnings.push_back(name + ": unsupported link type " + std::to_string(cap.link_type) +
                           "; packets are read but will be skipped during decoding");
  }

  std::size_t pos = 24;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 16) {
      cap.warnings.push_back(name + ": truncated record header at offset " + std::to_string(pos));
      break;
    }
    const std::uint32_t sec = detail::read_u32(bytes.data() + pos, swapped);
    const std::uint32_t frac = detail::read_u32(bytes.data() + pos + 4, swapped);
    const std::uint32_t incl = detail::read_u32(bytes.data() + pos + 8, swapped);
    pos += 16;
    if (bytes.size() - pos < incl) {
      cap.warnings.push_back(name + ": truncated record body at offset " + std::to_string(pos - 16));
      break;
    }
    RawPacket pkt;
    pkt.timestamp = static_cast<double>(sec) + static_cast<double>(frac) * (nanos ? 1e-9 : 1e-6);
    pkt.link_bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                          bytes.begin() + static_cast<std::ptrdiff_t>(pos + incl));
    cap.packets.push_back(std::move(pkt));
    pos += incl;
  }
  return cap;
}

inline Capture parse_capture(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PcapError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_capture(bytes, path.string());
}

/// Writes classic microsecond pcap files (used by fixtures and the synthetic corpus).
class PcapWriter {
 public:
  explicit PcapWriter(bool big_endian = false, std::uint32_t link_type = kLinkTypeEthernet)
      : big_endian_(big_endian) {
    put32(kPcapMagicMicros);
    put16(2);
    put16(4);
    put32(0);  // thiszone
    put32(0);  // sigfigs
    put32(65535);
    put32(link_type);
  }

  void add(double timestamp, const std::vector<std::uint8_t>& frame) {
    const auto sec = static_cast<std::uint32_t>(timestamp);
    auto usec = static_cast<std::uint32_t>((timestamp - sec) * 1e6 + 0.5);
    put32(sec);
    put32(usec);
    put32(static_cast<std::uint32_t>(frame.size()));
    put32(static_cast<std::uint32_t>(frame.size()));
    bytes_.insert(bytes_.end(), frame.begin(), frame.end());
  }

  [[nodiscard]] const std::vector<std::uint8_t>& bytes() const { return bytes_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw PcapError("cannot write '" + path.string() + "'");
    os.write(reinterpret_cast<const char*>(bytes_.data()), static_cast<std::streamsize>(bytes_.size()));
  }

 private:
  void put16(std::uint16_t v) {
    if (big_endian_) {
      bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
      bytes_.push_back(static_cast<std::uint8_t>(v));
    } else {
      bytes_.push_back(static_cast<std::uint8_t>(v));
      bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
  }
  void put32(std::uint32_t v) {
    if (big_endian_) {
      put16(static_cast<std::uint16_t>(v >> 16));
      put16(static_cast<std::uint16_t>(v));
    } else {
      put16(static_cast<std::uint16_t>(v));
      put16(static_cast<std::uint16_t>(v >> 16));
    }
  }

  bool big_endian_;
  std::vector<std::uint8_t> bytes_;
};

}  // namespace tfegnn::ingest
