#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfegnn/ingest/dataset.hpp"
#include "tfegnn/ingest/frame_builder.hpp"
#include "tfegnn/ingest/pcap.hpp"
#include "tfegnn/util/rng.hpp"

// Synthetic corpora whose classes are separable by byte-graph structure.
//
// Class c of K owns the byte block starting at c * (256 / K); its alphabet
// is the first min(alphabet_size, 256 / K) values of that block, so K=2
// gives {0..31} and {128..159}. In conflicting mode a class draws header
// bytes from its own alphabet and payload bytes from the next class's
// alphabet, so the same byte value points to different classes depending on
// which part of the packet it appears in.
namespace tfegnn::synth {

struct SynthOptions {
  std::size_t classes = 2;
  std::size_t segments_per_class = 32;
  std::uint64_t seed = 0;
  std::size_t alphabet_size = 32;
  bool conflicting = false;
  /// Packets per segment are 1 + Geometric(p) capped at limits.max_packets.
  double packet_count_p = 0.3;
  ingest::TruncationLimits limits;

  void validate() const {
    if (classes < 2) throw std::invalid_argument("synth: need at least 2 classes");
    if (classes > 256) throw std::invalid_argument("synth: at most 256 classes");
    if (alphabet_size == 0) throw std::invalid_argument("synth: alphabet_size must be positive");
    if (!(packet_count_p > 0.0 && packet_count_p <= 1.0)) throw std::invalid_argument("synth: packet_count_p must lie in (0, 1]");
  }
};

inline std::vector<std::uint8_t> class_alphabet(std::size_t cls, std::size_t classes, std::size_t alphabet_size) {
  const std::size_t block = 256 / classes;
  const std::size_t size = std::min(alphabet_size, block);
  std::vector<std::uint8_t> out;
  for (std::size_t k = 0; k < size; ++k) out.push_back(static_cast<std::uint8_t>(cls * block + k));
  return out;
}

namespace detail {

inline std::vector<std::uint8_t> draw(util::Rng& rng, const std::vector<std::uint8_t>& alphabet, std::size_t len) {
  std::vector<std::uint8_t> out(len);
  for (auto& b : out) b = alphabet[rng.below(alphabet.size())];
  return out;
}

inline std::size_t packet_count(util::Rng& rng, const SynthOptions& opt) {
  std::size_t n = 1;
  while (n < opt.limits.max_packets && rng.uniform() >= opt.packet_count_p) ++n;
  return n;
}

/// Class-specific payload length range inside [16, max_payload].
inline std::pair<std::size_t, std::size_t> payload_range(std::size_t cls, const SynthOptions& opt) {
  const std::size_t hi_cap = std::max<std::size_t>(16, opt.limits.max_payload);
  const std::size_t lo = std::min(hi_cap, 16 + (cls * 24) % std::max<std::size_t>(1, hi_cap - 16));
  const std::size_t hi = std::min(hi_cap, lo + 64);
  return {lo, hi};
}

}  // namespace detail

/// Labelled segments written straight into dataset form, classes interleaved
/// segment by segment. Deterministic in opt.seed.
inline ingest::Dataset synthesize_dataset(const SynthOptions& opt) {
  opt.validate();
  ingest::Dataset ds;
  ds.truncation = opt.limits;
  for (std::size_t c = 0; c < opt.classes; ++c) ds.classes.push_back("class" + std::to_string(c));
  util::Rng rng(opt.seed);
  for (std::size_t i = 0; i < opt.segments_per_class; ++i) {
    for (std::size_t c = 0; c < opt.classes; ++c) {
      const auto header_alpha = class_alphabet(c, opt.classes, opt.alphabet_size);
      const auto payload_alpha =
          class_alphabet(opt.conflicting ? (c + 1) % opt.classes : c, opt.classes, opt.alphabet_size);
      const auto [plo, phi] = detail::payload_range(c, opt);
      ingest::TrafficSegment seg;
      seg.label = static_cast<int>(c);
      seg.origin = "synth#class" + std::to_string(c) + "#" + std::to_string(i);
      const std::size_t n = detail::packet_count(rng, opt);
      double ts = 1.0e9 + static_cast<double>(i) * 1000.0;
      for (std::size_t k = 0; k < n; ++k) {
        ingest::CleanPacket p;
        ts += 0.001 * static_cast<double>(1 + rng.below(1000));
        p.timestamp = ts;
        const std::size_t hmax = std::min<std::size_t>(opt.limits.max_header, 40);
        const std::size_t hlen = std::min(hmax, 20 + static_cast<std::size_t>(rng.below(21)));
        p.header_bytes = detail::draw(rng, header_alpha, hlen);
        p.payload_bytes = detail::draw(rng, payload_alpha, plo + rng.below(phi - plo + 1));
        seg.packets.push_back(std::move(p));
      }
      seg.raw_packet_count = n;
      ds.segments.push_back(std::move(seg));
    }
  }
  return ds;
}

/// Writes a capture corpus: <dir>/class<c>/capture.pcap per class, one TCP
/// flow per segment. Payload bytes follow the class alphabet; each flow also
/// carries two payload-free handshake packets. Returns the class directories.
inline std::vector<std::filesystem::path> write_capture_corpus(const std::filesystem::path& dir, const SynthOptions& opt) {
  opt.validate();
  std::vector<std::filesystem::path> class_dirs;
  util::Rng rng(opt.seed);
  for (std::size_t c = 0; c < opt.classes; ++c) {
    const auto alpha = class_alphabet(c, opt.classes, opt.alphabet_size);
    const auto [plo, phi] = detail::payload_range(c, opt);
    ingest::PcapWriter writer;
    double ts = 1.6e9;
    for (std::size_t i = 0; i < opt.segments_per_class; ++i) {
      ingest::FrameSpec spec;
      spec.src = {0x0a000000u + static_cast<std::uint32_t>(c) * 256 + 1, static_cast<std::uint16_t>(20000 + i)};
      spec.dst = {0xc0a80001u + static_cast<std::uint32_t>(c), static_cast<std::uint16_t>(443 + c)};
      spec.ttl = static_cast<std::uint8_t>(64 + 16 * c);
      std::uint32_t seq = 1000;
      spec.tcp_flags = 0x02;  // SYN, no payload
      spec.seq = seq;
      writer.add(ts, ingest::build_frame(spec));
      ts += 0.01;
      spec.tcp_flags = 0x10;
      writer.add(ts, ingest::build_frame(spec));
      const std::size_t n = detail::packet_count(rng, opt);
      for (std::size_t k = 0; k < n; ++k) {
        ts += 0.001 * static_cast<double>(1 + rng.below(100));
        spec.tcp_flags = 0x18;
        spec.seq = seq;
        spec.ip_id = static_cast<std::uint16_t>(k);
        spec.payload = detail::draw(rng, alpha, plo + rng.below(phi - plo + 1));
        seq += static_cast<std::uint32_t>(spec.payload.size());
        writer.add(ts, ingest::build_frame(spec));
      }
      ts += 1.0;
    }
    const auto cdir = dir / ("class" + std::to_string(c));
    std::filesystem::create_directories(cdir);
    writer.save(cdir / "capture.pcap");
    class_dirs.push_back(cdir);
  }
  return class_dirs;
}

}  // namespace tfegnn::synth
