#include <gtest/gtest.h>

#include <cstdint>
#include <vector>

#include "tfegnn/ingest/pcap.hpp"

using namespace tfegnn::ingest;

namespace {

// Byte-level fixture writer, independent of PcapWriter.
struct Fixture {
  bool big = false;
  std::vector<std::uint8_t> out;

  void u16(std::uint16_t v) {
    if (big) {
      out.push_back(v >> 8);
      out.push_back(v & 0xff);
    } else {
      out.push_back(v & 0xff);
      out.push_back(v >> 8);
    }
  }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) {
      const int shift = big ? 24 - 8 * k : 8 * k;
      out.push_back(static_cast<std::uint8_t>(v >> shift));
    }
  }
  void header(std::uint32_t magic = 0xA1B2C3D4, std::uint32_t link = 1) {
    u32(magic);
    u16(2);
    u16(4);
    u32(0);
    u32(0);
    u32(65535);
    u32(link);
  }
  void record(std::uint32_t sec, std::uint32_t frac, std::vector<std::uint8_t> data) {
    u32(sec);
    u32(frac);
    u32(static_cast<std::uint32_t>(data.size()));
    u32(static_cast<std::uint32_t>(data.size()));
    out.insert(out.end(), data.begin(), data.end());
  }
};

Fixture three_records(bool big) {
  Fixture f{big, {}};
  f.header();
  f.record(100, 500000, {1, 2, 3});
  f.record(101, 0, {4, 5});
  f.record(101, 250000, {6});
  return f;
}

}  // namespace

TEST(ParseCapture, GlobalHeaderOnlyIsEmpty) {
  Fixture f;
  f.header();
  const auto cap = parse_capture(f.out);
  EXPECT_TRUE(cap.packets.empty());
  EXPECT_TRUE(cap.warnings.empty());
  EXPECT_EQ(cap.link_type, 1u);
}

TEST(ParseCapture, ThreeRecordsInOrder) {
  const auto cap = parse_capture(three_records(false).out);
  ASSERT_EQ(cap.packets.size(), 3u);
  EXPECT_DOUBLE_EQ(cap.packets[0].timestamp, 100.5);
  EXPECT_DOUBLE_EQ(cap.packets[1].timestamp, 101.0);
  EXPECT_DOUBLE_EQ(cap.packets[2].timestamp, 101.25);
  EXPECT_EQ(cap.packets[0].link_bytes, (std::vector<std::uint8_t>{1, 2, 3}));
  EXPECT_EQ(cap.packets[1].link_bytes, (std::vector<std::uint8_t>{4, 5}));
  EXPECT_EQ(cap.packets[2].caplen(), 1u);
}

TEST(ParseCapture, ByteSwappedMagicMatchesNative) {
  const auto le = parse_capture(three_records(false).out);
  const auto be = parse_capture(three_records(true).out);
  ASSERT_EQ(le.packets.size(), be.packets.size());
  for (std::size_t i = 0; i < le.packets.size(); ++i) {
    EXPECT_EQ(le.packets[i].timestamp, be.packets[i].timestamp);
    EXPECT_EQ(le.packets[i].link_bytes, be.packets[i].link_bytes);
  }
}

TEST(ParseCapture, NanosecondMagic) {
  Fixture f;
  f.header(0xA1B23C4D);
  f.record(5, 250000000, {9});
  const auto cap = parse_capture(f.out);
  ASSERT_EQ(cap.packets.size(), 1u);
  EXPECT_DOUBLE_EQ(cap.packets[0].timestamp, 5.25);
}

TEST(ParseCapture, MalformedGlobalHeaderIsFatal) {
  std::vector<std::uint8_t> junk(24, 0x11);
  EXPECT_THROW(parse_capture(junk), PcapError);
  Fixture f;
  f.header();
  f.out.resize(10);
  EXPECT_THROW(parse_capture(f.out), PcapError);
}

TEST(ParseCapture, TruncatedRecordWarnsAndKeepsEarlier) {
  auto f = three_records(false);
  f.out.resize(f.out.size() - 1);  // last record loses its byte
  const auto cap = parse_capture(f.out);
  EXPECT_EQ(cap.packets.size(), 2u);
  EXPECT_EQ(cap.warnings.size(), 1u);
}

TEST(ParseCapture, UnsupportedLinkTypeIsReported) {
  Fixture f;
  f.header(0xA1B2C3D4, 101);
  f.record(1, 0, {0x45});
  const auto cap = parse_capture(f.out);
  EXPECT_EQ(cap.link_type, 101u);
  EXPECT_EQ(cap.packets.size(), 1u);
  EXPECT_FALSE(cap.warnings.empty());
}

TEST(PcapWriter, RoundTripsThroughParser) {
  for (bool big : {false, true}) {
    PcapWriter w(big);
    w.add(10.125, {1, 2});
    w.add(11.0, {3});
    const auto cap = parse_capture(w.bytes());
    ASSERT_EQ(cap.packets.size(), 2u);
    EXPECT_DOUBLE_EQ(cap.packets[0].timestamp, 10.125);
    EXPECT_EQ(cap.packets[1].link_bytes, std::vector<std::uint8_t>{3});
  }
}
