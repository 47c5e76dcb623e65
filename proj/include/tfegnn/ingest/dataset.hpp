#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfegnn/ingest/segments.hpp"
#include "tfegnn/util/hex.hpp"

// JSON-lines dataset. Line 1 is metadata:
//   {"format_version":1,"truncation":{"packets":50,"header":40,"payload":150},"classes":[...]}
// Every following line is one labelled segment:
//   {"label":0,"origin":"...","raw_count":12,"packets":[{"ts":1.5,"header":"45..","payload":"17.."}]}
namespace tfegnn::ingest {

inline constexpr int kDatasetFormatVersion = 1;

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  TruncationLimits truncation;
  std::vector<std::string> classes;
  std::vector<TrafficSegment> segments;

  [[nodiscard]] std::size_t num_classes() const { return classes.size(); }
};

inline nlohmann::ordered_json segment_to_json(const TrafficSegment& s) {
  nlohmann::ordered_json pkts = nlohmann::ordered_json::array();
  for (const auto& p : s.packets) {
    pkts.push_back({{"ts", p.timestamp}, {"header", util::to_hex(p.header_bytes)}, {"payload", util::to_hex(p.payload_bytes)}});
  }
  return {{"label", s.label}, {"origin", s.origin}, {"raw_count", s.raw_packet_count}, {"packets", std::move(pkts)}};
}

inline TrafficSegment segment_from_json(const nlohmann::json& j) {
  TrafficSegment s;
  s.label = j.at("label").get<int>();
  s.origin = j.value("origin", "");
  for (const auto& p : j.at("packets")) {
    CleanPacket c;
    c.timestamp = p.at("ts").get<double>();
    c.header_bytes = util::from_hex(p.at("header").get<std::string>());
    c.payload_bytes = util::from_hex(p.at("payload").get<std::string>());
    s.packets.push_back(std::move(c));
  }
  s.raw_packet_count = j.value("raw_count", s.packets.size());
  return s;
}

inline void write_dataset(std::ostream& os, const Dataset& ds) {
  nlohmann::ordered_json meta = {
      {"format_version", kDatasetFormatVersion},
      {"truncation",
       {{"packets", ds.truncation.max_packets}, {"header", ds.truncation.max_header}, {"payload", ds.truncation.max_payload}}},
      {"classes", ds.classes}};
  os << meta.dump() << '\n';
  for (const auto& s : ds.segments) os << segment_to_json(s).dump() << '\n';
}

inline void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DatasetError("cannot write dataset '" + path.string() + "'");
  write_dataset(os, ds);
}

/// Reads and validates a dataset: labels must index `classes`, every packet
/// must respect the recorded truncation limits and carry a payload.
inline Dataset read_dataset(std::istream& is, const std::string& name = "<stream>") {
  Dataset ds;
  std::string line;
  if (!std::getline(is, line)) throw DatasetError(name + ": empty dataset file");
  try {
    const auto meta = nlohmann::json::parse(line);
    if (meta.at("format_version").get<int>() != kDatasetFormatVersion) {
      throw DatasetError(name + ": unsupported format_version");
    }
    const auto& t = meta.at("truncation");
    ds.truncation = {t.at("packets").get<std::size_t>(), t.at("header").get<std::size_t>(), t.at("payload").get<std::size_t>()};
    ds.classes = meta.value("classes", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(name + ": bad metadata line: " + e.what());
  }
  std::size_t lineno = 1;
  int max_label = -1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    TrafficSegment s;
    try {
      s = segment_from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw DatasetError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (s.label < 0) throw DatasetError(name + ":" + std::to_string(lineno) + ": negative label");
    if (s.packets.empty() || s.packets.size() > ds.truncation.max_packets) {
      throw DatasetError(name + ":" + std::to_string(lineno) + ": packet count outside [1, " +
                         std::to_string(ds.truncation.max_packets) + "]");
    }
    for (const auto& p : s.packets) {
      if (p.payload_bytes.empty() || p.payload_bytes.size() > ds.truncation.max_payload ||
          p.header_bytes.size() > ds.truncation.max_header) {
        throw DatasetError(name + ":" + std::to_string(lineno) + ": packet violates truncation limits");
      }
    }
    max_label = std::max(max_label, s.label);
    ds.segments.push_back(std::move(s));
  }
  if (ds.classes.empty()) {
    for (int c = 0; c <= max_label; ++c) ds.classes.push_back(std::to_string(c));
  } else if (max_label >= static_cast<int>(ds.classes.size())) {
    throw DatasetError(name + ": label " + std::to_string(max_label) + " has no class name");
  }
  return ds;
}

inline Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open dataset '" + path.string() + "'");
  return read_dataset(is, path.string());
}

}  // namespace tfegnn::ingest
