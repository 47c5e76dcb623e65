#pragma once

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfegnn/autodiff/tensor.hpp"

// Checkpoint layout:
//   8 bytes   magic "TFECKPT1"
//   8 bytes   manifest length L (little-endian uint64)
//   L bytes   JSON manifest {"format_version":1,"tensors":[{name,shape,trainable,offset,count}]}
//   ...       float64 payload, little-endian, tensors back to back; offset/count in doubles
namespace tfegnn::ad {

inline constexpr char kCheckpointMagic[8] = {'T', 'F', 'E', 'C', 'K', 'P', 'T', '1'};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) throw CheckpointError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path) {
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : store) {
    tensors.push_back({{"name", p->name},
                       {"shape", p->value.shape()},
                       {"trainable", p->trainable},
                       {"offset", offset},
                       {"count", p->value.size()}});
    offset += p->value.size();
  }
  const std::string manifest = nlohmann::json{{"format_version", 1}, {"tensors", tensors}}.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u64(os, manifest.size());
  os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  for (const auto& p : store) {
    for (double v : p->value.values()) detail::put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw CheckpointError("write failed for '" + path.string() + "'");
}

/// Reads every tensor of a checkpoint into a fresh store, in file order.
inline ParameterStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw CheckpointError("'" + path.string() + "' is not a checkpoint file");
  }
  const std::uint64_t len = detail::get_u64(is);
  std::string manifest_text(len, '\0');
  if (!is.read(manifest_text.data(), static_cast<std::streamsize>(len))) throw CheckpointError("checkpoint truncated");
  const auto manifest = nlohmann::json::parse(manifest_text);
  if (manifest.at("format_version").get<int>() != 1) throw CheckpointError("unsupported checkpoint version");

  ParameterStore store;
  std::uint64_t expected_offset = 0;
  for (const auto& entry : manifest.at("tensors")) {
    const auto shape = entry.at("shape").get<Shape>();
    const auto count = entry.at("count").get<std::uint64_t>();
    if (entry.at("offset").get<std::uint64_t>() != expected_offset || shape_numel(shape) != count) {
      throw CheckpointError("inconsistent manifest entry for '" + entry.at("name").get<std::string>() + "'");
    }
    std::vector<double> data(count);
    for (auto& v : data) v = std::bit_cast<double>(detail::get_u64(is));
    store.add(entry.at("name").get<std::string>(), Tensor(shape, std::move(data)), entry.at("trainable").get<bool>());
    expected_offset += count;
  }
  return store;
}

/// Copies checkpoint values into an existing store. Every name must be
/// present on both sides with identical shapes; nothing is modified on mismatch.
inline void restore_checkpoint(ParameterStore& target, const std::filesystem::path& path) {
  auto loaded = load_checkpoint(path);
  if (loaded.size() != target.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(loaded.size()) + " tensors, model expects " +
                          std::to_string(target.size()));
  }
  for (const auto& p : loaded) {
    if (!target.contains(p->name)) throw CheckpointError("unexpected tensor '" + p->name + "' in checkpoint");
    const auto& t = target.get(p->name);
    if (t.value.shape() != p->value.shape()) {
      throw CheckpointError("shape mismatch for '" + p->name + "': checkpoint " + shape_str(p->value.shape()) +
                            " vs model " + shape_str(t.value.shape()));
    }
  }
  for (const auto& p : loaded) target.get(p->name).value = p->value;
}

}  // namespace tfegnn::ad
