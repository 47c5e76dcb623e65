#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bitset>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tfegnn/autodiff/ops.hpp"
#include "tfegnn/ingest/packet.hpp"

namespace tfegnn::graph {

inline constexpr std::size_t kDefaultWindow = 5;

/// Sliding-window co-occurrence counts over a byte sequence.
///
/// Windows have a fixed size and stride 1; a sequence no longer than the
/// window forms exactly one window. A window counts toward single_counts[v]
/// once if it contains v at all, and toward pair_counts[{i,j}] once if it
/// contains both i != j.
struct CooccurrenceStats {
  std::size_t window_size = 0;
  std::uint64_t num_windows = 0;
  std::array<std::uint64_t, 256> single_counts{};
  /// Keyed by (min, max) of the unordered pair.
  std::map<std::pair<std::uint8_t, std::uint8_t>, std::uint64_t> pair_counts;

  [[nodiscard]] std::uint64_t pair(std::uint8_t i, std::uint8_t j) const {
    if (i > j) std::swap(i, j);
    auto it = pair_counts.find({i, j});
    return it == pair_counts.end() ? 0 : it->second;
  }
};

inline CooccurrenceStats count_cooccurrence(std::span<const std::uint8_t> seq, std::size_t window) {
  if (seq.empty()) throw std::invalid_argument("count_cooccurrence: empty byte sequence");
  if (window < 2) throw std::invalid_argument("count_cooccurrence: window must be at least 2");
  CooccurrenceStats st;
  st.window_size = window;
  const std::size_t windows = seq.size() <= window ? 1 : seq.size() - window + 1;
  st.num_windows = windows;
  std::vector<std::uint8_t> present;
  for (std::size_t w = 0; w < windows; ++w) {
    std::bitset<256> seen;
    present.clear();
    const std::size_t end = std::min(seq.size(), w + window);
    for (std::size_t k = w; k < end; ++k) {
      if (!seen.test(seq[k])) {
        seen.set(seq[k]);
        present.push_back(seq[k]);
      }
    }
    std::sort(present.begin(), present.end());
    for (std::size_t a = 0; a < present.size(); ++a) {
      ++st.single_counts[present[a]];
      for (std::size_t b = a + 1; b < present.size(); ++b) ++st.pair_counts[{present[a], present[b]}];
    }
  }
  return st;
}

/// ln(p(i,j) / (p(i) p(j))) with probabilities over windows, or -infinity
/// when i and j never share a window.
inline double pmi(const CooccurrenceStats& st, std::uint8_t i, std::uint8_t j) {
  if (i == j) throw std::invalid_argument("pmi: byte values must differ (graphs have no self-loops)");
  if (st.single_counts[i] == 0 || st.single_counts[j] == 0) {
    throw std::invalid_argument("pmi: byte value not observed in the sequence");
  }
  const std::uint64_t joint = st.pair(i, j);
  if (joint == 0) return -std::numeric_limits<double>::infinity();
  // #W(i,j)·#W / (#W(i)·#W(j)) is the same ratio with exact integer products
  const double ratio = static_cast<double>(joint) * static_cast<double>(st.num_windows) /
                       (static_cast<double>(st.single_counts[i]) * static_cast<double>(st.single_counts[j]));
  return std::log(ratio);
}

/// True when PMI(i, j) > 0, decided on exact integer counts.
inline bool positive_pmi(const CooccurrenceStats& st, std::uint8_t i, std::uint8_t j) {
  const std::uint64_t joint = st.pair(i, j);
  return joint > 0 && joint * st.num_windows > st.single_counts[i] * st.single_counts[j];
}

enum class GraphKind { kHeader, kPayload };

inline const char* kind_name(GraphKind k) { return k == GraphKind::kHeader ? "header" : "payload"; }

/// Undirected graph over the distinct byte values of one packet part.
/// `nodes` holds each node's feature (its byte value), ascending;
/// `adjacency` is a dense symmetric 0/1 matrix with zero diagonal.
struct ByteGraph {
  GraphKind kind = GraphKind::kPayload;
  std::vector<int> nodes;
  std::vector<std::uint8_t> adjacency;

  [[nodiscard]] std::size_t num_nodes() const { return nodes.size(); }
  [[nodiscard]] bool edge(std::size_t u, std::size_t v) const { return adjacency[u * nodes.size() + v] != 0; }

  void set_edge(std::size_t u, std::size_t v) {
    adjacency[u * nodes.size() + v] = 1;
    adjacency[v * nodes.size() + u] = 1;
  }

  [[nodiscard]] std::size_t num_edges() const {
    std::size_t e = 0;
    for (std::size_t u = 0; u < nodes.size(); ++u) {
      for (std::size_t v = u + 1; v < nodes.size(); ++v) e += edge(u, v);
    }
    return e;
  }

  /// Edges as (u, v) node-index pairs with u < v.
  [[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t u = 0; u < nodes.size(); ++u) {
      for (std::size_t v = u + 1; v < nodes.size(); ++v) {
        if (edge(u, v)) out.emplace_back(u, v);
      }
    }
    return out;
  }

  [[nodiscard]] ad::NeighborLists neighbor_lists() const {
    ad::NeighborLists nb(nodes.size());
    for (std::size_t u = 0; u < nodes.size(); ++u) {
      for (std::size_t v = 0; v < nodes.size(); ++v) {
        if (edge(u, v)) nb[u].push_back(v);
      }
    }
    return nb;
  }

  bool operator==(const ByteGraph&) const = default;
};

/// Graph used when a header is empty after excision: a single node of value 0.
inline ByteGraph null_graph(GraphKind kind) { return ByteGraph{kind, {0}, {0}}; }

/// Same counts as count_cooccurrence, kept in flat per-node arrays.
inline ByteGraph build_graph(std::span<const std::uint8_t> seq, std::size_t window, GraphKind kind) {
  if (seq.empty()) throw std::invalid_argument("build_graph: empty byte sequence");
  if (window < 2) throw std::invalid_argument("build_graph: window must be at least 2");
  ByteGraph g;
  g.kind = kind;
  std::bitset<256> seen;
  g.nodes.reserve(std::min<std::size_t>(seq.size(), 256));
  for (auto b : seq) {
    if (!seen.test(b)) {
      seen.set(b);
      g.nodes.push_back(b);
    }
  }
  std::sort(g.nodes.begin(), g.nodes.end());
  const std::size_t n = g.nodes.size();
  std::array<std::uint32_t, 256> index;  // read only at values present in seq
  for (std::size_t k = 0; k < n; ++k) index[g.nodes[k]] = static_cast<std::uint32_t>(k);

  const std::size_t windows = seq.size() <= window ? 1 : seq.size() - window + 1;
  // [single n][joint n*n][stamp n][present n]
  std::vector<std::uint64_t> counts(3 * n + n * n, 0);
  std::uint64_t* single = counts.data();
  std::uint64_t* joint = single + n;
  std::uint64_t* stamp = joint + n * n;
  std::uint64_t* present = stamp + n;
  for (std::size_t w = 0; w < windows; ++w) {
    std::size_t m = 0;
    const std::size_t end = std::min(seq.size(), w + window);
    for (std::size_t k = w; k < end; ++k) {
      const auto u = index[seq[k]];
      if (stamp[u] != w + 1) {
        stamp[u] = w + 1;
        present[m++] = u;
      }
    }
    for (std::size_t a = 0; a < m; ++a) {
      ++single[present[a]];
      for (std::size_t b = a + 1; b < m; ++b) {
        const auto lo = std::min(present[a], present[b]);
        const auto hi = std::max(present[a], present[b]);
        ++joint[lo * n + hi];
      }
    }
  }
  g.adjacency.assign(n * n, 0);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const auto j = joint[u * n + v];
      if (j > 0 && j * windows > single[u] * single[v]) g.set_edge(u, v);
    }
  }
  return g;
}

struct PacketGraphs {
  ByteGraph header;
  ByteGraph payload;
};

inline PacketGraphs build_packet_graphs(const ingest::CleanPacket& p, std::size_t window = kDefaultWindow) {
  if (p.payload_bytes.empty()) throw std::invalid_argument("build_packet_graphs: packet has no payload");
  PacketGraphs out;
  out.header = p.header_bytes.empty() ? null_graph(GraphKind::kHeader)
                                      : build_graph(p.header_bytes, window, GraphKind::kHeader);
  out.payload = build_graph(p.payload_bytes, window, GraphKind::kPayload);
  return out;
}

// Graph cache line: {"kind":"header","nodes":[...],"edges":[[u,v],...]}
inline nlohmann::ordered_json graph_to_json(const ByteGraph& g) {
  nlohmann::ordered_json edges = nlohmann::ordered_json::array();
  for (auto [u, v] : g.edges()) edges.push_back({u, v});
  return {{"kind", kind_name(g.kind)}, {"nodes", g.nodes}, {"edges", std::move(edges)}};
}

inline ByteGraph graph_from_json(const nlohmann::json& j) {
  ByteGraph g;
  const auto kind = j.at("kind").get<std::string>();
  if (kind != "header" && kind != "payload") throw std::invalid_argument("graph cache: unknown kind '" + kind + "'");
  g.kind = kind == "header" ? GraphKind::kHeader : GraphKind::kPayload;
  g.nodes = j.at("nodes").get<std::vector<int>>();
  if (g.nodes.empty() || g.nodes.size() > 256) throw std::invalid_argument("graph cache: node count outside [1, 256]");
  g.adjacency.assign(g.nodes.size() * g.nodes.size(), 0);
  for (const auto& e : j.at("edges")) {
    const auto u = e.at(0).get<std::size_t>();
    const auto v = e.at(1).get<std::size_t>();
    if (u >= g.nodes.size() || v >= g.nodes.size() || u == v) {
      throw std::invalid_argument("graph cache: invalid edge");
    }
    g.set_edge(u, v);
  }
  return g;
}

}  // namespace tfegnn::graph
