#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfegnn/autodiff/checkpoint.hpp"
#include "tfegnn/autodiff/ops.hpp"
#include "tfegnn/graph/byte_graph.hpp"
#include "tfegnn/ingest/segments.hpp"
#include "tfegnn/model/config.hpp"
#include "tfegnn/util/rng.hpp"

namespace tfegnn::model {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using graph::ByteGraph;
using graph::PacketGraphs;

enum class Branch { kHeader = 0, kPayload = 1 };

inline const char* branch_name(Branch b) { return b == Branch::kHeader ? "header" : "payload"; }

/// Byte-graph encoder + cross-gated fusion + bidirectional LSTM classifier.
///
/// Per packet, the header and payload graphs go through separate branches:
/// embedding lookup, four GraphSAGE mean-aggregation layers
/// (linear -> PReLU -> BatchNorm), per-node concatenation of all layer
/// outputs, and pooling to one graph vector each. Each branch's vector
/// drives a sigmoid gate that filters the *other* branch's vector; the two
/// filtered vectors are concatenated into the packet vector z. The packet
/// vectors of a segment run through a 2-layer bidirectional LSTM and a
/// 2-layer PReLU classifier.
///
/// Branches share no parameters. With dual_embedding=false both branches
/// read one embedding table; everything else stays separate.
///
/// forward_batch encodes every graph of a branch in the batch as one
/// disjoint union, so in training mode batch normalization uses statistics
/// over all nodes of the batch. In eval mode it uses running statistics and
/// each segment's logits do not depend on the rest of the batch.
class TfeGnn {
 public:
  explicit TfeGnn(ModelConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
    cfg_.validate();
    util::Rng rng(seed);
    build(rng);
  }

  TfeGnn(TfeGnn&&) = default;
  TfeGnn& operator=(TfeGnn&&) = default;

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  ad::ParameterStore& params() { return params_; }
  [[nodiscard]] const ad::ParameterStore& params() const { return params_; }

  Parameter& embedding(Branch b) { return *embed_[static_cast<int>(b)]; }

  /// |V| x embed_dim matrix: row v is the branch's embedding of node v's byte value.
  Var embed(Tape& tape, std::span<const int> features, Branch b) {
    std::vector<std::size_t> idx(features.size());
    for (std::size_t k = 0; k < features.size(); ++k) {
      if (features[k] < 0 || features[k] > 255) {
        throw std::out_of_range("embed: byte value " + std::to_string(features[k]) + " outside [0, 255]");
      }
      idx[k] = static_cast<std::size_t>(features[k]);
    }
    return ad::gather_rows(tape.param(embedding(b)), idx);
  }

  Var embed(Tape& tape, const ByteGraph& g, Branch b) { return embed(tape, g.nodes, b); }

  /// One GraphSAGE layer: h'_v = BN(PReLU(W^T [h_v ; mean_{u in N(v)} h_u])),
  /// with a zero neighbor message for isolated nodes.
  Var sage_layer(Tape& tape, Var h, std::shared_ptr<const ad::NeighborLists> neighbors, Branch b, std::size_t layer) {
    const auto& L = sage_[static_cast<int>(b)].at(layer);
    const std::size_t d_in = layer == 0 ? cfg_.embed_dim : cfg_.sage_dims[layer - 1];
    if (h.value().rank() != 2 || h.value().cols() != d_in) {
      throw ad::ShapeError("sage_layer " + std::to_string(layer + 1) + ": features " + ad::shape_str(h.shape()) +
                           " do not match input width " + std::to_string(d_in));
    }
    Var msg = ad::neighbor_mean(h, std::move(neighbors));
    Var lin = ad::matmul(ad::concat({h, msg}, 1), tape.param(*L.weight));
    Var act = ad::prelu(lin, tape.param(*L.slope));
    return ad::batchnorm(act, tape.param(*L.gamma), tape.param(*L.beta), *L.running_mean, *L.running_var,
                         {cfg_.bn_momentum, cfg_.bn_eps});
  }

  /// Encodes several graphs of one branch as a disjoint union; returns one
  /// pooled graph vector per input graph (rows x graph_dim).
  Var encode_graphs(Tape& tape, std::span<const ByteGraph* const> graphs, Branch b) {
    if (graphs.empty()) throw std::invalid_argument("encode_graphs: no graphs");
    std::vector<int> features;
    auto neighbors = std::make_shared<ad::NeighborLists>();
    std::vector<std::size_t> offsets{0};
    for (const auto* g : graphs) {
      if (g->nodes.empty()) throw std::invalid_argument("encode_graphs: empty graph");
      const std::size_t base = features.size();
      features.insert(features.end(), g->nodes.begin(), g->nodes.end());
      for (auto nb : g->neighbor_lists()) {
        for (auto& u : nb) u += base;
        neighbors->push_back(std::move(nb));
      }
      offsets.push_back(features.size());
    }
    Var h = embed(tape, features, b);
    std::vector<Var> layers;
    for (std::size_t l = 0; l < kSageLayers; ++l) {
      h = sage_layer(tape, h, neighbors, b, l);
      layers.push_back(h);
    }
    Var jk = ad::concat(std::span<const Var>(layers), 1);
    return ad::segment_reduce(jk, offsets, cfg_.pooling);
  }

  /// 1 x graph_dim vector for a single graph.
  Var encode_graph(Tape& tape, const ByteGraph& g, Branch b) {
    const ByteGraph* one[] = {&g};
    return encode_graphs(tape, one, b);
  }

  /// s = sigmoid(W2^T PReLU(W1^T g + b1) + b2), row-wise.
  Var gate(Tape& tape, Var g, Branch b) {
    const auto& F = fusion_[static_cast<int>(b)];
    if (g.value().rank() != 2 || g.value().cols() != cfg_.graph_dim()) {
      throw ad::ShapeError("gate: graph vector " + ad::shape_str(g.shape()) + " does not have width " +
                           std::to_string(cfg_.graph_dim()));
    }
    Var hidden = ad::prelu(ad::add(ad::matmul(g, tape.param(*F.w1)), tape.param(*F.b1)), tape.param(*F.slope));
    return ad::sigmoid(ad::add(ad::matmul(hidden, tape.param(*F.w2)), tape.param(*F.b2)));
  }

  /// z = [s_h * g_p ; s_p * g_h]: each branch's gate filters the other branch.
  Var fuse(Tape& tape, Var g_h, Var g_p) {
    if (g_h.shape() != g_p.shape()) throw ad::ShapeError("fuse", g_h.shape(), g_p.shape());
    Var s_h = gate(tape, g_h, Branch::kHeader);
    Var s_p = gate(tape, g_p, Branch::kPayload);
    return ad::concat({ad::mul(s_h, g_p), ad::mul(s_p, g_h)}, 1);
  }

  /// Logits (1 x num_classes) per segment, in input order.
  std::vector<Var> forward_batch(Tape& tape, std::span<const std::span<const PacketGraphs>> segments) {
    if (segments.empty()) throw std::invalid_argument("forward_batch: empty batch");
    std::vector<const ByteGraph*> headers, payloads;
    std::vector<std::size_t> starts;
    for (const auto& packets : segments) {
      if (packets.empty()) throw std::invalid_argument("forward_batch: empty segment");
      starts.push_back(headers.size());
      for (const auto& p : packets) {
        headers.push_back(&p.header);
        payloads.push_back(&p.payload);
      }
    }
    Var g_h = encode_graphs(tape, headers, Branch::kHeader);
    Var g_p = encode_graphs(tape, payloads, Branch::kPayload);
    std::vector<Var> out;
    out.reserve(segments.size());
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const std::size_t n = segments[s].size();
      if (segments.size() == 1) {
        out.push_back(sequence_head(tape, g_h, g_p));
      } else {
        out.push_back(sequence_head(tape, ad::slice_rows(g_h, starts[s], n), ad::slice_rows(g_p, starts[s], n)));
      }
    }
    return out;
  }

  /// Logits (1 x num_classes) for one segment given its packets' graph pairs.
  Var forward_segment(Tape& tape, std::span<const PacketGraphs> packets) {
    const std::span<const PacketGraphs> one[] = {packets};
    return forward_batch(tape, one).front();
  }

  /// Fusion, BiLSTM and classifier over one segment's pooled graph vectors
  /// (packets x graph_dim per branch).
  Var sequence_head(Tape& tape, Var g_h, Var g_p) {
    Var z = ad::dropout(fuse(tape, g_h, g_p), cfg_.dropout, tape.training());

    Var seq = lstm_layer(tape, z, 0);
    seq = ad::dropout(seq, cfg_.dropout, tape.training());
    seq = lstm_layer(tape, seq, 1);

    const std::size_t n = g_h.value().rows();
    const std::size_t hid = cfg_.lstm_hidden;
    Var last_fwd = ad::slice_cols(ad::slice_rows(seq, n - 1, 1), 0, hid);
    Var first_bwd = ad::slice_cols(ad::slice_rows(seq, 0, 1), hid, hid);
    Var summary = ad::dropout(ad::concat({last_fwd, first_bwd}, 1), cfg_.dropout, tape.training());

    Var h = ad::add(ad::matmul(summary, tape.param(*cls_.w1)), tape.param(*cls_.b1));
    h = ad::prelu(h, tape.param(*cls_.slope));
    return ad::add(ad::matmul(h, tape.param(*cls_.w2)), tape.param(*cls_.b2));
  }

  /// Softmax cross entropy of one segment's logits.
  Var loss(Var logits, std::size_t label) const {
    if (label >= cfg_.num_classes) {
      throw std::out_of_range("loss: label " + std::to_string(label) + " outside [0, " +
                              std::to_string(cfg_.num_classes) + ")");
    }
    return ad::softmax_cross_entropy(logits, label);
  }

  /// Writes `path` (tensor checkpoint) and `path`.json (config sidecar).
  void save(const std::filesystem::path& path, const std::vector<std::string>& classes = {}) const {
    ad::save_checkpoint(params_, path);
    nlohmann::json side{{"model_config", cfg_}, {"classes", classes}};
    std::ofstream os(sidecar_path(path), std::ios::trunc);
    if (!os) throw ad::CheckpointError("cannot write '" + sidecar_path(path).string() + "'");
    os << side.dump(2) << '\n';
  }

  struct Loaded;
  static Loaded load(const std::filesystem::path& path);

  static std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".json");
  }

 private:
  struct SageParams {
    Parameter* weight;
    Parameter* slope;
    Parameter* gamma;
    Parameter* beta;
    Parameter* running_mean;
    Parameter* running_var;
  };
  struct FusionParams {
    Parameter* w1;
    Parameter* b1;
    Parameter* slope;
    Parameter* w2;
    Parameter* b2;
  };
  struct LstmParams {
    Parameter* w_ih;
    Parameter* w_hh;
    Parameter* bias;
  };
  struct ClassifierParams {
    Parameter* w1;
    Parameter* b1;
    Parameter* slope;
    Parameter* w2;
    Parameter* b2;
  };

  static constexpr double kPreluInit = 0.25;

  Parameter& uniform(util::Rng& rng, const std::string& name, ad::Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
    return params_.add(name, std::move(t));
  }

  void build(util::Rng& rng) {
    const std::size_t d0 = cfg_.embed_dim;
    if (cfg_.dual_embedding) {
      embed_[0] = &uniform(rng, "embed.header", {256, d0}, d0);
      embed_[1] = &uniform(rng, "embed.payload", {256, d0}, d0);
    } else {
      embed_[0] = embed_[1] = &uniform(rng, "embed.shared", {256, d0}, d0);
    }

    for (int b = 0; b < 2; ++b) {
      const std::string pre = std::string("sage.") + branch_name(static_cast<Branch>(b)) + ".layer";
      std::size_t d_in = d0;
      for (std::size_t l = 0; l < kSageLayers; ++l) {
        const std::size_t d_out = cfg_.sage_dims[l];
        const std::string p = pre + std::to_string(l + 1);
        SageParams s{};
        s.weight = &uniform(rng, p + ".weight", {2 * d_in, d_out}, 2 * d_in);
        s.slope = &params_.add(p + ".prelu", Tensor({d_out}, kPreluInit));
        s.gamma = &params_.add(p + ".bn.gamma", Tensor({d_out}, 1.0));
        s.beta = &params_.add(p + ".bn.beta", Tensor({d_out}, 0.0));
        s.running_mean = &params_.add_buffer(p + ".bn.running_mean", Tensor({d_out}, 0.0));
        s.running_var = &params_.add_buffer(p + ".bn.running_var", Tensor({d_out}, 1.0));
        sage_[b].push_back(s);
        d_in = d_out;
      }
    }

    const std::size_t dg = cfg_.graph_dim();
    for (int b = 0; b < 2; ++b) {
      const std::string p = std::string("fusion.") + branch_name(static_cast<Branch>(b));
      FusionParams f{};
      f.w1 = &uniform(rng, p + ".w1", {dg, dg}, dg);
      f.b1 = &uniform(rng, p + ".b1", {dg}, dg);
      f.slope = &params_.add(p + ".prelu", Tensor({dg}, kPreluInit));
      f.w2 = &uniform(rng, p + ".w2", {dg, dg}, dg);
      f.b2 = &uniform(rng, p + ".b2", {dg}, dg);
      fusion_[b] = f;
    }

    const std::size_t hid = cfg_.lstm_hidden;
    for (std::size_t layer = 0; layer < 2; ++layer) {
      const std::size_t in = layer == 0 ? cfg_.fused_dim() : 2 * hid;
      for (int dir = 0; dir < 2; ++dir) {
        const std::string p = "lstm.l" + std::to_string(layer) + (dir == 0 ? ".fwd" : ".bwd");
        LstmParams lp{};
        lp.w_ih = &uniform(rng, p + ".w_ih", {in, 4 * hid}, hid);
        lp.w_hh = &uniform(rng, p + ".w_hh", {hid, 4 * hid}, hid);
        lp.bias = &uniform(rng, p + ".bias", {4 * hid}, hid);
        lstm_[layer][dir] = lp;
      }
    }

    const std::size_t ch = cfg_.classifier_hidden;
    cls_.w1 = &uniform(rng, "classifier.fc1.weight", {2 * hid, ch}, 2 * hid);
    cls_.b1 = &uniform(rng, "classifier.fc1.bias", {ch}, 2 * hid);
    cls_.slope = &params_.add("classifier.prelu", Tensor({ch}, kPreluInit));
    cls_.w2 = &uniform(rng, "classifier.fc2.weight", {ch, cfg_.num_classes}, ch);
    cls_.b2 = &uniform(rng, "classifier.fc2.bias", {cfg_.num_classes}, ch);
  }

  /// One LSTM direction over the rows of x; outputs are returned in time order.
  /// Gate layout in the 4*hidden columns: input, forget, cell, output.
  Var lstm_direction(Tape& tape, Var x, const LstmParams& p, bool reverse) {
    const std::size_t n = x.value().rows();
    const std::size_t hid = cfg_.lstm_hidden;
    Var proj = ad::add(ad::matmul(x, tape.param(*p.w_ih)), tape.param(*p.bias));
    Var w_hh = tape.param(*p.w_hh);
    Var h = tape.constant(Tensor({1, hid}));
    Var c = tape.constant(Tensor({1, hid}));
    std::vector<Var> outputs(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t t = reverse ? n - 1 - k : k;
      Var gates = ad::add(ad::slice_rows(proj, t, 1), ad::matmul(h, w_hh));
      Var i = ad::sigmoid(ad::slice_cols(gates, 0, hid));
      Var f = ad::sigmoid(ad::slice_cols(gates, hid, hid));
      Var g = ad::tanh(ad::slice_cols(gates, 2 * hid, hid));
      Var o = ad::sigmoid(ad::slice_cols(gates, 3 * hid, hid));
      c = ad::add(ad::mul(f, c), ad::mul(i, g));
      h = ad::mul(o, ad::tanh(c));
      outputs[t] = h;
    }
    return ad::concat(std::span<const Var>(outputs), 0);
  }

  Var lstm_layer(Tape& tape, Var x, std::size_t layer) {
    Var fwd = lstm_direction(tape, x, lstm_[layer][0], false);
    Var bwd = lstm_direction(tape, x, lstm_[layer][1], true);
    return ad::concat({fwd, bwd}, 1);
  }

  ModelConfig cfg_;
  ad::ParameterStore params_;
  std::array<Parameter*, 2> embed_{};
  std::array<std::vector<SageParams>, 2> sage_;
  std::array<FusionParams, 2> fusion_{};
  std::array<std::array<LstmParams, 2>, 2> lstm_{};
  ClassifierParams cls_{};
};

struct TfeGnn::Loaded {
  TfeGnn model;
  std::vector<std::string> classes;
};

/// Rebuilds a model from its config sidecar and restores the checkpoint;
/// any name or shape disagreement is an error before weights are touched.
inline TfeGnn::Loaded TfeGnn::load(const std::filesystem::path& path) {
  std::ifstream is(sidecar_path(path));
  if (!is) throw ad::CheckpointError("missing config sidecar '" + sidecar_path(path).string() + "'");
  const auto side = nlohmann::json::parse(is);
  TfeGnn m(side.at("model_config").get<ModelConfig>());
  ad::restore_checkpoint(m.params(), path);
  return {std::move(m), side.value("classes", std::vector<std::string>{})};
}

/// Graph pairs for every packet of a segment.
inline std::vector<PacketGraphs> segment_graphs(const ingest::TrafficSegment& s, std::size_t window) {
  std::vector<PacketGraphs> out;
  out.reserve(s.packets.size());
  for (const auto& p : s.packets) out.push_back(graph::build_packet_graphs(p, window));
  return out;
}

}  // namespace tfegnn::model
