// Acceptance run: one PASS/FAIL/SKIP line per criterion.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tfegnn/autodiff/gradcheck.hpp"
#include "tfegnn/graph/byte_graph.hpp"
#include "tfegnn/ingest/frame_builder.hpp"
#include "tfegnn/ingest/segments.hpp"
#include "tfegnn/model/tfe_gnn.hpp"
#include "tfegnn/synth.hpp"
#include "tfegnn/train/trainer.hpp"
#include "tfegnn/util/parallel.hpp"

using namespace tfegnn;
namespace fs = std::filesystem;
using graph::ByteGraph;
using graph::PacketGraphs;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::size_t hw_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---- 1: PMI graph vs window-enumeration oracle ----------------------------

constexpr int kAlpha = 5;
constexpr std::size_t kMaxLen = 12;
constexpr std::array<std::size_t, 3> kWindows{2, 3, 5};

int pair_bit(int a, int b) {
  if (a > b) std::swap(a, b);
  return a * kAlpha + b;
}

// Co-occurrence state of one window size for the current prefix.
struct OracleState {
  std::uint64_t windows = 0;
  std::array<std::uint64_t, kAlpha> single{};
  std::array<std::uint64_t, kAlpha * kAlpha> joint{};
};

void add_window(OracleState& s, const std::uint8_t* begin, const std::uint8_t* end) {
  bool in[kAlpha] = {};
  for (auto p = begin; p != end; ++p) in[*p] = true;
  ++s.windows;
  for (int a = 0; a < kAlpha; ++a) {
    if (!in[a]) continue;
    ++s.single[a];
    for (int b = a + 1; b < kAlpha; ++b) {
      if (in[b]) ++s.joint[a * kAlpha + b];
    }
  }
}

// PMI > 0 means p(a,b) > p(a) p(b), i.e. joint/W > (sa/W)(sb/W).
std::uint32_t oracle_edges(const OracleState& s) {
  std::uint32_t mask = 0;
  for (int a = 0; a < kAlpha; ++a) {
    for (int b = a + 1; b < kAlpha; ++b) {
      const auto j = s.joint[a * kAlpha + b];
      if (j > 0 && j * s.windows > s.single[a] * s.single[b]) mask |= 1u << pair_bit(a, b);
    }
  }
  return mask;
}

std::uint32_t built_edges(const ByteGraph& g) {
  std::uint32_t mask = 0;
  for (auto [u, v] : g.edges()) mask |= 1u << pair_bit(g.nodes[u], g.nodes[v]);
  return mask;
}

struct SweepStats {
  std::uint64_t sequences = 0;
  std::uint64_t graphs = 0;
  std::uint64_t mismatches = 0;
  std::string first_mismatch;
};

// Depth-first over all sequences; windows of a prefix longer than w are the
// parent's windows plus the one ending at the new symbol.
void sweep(std::array<std::uint8_t, kMaxLen>& seq, std::size_t len, std::array<OracleState, 3> parent,
           const std::vector<std::uint8_t>& forced, SweepStats& st) {
  if (len == kMaxLen) return;
  for (std::uint8_t v = 0; v < kAlpha; ++v) {
    if (len < forced.size() && v != forced[len]) continue;
    seq[len] = v;
    const std::size_t n = len + 1;
    std::array<OracleState, 3> cur;
    for (std::size_t k = 0; k < kWindows.size(); ++k) {
      const std::size_t w = kWindows[k];
      if (n <= w) {
        cur[k] = OracleState{};
        add_window(cur[k], seq.data(), seq.data() + n);
      } else {
        cur[k] = parent[k];
        add_window(cur[k], seq.data() + n - w, seq.data() + n);
      }
    }
    // prefixes shorter than the forced part belong to the task whose
    // remaining forced symbols are all zero
    bool owner = n >= forced.size();
    if (!owner) {
      owner = std::all_of(forced.begin() + static_cast<std::ptrdiff_t>(n), forced.end(), [](auto x) { return x == 0; });
    }
    if (owner) {
      ++st.sequences;
      std::uint32_t present = 0;
      for (std::size_t i = 0; i < n; ++i) present |= 1u << seq[i];
      for (std::size_t k = 0; k < kWindows.size(); ++k) {
        const auto g = graph::build_graph(std::span(seq.data(), n), kWindows[k], graph::GraphKind::kPayload);
        ++st.graphs;
        std::uint32_t nodes = 0;
        for (int x : g.nodes) nodes |= 1u << x;
        bool ok = nodes == present && built_edges(g) == oracle_edges(cur[k]);
        for (std::size_t u = 0; ok && u < g.nodes.size(); ++u) ok = !g.edge(u, u);
        if (!ok) {
          if (st.mismatches++ == 0) {
            std::ostringstream os;
            os << "w=" << kWindows[k] << " seq=[";
            for (std::size_t i = 0; i < n; ++i) os << (i ? "," : "") << int(seq[i]);
            os << "]";
            st.first_mismatch = os.str();
          }
        }
      }
    }
    sweep(seq, n, cur, forced, st);
  }
}

Outcome criterion1() {
  // hand-checked case
  const std::vector<std::uint8_t> hand{1, 2, 3, 4};
  const auto g = graph::build_graph(hand, 2, graph::GraphKind::kPayload);
  std::set<std::pair<int, int>> edges;
  for (auto [u, v] : g.edges()) edges.emplace(g.nodes[u], g.nodes[v]);
  if (edges != std::set<std::pair<int, int>>{{1, 2}, {3, 4}}) return {Status::kFail, "seq=[1,2,3,4] w=2 edge set wrong"};

  const auto t0 = Clock::now();
  std::vector<std::vector<std::uint8_t>> tasks;
  for (std::uint8_t a = 0; a < kAlpha; ++a) {
    for (std::uint8_t b = 0; b < kAlpha; ++b) tasks.push_back({a, b});
  }
  const std::size_t workers = hw_threads();
  std::vector<SweepStats> per_task(tasks.size());
  util::parallel_chunks(tasks.size(), workers, [&](std::size_t, std::size_t lo, std::size_t hi) {
    for (std::size_t t = lo; t < hi; ++t) {
      std::array<std::uint8_t, kMaxLen> seq{};
      sweep(seq, 0, {}, tasks[t], per_task[t]);
    }
  });
  SweepStats total;
  for (const auto& s : per_task) {
    total.sequences += s.sequences;
    total.graphs += s.graphs;
    if (total.first_mismatch.empty()) total.first_mismatch = s.first_mismatch;
    total.mismatches += s.mismatches;
  }
  const double secs = seconds_since(t0);
  std::uint64_t expected = 0;
  for (std::size_t L = 1, p = kAlpha; L <= kMaxLen; ++L, p *= kAlpha) expected += p;

  std::ostringstream os;
  os << total.sequences << " sequences (expected " << expected << "), " << total.graphs << " graphs, "
     << total.mismatches << " mismatches, " << fmt("%.1f", secs) << " s on " << workers << " thread(s) (limit 60 s)";
  if (total.mismatches > 0) os << "; first mismatch " << total.first_mismatch;
  const bool ok = total.mismatches == 0 && total.sequences == expected && secs < 60.0;
  return {ok ? Status::kPass : Status::kFail, os.str()};
}

// ---- 2: graph invariants on random packets --------------------------------

Outcome criterion2() {
  util::Rng rng(2024);
  std::size_t max_nodes = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    ingest::CleanPacket p;
    p.header_bytes.resize(rng.below(41));
    // some packets draw from all 256 values over long payloads to approach the node bound
    const bool wide = trial % 4 == 0;
    p.payload_bytes.resize(wide ? 1 + rng.below(1500) : 1 + rng.below(150));
    const std::size_t alpha = wide ? 256 : 1 + rng.below(64);
    for (auto& b : p.header_bytes) b = static_cast<std::uint8_t>(rng.below(alpha));
    for (auto& b : p.payload_bytes) b = static_cast<std::uint8_t>(rng.below(alpha));
    const auto pg = graph::build_packet_graphs(p, graph::kDefaultWindow);
    for (const auto* g : {&pg.header, &pg.payload}) {
      const std::size_t n = g->num_nodes();
      max_nodes = std::max(max_nodes, n);
      if (n == 0 || n > 256) return {Status::kFail, "node count " + std::to_string(n) + " at trial " + std::to_string(trial)};
      if (g->adjacency.size() != n * n) return {Status::kFail, "adjacency size mismatch"};
      for (std::size_t u = 0; u < n; ++u) {
        if (g->edge(u, u)) return {Status::kFail, "self loop at trial " + std::to_string(trial)};
        for (std::size_t v = 0; v < n; ++v) {
          if (g->edge(u, v) != g->edge(v, u)) return {Status::kFail, "asymmetric adjacency"};
        }
      }
    }
    const auto& seq = p.payload_bytes;
    const auto st = graph::count_cooccurrence(seq, graph::kDefaultWindow);
    const auto& g = pg.payload;
    for (std::size_t u = 0; u < g.num_nodes(); ++u) {
      for (std::size_t v = u + 1; v < g.num_nodes(); ++v) {
        const auto a = static_cast<std::uint8_t>(g.nodes[u]);
        const auto b = static_cast<std::uint8_t>(g.nodes[v]);
        const double ab = graph::pmi(st, a, b);
        const double ba = graph::pmi(st, b, a);
        if (!(ab == ba || (std::isinf(ab) && std::isinf(ba)))) return {Status::kFail, "PMI asymmetric"};
        if (g.edge(u, v) != (ab > 0)) return {Status::kFail, "edge disagrees with PMI sign"};
      }
    }
  }
  return {Status::kPass, "1000 packets, max nodes " + std::to_string(max_nodes) + "; symmetric, zero diagonal, PMI symmetric"};
}

// ---- 3-5: model properties ------------------------------------------------

model::ModelConfig tiny_config(std::size_t d, std::size_t classes) {
  model::ModelConfig c;
  c.embed_dim = d;
  c.sage_dims = {d, d, d, d};
  c.lstm_hidden = d;
  c.classifier_hidden = d;
  c.num_classes = classes;
  return c;
}

std::vector<PacketGraphs> random_segment(std::size_t n, util::Rng& rng, std::size_t alphabet) {
  std::vector<PacketGraphs> out;
  for (std::size_t k = 0; k < n; ++k) {
    ingest::CleanPacket p;
    p.header_bytes.resize(rng.below(24));
    p.payload_bytes.resize(2 + rng.below(40));
    for (auto& b : p.header_bytes) b = static_cast<std::uint8_t>(rng.below(alphabet));
    for (auto& b : p.payload_bytes) b = static_cast<std::uint8_t>(128 + rng.below(alphabet));
    out.push_back(graph::build_packet_graphs(p, graph::kDefaultWindow));
  }
  return out;
}

void perturb_buffers(model::TfeGnn& m, std::uint64_t seed) {
  util::Rng rng(seed);
  for (auto& p : m.params()) {
    const auto& n = p->name;
    if (n.ends_with("running_var")) {
      for (auto& v : p->value.values()) v = rng.uniform(0.5, 2.0);
    } else if (n.ends_with("running_mean") || n.ends_with("bn.beta")) {
      for (auto& v : p->value.values()) v = rng.uniform(-0.5, 0.5);
    } else if (n.ends_with("bn.gamma")) {
      for (auto& v : p->value.values()) v = rng.uniform(0.5, 1.5);
    }
  }
}

Outcome criterion3() {
  const auto t0 = Clock::now();
  std::ostringstream os;
  bool ok = true;
  std::size_t min_coords = SIZE_MAX;
  for (bool training : {false, true}) {
    auto cfg = tiny_config(4, 3);
    model::TfeGnn m(cfg, 3);
    if (!training) perturb_buffers(m, 4);
    util::Rng rng(training ? 6 : 5);
    const auto seg = random_segment(3, rng, 10);
    auto params = m.params().trainable();
    ad::GradCheckOptions opt;
    opt.max_coords = 400;
    opt.seed = 7;
    opt.training = training;
    const auto r = ad::gradient_check([&](ad::Tape& t) { return m.loss(m.forward_segment(t, seg), 2); }, params, opt);
    min_coords = std::min(min_coords, r.coords_checked);
    ok = ok && r.max_rel_error < 1e-4 && r.coords_checked >= 200;
    os << (training ? "train mode (dropout, batch BN)" : "eval mode") << ": max rel err " << fmt("%.2e", r.max_rel_error)
       << " over " << r.coords_checked << " coords (worst " << r.worst_param << "); ";
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 120.0;
  os << fmt("%.1f s", secs);
  return {ok ? Status::kPass : Status::kFail, os.str()};
}

ByteGraph relabel(const ByteGraph& g, const std::vector<std::size_t>& perm) {
  ByteGraph r;
  r.kind = g.kind;
  const std::size_t n = g.nodes.size();
  r.adjacency.assign(n * n, 0);
  for (std::size_t k = 0; k < n; ++k) r.nodes.push_back(g.nodes[perm[k]]);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) r.adjacency[a * n + b] = g.edge(perm[a], perm[b]) ? 1 : 0;
  }
  return r;
}

Outcome criterion4() {
  double worst = 0.0;
  util::Rng rng(44);
  for (auto pooling : {model::Pooling::kMean, model::Pooling::kSum, model::Pooling::kMax}) {
    auto cfg = tiny_config(8, 2);
    cfg.pooling = pooling;
    model::TfeGnn m(cfg, 45);
    perturb_buffers(m, 46);
    for (int trial = 0; trial < 100; ++trial) {
      const auto pg = random_segment(1, rng, 8 + rng.below(48)).front();
      for (auto [g, branch] : {std::pair{&pg.header, model::Branch::kHeader}, std::pair{&pg.payload, model::Branch::kPayload}}) {
        std::vector<std::size_t> perm(g->num_nodes());
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(std::span(perm));
        ad::Tape t(false);
        const auto base = m.encode_graph(t, *g, branch).value();
        const auto moved = m.encode_graph(t, relabel(*g, perm), branch).value();
        for (std::size_t k = 0; k < base.size(); ++k) worst = std::max(worst, std::abs(base[k] - moved[k]));
      }
    }
  }
  return {worst <= 1e-9 ? Status::kPass : Status::kFail,
          "100 trials x 3 poolings x 2 branches, max |diff| " + fmt("%.2e", worst) + " (limit 1e-9)"};
}

Outcome criterion5() {
  auto cfg = tiny_config(6, 3);
  model::TfeGnn m(cfg, 51);
  perturb_buffers(m, 52);
  util::Rng rng(53);
  std::vector<std::vector<PacketGraphs>> segs;
  for (int s = 0; s < 12; ++s) segs.push_back(random_segment(1 + rng.below(6), rng, 16));
  std::vector<std::vector<double>> alone;
  for (const auto& s : segs) {
    ad::Tape t(false);
    const auto v = m.forward_segment(t, s).value().values();
    alone.emplace_back(v.begin(), v.end());
  }
  double worst = 0.0;
  std::size_t checks = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> idx(segs.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(std::span(idx));
    idx.resize(2 + rng.below(segs.size() - 1));
    std::vector<std::span<const PacketGraphs>> views;
    for (auto i : idx) views.emplace_back(segs[i]);
    ad::Tape t(false);
    const auto out = m.forward_batch(t, views);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        worst = std::max(worst, std::abs(out[k].value()[c] - alone[idx[k]][c]));
        ++checks;
      }
    }
  }
  return {worst <= 1e-12 ? Status::kPass : Status::kFail,
          std::to_string(checks) + " logits across 20 random batches, max |diff| " + fmt("%.2e", worst) + " (limit 1e-12)"};
}

// ---- 6-7: training ----------------------------------------------------------

struct RunResult {
  double test_f1 = 0.0;
  double best_train_acc = 0.0;
  std::size_t first_epoch_99 = 0;
  double eval_train_acc = 0.0;
};

RunResult train_run(const ingest::Dataset& ds, const model::ModelConfig& mc, const train::TrainConfig& tc) {
  const auto samples = train::build_samples(ds, graph::kDefaultWindow, tc.workers);
  auto result = train::train(samples, mc, tc, ds.classes);
  RunResult r;
  for (const auto& e : result.history) {
    r.best_train_acc = std::max(r.best_train_acc, e.train_accuracy);
    if (r.first_epoch_99 == 0 && e.train_accuracy >= 0.99) r.first_epoch_99 = e.epoch;
  }
  r.test_f1 = train::evaluate(result.model, train::select(samples, result.split.test), tc.workers).macro_f1;
  r.eval_train_acc = train::evaluate(result.model, train::select(samples, result.split.train), tc.workers).accuracy;
  return r;
}

Outcome criterion6() {
  const auto t0 = Clock::now();
  synth::SynthOptions so;
  so.classes = 4;
  so.segments_per_class = 32;
  so.seed = 6;
  const auto ds = synth::synthesize_dataset(so);
  model::ModelConfig mc;  // default widths, dropout 0.2
  mc.num_classes = 4;
  train::TrainConfig tc;  // lr 1e-2 -> 1e-4, warmup 0.1, batch 512, 9:1 split
  tc.max_epochs = 200;
  tc.seed = 6;
  tc.workers = hw_threads();
  const auto r = train_run(ds, mc, tc);
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "train acc >= 0.99 first at epoch " << r.first_epoch_99 << " (best " << fmt("%.4f", r.best_train_acc)
     << ", eval-mode " << fmt("%.4f", r.eval_train_acc) << "), test macro F1 " << fmt("%.4f", r.test_f1) << ", "
     << fmt("%.0f s", secs) << " (limit 900 s)";
  const bool ok = r.first_epoch_99 > 0 && r.test_f1 >= 0.99 && secs < 900.0;
  return {ok ? Status::kPass : Status::kFail, os.str()};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome criterion7() {
  const auto t0 = Clock::now();
  std::vector<double> dual, shared;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    synth::SynthOptions so;
    so.classes = 4;
    so.segments_per_class = 32;
    so.conflicting = true;
    so.seed = 70 + seed;
    const auto ds = synth::synthesize_dataset(so);
    model::ModelConfig mc;
    mc.embed_dim = 16;
    mc.sage_dims = {16, 16, 16, 16};
    mc.lstm_hidden = 32;
    mc.classifier_hidden = 32;
    mc.num_classes = 4;
    train::TrainConfig tc;
    tc.max_epochs = 60;
    tc.batch_size = 32;
    tc.seed = seed;
    tc.workers = hw_threads();
    dual.push_back(train_run(ds, mc, tc).test_f1);
    mc.dual_embedding = false;
    shared.push_back(train_run(ds, mc, tc).test_f1);
  }
  const double md = median(dual), ms = median(shared);
  std::ostringstream os;
  os << "median test macro F1 dual " << fmt("%.4f", md) << " vs shared " << fmt("%.4f", ms) << " (dual [";
  for (std::size_t i = 0; i < dual.size(); ++i) os << (i ? " " : "") << fmt("%.3f", dual[i]);
  os << "], shared [";
  for (std::size_t i = 0; i < shared.size(); ++i) os << (i ? " " : "") << fmt("%.3f", shared[i]);
  os << "]), " << fmt("%.0f s", seconds_since(t0));
  return {md >= ms ? Status::kPass : Status::kFail, os.str()};
}

// ---- 8: preprocessing fixtures -------------------------------------------

constexpr std::uint32_t kAddrA = 0xC0A8FE01;  // 192.168.254.1
constexpr std::uint32_t kAddrB = 0xAC10EF02;  // 172.16.239.2
constexpr std::uint16_t kPortA = 0xD431;      // 54321
constexpr std::uint16_t kPortB = 0x01BB;      // 443

ingest::FrameSpec flow_spec() {
  ingest::FrameSpec s;
  s.src = {kAddrA, kPortA};
  s.dst = {kAddrB, kPortB};
  return s;
}

void write_capture(const fs::path& path, const std::vector<std::vector<std::uint8_t>>& frames) {
  ingest::PcapWriter w;
  double ts = 1000.0;
  for (const auto& f : frames) {
    w.add(ts, f);
    ts += 0.001;
  }
  w.save(path);
}

// Header bytes expected after anonymization, read off the raw frame:
// IPv4 bytes 0..11 (checksum zeroed), IP options, transport bytes from offset 4
// to the end of the transport header (checksum zeroed).
std::vector<std::uint8_t> expected_header(std::vector<std::uint8_t> f, std::size_t max_header) {
  const std::size_t ip = 14;
  const std::size_t ihl = (f[ip] & 0x0f) * 4u;
  const std::size_t l4 = ip + ihl;
  const bool tcp = f[ip + 9] == 6;
  const std::size_t thl = tcp ? (f[l4 + 12] >> 4) * 4u : 8;
  f[ip + 10] = f[ip + 11] = 0;
  f[l4 + (tcp ? 16 : 6)] = f[l4 + (tcp ? 17 : 7)] = 0;
  std::vector<std::uint8_t> h(f.begin() + ip, f.begin() + ip + 12);
  h.insert(h.end(), f.begin() + ip + 20, f.begin() + l4);
  h.insert(h.end(), f.begin() + l4 + 4, f.begin() + l4 + thl);
  if (h.size() > max_header) h.resize(max_header);
  return h;
}

Outcome criterion8() {
  const auto dir = fs::temp_directory_path() / "tfegnn_acceptance_fixtures";
  fs::remove_all(dir);
  fs::create_directories(dir);
  ingest::IngestOptions opt;
  std::vector<std::string> failures;
  auto check = [&](bool cond, const std::string& what) {
    if (!cond) failures.push_back(what);
  };

  {  // empty flow: only payload-free packets
    std::vector<std::vector<std::uint8_t>> frames;
    auto s = flow_spec();
    for (std::uint8_t flags : {0x02, 0x12, 0x10, 0x11}) {
      s.tcp_flags = flags;
      frames.push_back(ingest::build_frame(s));
      ++s.seq;
    }
    write_capture(dir / "empty.pcap", frames);
    const auto r = ingest::process_capture(dir / "empty.pcap", opt);
    check(r.segments.empty(), "empty flow kept");
    check(r.counters.no_payload == 4, "empty flow: no_payload != 4");
    check(r.counters.empty_segments == 1, "empty flow: empty_segments != 1");
  }
  for (std::size_t count : {10000u, 10001u}) {  // overlong flow
    std::vector<std::vector<std::uint8_t>> frames;
    auto s = flow_spec();
    for (std::size_t k = 0; k < count; ++k) {
      s.seq = static_cast<std::uint32_t>(1 + 4 * k);
      s.payload = {static_cast<std::uint8_t>(k), 1, 2, 3};
      frames.push_back(ingest::build_frame(s));
    }
    const auto path = dir / ("long" + std::to_string(count) + ".pcap");
    write_capture(path, frames);
    const auto r = ingest::process_capture(path, opt);
    if (count == 10001) {
      check(r.segments.empty(), "10001-packet flow kept");
      check(r.counters.overlong_segments == 1, "10001-packet flow: overlong_segments != 1");
    } else {
      check(r.segments.size() == 1 && r.segments[0].packets.size() == 50, "10000-packet flow not kept with 50 packets");
    }
  }
  std::vector<std::uint8_t> data_frame;
  {  // mixed flow: payload-free packets dropped, data packets kept in order
    std::vector<std::vector<std::uint8_t>> frames;
    auto s = flow_spec();
    s.tcp_flags = 0x02;
    frames.push_back(ingest::build_frame(s));
    s.tcp_flags = 0x18;
    s.ip_options = {0x01, 0x01, 0x01, 0x00};
    s.tcp_options = {0x01, 0x01, 0x08, 0x0a, 0, 0, 0, 7, 0, 0, 0, 9};
    for (int k = 0; k < 3; ++k) {
      s.seq = static_cast<std::uint32_t>(100 + 200 * k);
      s.ip_id = static_cast<std::uint16_t>(0x1111 * (k + 1));
      s.payload.assign(200, static_cast<std::uint8_t>(0x60 + k));
      frames.push_back(ingest::build_frame(s));
      if (k == 0) data_frame = frames.back();
      s.payload.clear();
      s.tcp_flags = 0x10;
      frames.push_back(ingest::build_frame(s));
      s.tcp_flags = 0x18;
    }
    write_capture(dir / "mixed.pcap", frames);
    const auto r = ingest::process_capture(dir / "mixed.pcap", opt);
    check(r.segments.size() == 1, "mixed flow: expected one segment");
    check(r.counters.no_payload == 4, "mixed flow: no_payload != 4");
    if (r.segments.size() == 1) {
      const auto& pk = r.segments[0].packets;
      check(pk.size() == 3, "mixed flow: expected 3 data packets");
      for (std::size_t k = 0; k < pk.size(); ++k) {
        check(pk[k].payload_bytes == std::vector<std::uint8_t>(150, static_cast<std::uint8_t>(0x60 + k)),
              "mixed flow: payload not truncated to 150");
      }
      if (!pk.empty()) {
        const auto want = expected_header(data_frame, 40);
        check(pk[0].header_bytes == want, "header_bytes differ from the octet-level expectation");
        // address and port octets; none of them occurs in the kept fields of this fixture
        for (auto b : {std::uint8_t{0xC0}, std::uint8_t{0xA8}, std::uint8_t{0xFE}, std::uint8_t{0xAC}, std::uint8_t{0xEF},
                       std::uint8_t{0xD4}, std::uint8_t{0x31}, std::uint8_t{0xBB}}) {
          check(std::find(pk[0].header_bytes.begin(), pk[0].header_bytes.end(), b) == pk[0].header_bytes.end(),
                "address/port octet present in header_bytes");
        }
        check(std::search(pk[0].header_bytes.begin(), pk[0].header_bytes.end(), data_frame.begin(),
                          data_frame.begin() + 12) == pk[0].header_bytes.end(),
              "Ethernet addresses present in header_bytes");
      }
    }
  }
  fs::remove_all(dir);
  if (!failures.empty()) {
    std::string d;
    for (const auto& f : failures) d += (d.empty() ? "" : "; ") + f;
    return {Status::kFail, d};
  }
  return {Status::kPass, "empty flow removed, 10001-packet flow removed (10000 kept), payload-free packets dropped, "
                         "header_bytes exact with Ethernet/IP/port octets absent"};
}

// ---- 9: optional large-scale run ------------------------------------------

Outcome criterion9() {
  const char* root = std::getenv("TFEGNN_ISCX_VPN_DIR");
  if (!root || !*root) return {Status::kSkip, "set TFEGNN_ISCX_VPN_DIR=<dir>/<class>/*.pcap to run"};
  const auto t0 = Clock::now();
  ingest::IngestOptions opt;
  ingest::Dataset ds;
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) class_dirs.push_back(e.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.size() < 2) return {Status::kFail, "need at least two class directories under " + std::string(root)};
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    ds.classes.push_back(class_dirs[c].filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(class_dirs[c])) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      try {
        auto r = ingest::process_capture(f, opt);
        for (auto& s : r.segments) {
          s.label = static_cast<int>(c);
          ds.segments.push_back(std::move(s));
        }
      } catch (const std::exception& e) {
        std::cerr << "warning: skipping " << f << ": " << e.what() << '\n';
      }
    }
  }
  model::ModelConfig mc;
  mc.num_classes = ds.num_classes();
  train::TrainConfig tc;
  if (const char* ep = std::getenv("TFEGNN_ISCX_EPOCHS")) tc.max_epochs = std::strtoul(ep, nullptr, 10);
  tc.workers = hw_threads();
  try {
    const auto samples = train::build_samples(ds, graph::kDefaultWindow, tc.workers);
    auto result = train::train(samples, mc, tc, ds.classes, [](const train::EpochRecord& e) {
      std::cerr << "epoch " << e.epoch << " loss " << e.loss << " train_acc " << e.train_accuracy << '\n';
    });
    const auto m = train::evaluate(result.model, train::select(samples, result.split.test), tc.workers);
    std::cout << train::metrics_to_json(m, ds.classes).dump() << '\n';
    return {Status::kPass, std::to_string(ds.segments.size()) + " segments, test macro F1 " + fmt("%.4f", m.macro_f1) +
                               ", " + fmt("%.0f s", seconds_since(t0))};
  } catch (const std::exception& e) {
    return {Status::kFail, e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9};
  std::vector<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::strtoul(argv[i], nullptr, 10));
  if (selected.empty()) {
    for (std::size_t k = 1; k <= criteria.size(); ++k) selected.push_back(k);
  }
  bool failed = false;
  for (auto k : selected) {
    if (k < 1 || k > criteria.size()) {
      std::cerr << "unknown criterion " << k << '\n';
      return 2;
    }
    Outcome o;
    try {
      o = criteria[k - 1]();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    std::cout << "criterion " << k << ": " << tag << " - " << o.detail << std::endl;
    failed = failed || o.status == Status::kFail;
  }
  return failed ? 1 : 0;
}
