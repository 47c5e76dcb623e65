#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tfegnn/graph/byte_graph.hpp"
#include "tfegnn/ingest/dataset.hpp"
#include "tfegnn/ingest/segments.hpp"
#include "tfegnn/model/tfe_gnn.hpp"
#include "tfegnn/synth.hpp"
#include "tfegnn/train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace tfegnn;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitInternal = 3;

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ingest::IngestOptions ingest;
  std::size_t window = graph::kDefaultWindow;
  model::ModelConfig model;
  train::TrainConfig train;
  std::size_t repeat = 1;
  std::map<std::string, std::string> paths;
};

const char* mode_name(ingest::SegmentMode m) { return m == ingest::SegmentMode::kFlow ? "flow" : "timeblock"; }

ingest::SegmentMode parse_mode(const std::string& s) {
  if (s == "flow") return ingest::SegmentMode::kFlow;
  if (s == "timeblock") return ingest::SegmentMode::kTimeBlock;
  throw InputError("unknown mode '" + s + "' (expected flow|timeblock)");
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["ingest"] = {{"mode", mode_name(c.ingest.mode)},
                 {"block_seconds", c.ingest.block_seconds},
                 {"max_packets", c.ingest.limits.max_packets},
                 {"max_header", c.ingest.limits.max_header},
                 {"max_payload", c.ingest.limits.max_payload},
                 {"verify_checksums", c.ingest.verify_checksums},
                 {"drop_retransmissions", c.ingest.drop_retransmissions},
                 {"max_raw_packets", c.ingest.max_raw_packets}};
  j["graph"] = {{"window", c.window}};
  j["model"] = json(c.model);
  j["train"] = json(c.train);
  j["repeat"] = c.repeat;
  j["paths"] = c.paths;
  return j;
}

RunConfig from_json(const json& j) {
  RunConfig c;
  if (j.contains("ingest")) {
    const auto& i = j.at("ingest");
    c.ingest.mode = parse_mode(i.value("mode", std::string(mode_name(c.ingest.mode))));
    c.ingest.block_seconds = i.value("block_seconds", c.ingest.block_seconds);
    c.ingest.limits.max_packets = i.value("max_packets", c.ingest.limits.max_packets);
    c.ingest.limits.max_header = i.value("max_header", c.ingest.limits.max_header);
    c.ingest.limits.max_payload = i.value("max_payload", c.ingest.limits.max_payload);
    c.ingest.verify_checksums = i.value("verify_checksums", c.ingest.verify_checksums);
    c.ingest.drop_retransmissions = i.value("drop_retransmissions", c.ingest.drop_retransmissions);
    c.ingest.max_raw_packets = i.value("max_raw_packets", c.ingest.max_raw_packets);
  }
  if (j.contains("graph")) c.window = j.at("graph").value("window", c.window);
  if (j.contains("model")) c.model = j.at("model").get<model::ModelConfig>();
  if (j.contains("train")) c.train = j.at("train").get<train::TrainConfig>();
  c.repeat = j.value("repeat", c.repeat);
  if (j.contains("paths")) c.paths = j.at("paths").get<std::map<std::string, std::string>>();
  return c;
}

/// Flags shared by every subcommand; applied on top of --config.
struct CommonFlags {
  std::string config_path;
  std::string mode;
  std::size_t window = 0;
  std::size_t max_packets = 0;
  std::size_t max_payload = 0;
  std::size_t max_header = 0;
  std::string pooling;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  std::size_t repeat = 0;
  std::size_t workers = 0;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App* app) {
    opts["config"] = app->add_option("--config", config_path, "JSON run configuration (as echoed by any command)");
    opts["mode"] = app->add_option("--mode", mode, "Segmentation: flow|timeblock");
    opts["window"] = app->add_option("--window", window, "PMI window size (default 5)");
    opts["max-packets"] = app->add_option("--max-packets", max_packets, "Packets kept per segment (default 50)");
    opts["max-payload"] = app->add_option("--max-payload", max_payload, "Payload bytes kept per packet (default 150)");
    opts["max-header"] = app->add_option("--max-header", max_header, "Header bytes kept per packet (default 40)");
    opts["pooling"] = app->add_option("--pooling", pooling, "Graph pooling: mean|sum|max");
    opts["seed"] = app->add_option("--seed", seed, "Random seed");
    opts["epochs"] = app->add_option("--epochs", epochs, "Training epochs (default 120)");
    opts["batch-size"] = app->add_option("--batch-size", batch_size, "Mini-batch size (default 512)");
    opts["repeat"] = app->add_option("--repeat", repeat, "Independent training runs with consecutive seeds");
    opts["workers"] = app->add_option("--workers", workers, "Threads for graph building and evaluation");
  }

  bool given(const std::string& name) const { return opts.at(name)->count() > 0; }

  RunConfig resolve() const {
    RunConfig c;
    if (given("config")) {
      std::ifstream is(config_path);
      if (!is) throw InputError("cannot open config '" + config_path + "'");
      try {
        c = from_json(json::parse(is));
      } catch (const json::exception& e) {
        throw InputError("bad config '" + config_path + "': " + e.what());
      }
    }
    if (given("mode")) c.ingest.mode = parse_mode(mode);
    if (given("window")) c.window = window;
    if (given("max-packets")) c.ingest.limits.max_packets = max_packets;
    if (given("max-payload")) c.ingest.limits.max_payload = max_payload;
    if (given("max-header")) c.ingest.limits.max_header = max_header;
    if (given("pooling")) c.model.pooling = model::parse_pooling(pooling);
    if (given("seed")) c.train.seed = seed;
    if (given("epochs")) c.train.max_epochs = epochs;
    if (given("batch-size")) c.train.batch_size = batch_size;
    if (given("repeat")) c.repeat = repeat;
    if (given("workers")) c.train.workers = workers;
    if (c.window < 2) throw InputError("window must be at least 2");
    if (c.ingest.limits.max_packets == 0 || c.ingest.limits.max_payload == 0) {
      throw InputError("max-packets and max-payload must be positive");
    }
    if (c.repeat == 0) throw InputError("repeat must be positive");
    c.train.validate();
    return c;
  }
};

void echo_config(const RunConfig& c) { std::cerr << "config: " << to_json(c).dump() << '\n'; }

void write_json(const fs::path& path, const ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

ingest::Dataset load_dataset(const std::string& path) {
  if (!fs::exists(path)) throw InputError("dataset '" + path + "' does not exist");
  return ingest::read_dataset(fs::path(path));
}

bool looks_like_pcap(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::uint8_t m[4] = {};
  if (!is.read(reinterpret_cast<char*>(m), 4)) return false;
  const std::uint32_t le = m[0] | m[1] << 8 | m[2] << 16 | static_cast<std::uint32_t>(m[3]) << 24;
  const std::uint32_t be = m[3] | m[2] << 8 | m[1] << 16 | static_cast<std::uint32_t>(m[0]) << 24;
  for (auto v : {le, be}) {
    if (v == ingest::kPcapMagicMicros || v == ingest::kPcapMagicNanos) return true;
  }
  return false;
}

std::vector<fs::path> sorted_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> sorted_dirs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- preprocess -----------------------------------------------------------

int cmd_preprocess(const RunConfig& cfg, const std::string& input, const std::string& output,
                   const std::string& summary_path) {
  if (!fs::is_directory(input)) throw InputError("input '" + input + "' is not a directory");
  const auto class_dirs = sorted_dirs(input);
  if (class_dirs.size() < 2) throw InputError("input needs at least two class subdirectories");
  ingest::Dataset ds;
  ds.truncation = cfg.ingest.limits;
  ordered_json per_class = ordered_json::object();
  ingest::IngestCounters total;
  std::vector<std::string> warnings;
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    const std::string name = class_dirs[c].filename().string();
    ds.classes.push_back(name);
    const auto files = sorted_files(class_dirs[c]);
    if (files.empty()) throw InputError("class '" + name + "' has no capture files");
    ingest::IngestCounters counters;
    std::size_t segments = 0;
    for (const auto& f : files) {
      ingest::CaptureResult r;
      try {
        r = ingest::process_capture(f, cfg.ingest, name + "/" + f.filename().string());
      } catch (const std::exception& e) {
        warnings.push_back("skipping " + f.string() + ": " + e.what());
        std::cerr << "warning: " << warnings.back() << '\n';
        continue;
      }
      for (auto& w : r.warnings) {
        warnings.push_back(f.string() + ": " + w);
        std::cerr << "warning: " << warnings.back() << '\n';
      }
      counters += r.counters;
      for (auto& s : r.segments) {
        s.label = static_cast<int>(c);
        ds.segments.push_back(std::move(s));
        ++segments;
      }
    }
    if (segments == 0) throw InputError("class '" + name + "' has zero usable segments");
    per_class[name] = {{"segments", segments}, {"dropped", counters.to_json()}};
    total += counters;
  }
  ingest::write_dataset(fs::path(output), ds);
  ordered_json summary;
  summary["dataset"] = output;
  summary["segments"] = ds.segments.size();
  summary["classes"] = per_class;
  summary["dropped"] = total.to_json();
  summary["warnings"] = warnings;
  if (!summary_path.empty()) write_json(summary_path, summary);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

// ---- train / evaluate / predict -----------------------------------------

std::vector<train::Sample> samples_for(const ingest::Dataset& ds, const RunConfig& cfg) {
  return train::build_samples(ds, cfg.window, cfg.train.workers);
}

ordered_json mean_metrics(const std::vector<ordered_json>& runs) {
  ordered_json out;
  for (const char* key : {"accuracy", "macro_precision", "macro_recall", "macro_f1"}) {
    double s = 0, ss = 0;
    for (const auto& r : runs) {
      const double v = r.at(key).get<double>();
      s += v;
      ss += v * v;
    }
    const double n = static_cast<double>(runs.size());
    const double mean = s / n;
    out[key] = {{"mean", mean}, {"std", std::sqrt(std::max(0.0, ss / n - mean * mean))}};
  }
  return out;
}

int cmd_train(RunConfig cfg, const std::string& dataset_path, const std::string& out_dir) {
  const auto ds = load_dataset(dataset_path);
  if (ds.num_classes() < 2) throw InputError("dataset needs at least two classes");
  cfg.model.num_classes = ds.num_classes();
  cfg.model.validate();
  cfg.paths["dataset"] = dataset_path;
  cfg.paths["out"] = out_dir;
  echo_config(cfg);
  const auto samples = samples_for(ds, cfg);
  fs::create_directories(out_dir);
  write_json(fs::path(out_dir) / "config.json", to_json(cfg));

  std::vector<ordered_json> run_metrics;
  for (std::size_t run = 0; run < cfg.repeat; ++run) {
    train::TrainConfig tc = cfg.train;
    tc.seed = cfg.train.seed + run;
    const fs::path dir = cfg.repeat == 1 ? fs::path(out_dir) : fs::path(out_dir) / ("run" + std::to_string(run));
    fs::create_directories(dir);
    auto result = train::train(samples, cfg.model, tc, ds.classes, [&](const train::EpochRecord& e) {
      std::cerr << "run " << run << " epoch " << e.epoch << " lr " << e.lr << " loss " << e.loss << " train_acc "
                << e.train_accuracy << '\n';
    });
    result.model.save(dir / "model.ckpt", ds.classes);
    write_json(dir / "history.json", train::history_to_json(result.history));
    ordered_json report;
    report["seed"] = tc.seed;
    report["train_segments"] = result.split.train.size();
    report["test_segments"] = result.split.test.size();
    if (!result.split.test.empty()) {
      const auto test = train::select(samples, result.split.test);
      report["test"] = train::metrics_to_json(train::evaluate(result.model, test, cfg.train.workers), ds.classes);
      run_metrics.push_back(report["test"]);
    }
    write_json(dir / "metrics.json", report);
    std::cout << report.dump() << '\n';
  }
  if (cfg.repeat > 1 && !run_metrics.empty()) {
    const auto summary = mean_metrics(run_metrics);
    write_json(fs::path(out_dir) / "summary.json", summary);
    std::cout << summary.dump() << '\n';
  }
  return 0;
}

model::TfeGnn::Loaded load_model(const std::string& path) {
  if (!fs::exists(path)) throw InputError("model checkpoint '" + path + "' does not exist");
  return model::TfeGnn::load(path);
}

int cmd_evaluate(RunConfig cfg, const std::string& dataset_path, const std::string& model_path,
                 const std::string& split, const std::string& out) {
  auto loaded = load_model(model_path);
  const auto ds = load_dataset(dataset_path);
  if (loaded.model.config().num_classes != ds.num_classes()) {
    throw InputError("model has " + std::to_string(loaded.model.config().num_classes) + " classes but dataset has " +
                     std::to_string(ds.num_classes()));
  }
  cfg.model = loaded.model.config();
  cfg.paths["dataset"] = dataset_path;
  cfg.paths["model"] = model_path;
  echo_config(cfg);
  const auto samples = samples_for(ds, cfg);
  std::vector<const train::Sample*> chosen;
  if (split == "all") {
    chosen = train::pointers(samples);
  } else {
    std::vector<std::size_t> labels;
    for (const auto& s : samples) labels.push_back(s.label);
    const auto sp = train::stratified_split(labels, ds.num_classes(), cfg.train.test_fraction, util::mix_seed(cfg.train.seed, 3));
    chosen = train::select(samples, split == "test" ? sp.test : sp.train);
  }
  if (chosen.empty()) throw InputError("evaluation split '" + split + "' is empty");
  const auto report = train::metrics_to_json(train::evaluate(loaded.model, chosen, cfg.train.workers),
                                             loaded.classes.empty() ? ds.classes : loaded.classes);
  if (!out.empty()) write_json(out, report);
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_predict(RunConfig cfg, const std::string& input, const std::string& model_path) {
  auto loaded = load_model(model_path);
  if (!fs::exists(input)) throw InputError("input '" + input + "' does not exist");
  cfg.model = loaded.model.config();
  cfg.paths["input"] = input;
  cfg.paths["model"] = model_path;
  echo_config(cfg);
  ingest::Dataset ds;
  if (looks_like_pcap(input)) {
    auto r = ingest::process_capture(input, cfg.ingest);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    ds.segments = std::move(r.segments);
  } else {
    ds = load_dataset(input);
  }
  std::vector<train::Sample> samples(ds.segments.size());
  for (std::size_t i = 0; i < ds.segments.size(); ++i) {
    samples[i].graphs = model::segment_graphs(ds.segments[i], cfg.window);
    samples[i].origin = ds.segments[i].origin;
  }
  const auto logits = train::predict_logits(loaded.model, train::pointers(samples), cfg.train.workers);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto probs = ad::softmax(logits[i]);
    const auto pred = train::argmax(logits[i]);
    ordered_json line;
    line["origin"] = samples[i].origin;
    line["predicted"] = pred;
    if (pred < loaded.classes.size()) line["class"] = loaded.classes[pred];
    line["probabilities"] = probs;
    std::cout << line.dump() << '\n';
  }
  return 0;
}

// ---- stats ----------------------------------------------------------------

std::size_t nearest_rank(const std::vector<std::size_t>& sorted, double p) {
  const auto n = static_cast<double>(sorted.size());
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(p / 100.0 * n)));
  return sorted[rank - 1];
}

int cmd_stats(RunConfig cfg, const std::string& input) {
  cfg.paths["input"] = input;
  echo_config(cfg);
  std::vector<std::size_t> lengths;
  if (fs::is_directory(input)) {
    // flow lengths before any filtering: one entry per bidirectional flow
    ingest::IngestOptions opt = cfg.ingest;
    opt.mode = ingest::SegmentMode::kFlow;
    for (const auto& e : fs::recursive_directory_iterator(input)) {
      if (!e.is_regular_file()) continue;
      try {
        const auto cap = ingest::parse_capture(e.path());
        for (const auto& s : ingest::assemble_segments(cap.packets, opt, nullptr, "", cap.link_type)) {
          lengths.push_back(s.raw_packet_count);
        }
      } catch (const std::exception& ex) {
        std::cerr << "warning: skipping " << e.path().string() << ": " << ex.what() << '\n';
      }
    }
  } else {
    for (const auto& s : load_dataset(input).segments) lengths.push_back(s.raw_packet_count);
  }
  std::sort(lengths.begin(), lengths.end());
  ordered_json report;
  report["count"] = lengths.size();
  ordered_json dist = ordered_json::object();
  std::map<std::size_t, std::size_t> counts;
  for (auto l : lengths) ++counts[l];
  for (auto [l, c] : counts) dist[std::to_string(l)] = c;
  report["distribution"] = dist;
  ordered_json hist = ordered_json::array();
  if (!lengths.empty()) {
    for (std::size_t lo = 1; lo <= lengths.back(); lo *= 2) {
      std::size_t n = 0;
      for (auto l : lengths) n += l >= lo && l < 2 * lo;
      hist.push_back({{"lo", lo}, {"hi", 2 * lo}, {"count", n}});
    }
    report["p50"] = nearest_rank(lengths, 50);
    report["p90"] = nearest_rank(lengths, 90);
    report["p99"] = nearest_rank(lengths, 99);
  }
  report["histogram"] = hist;
  report["lengths"] = lengths;
  std::cout << report.dump(2) << '\n';
  return 0;
}

// ---- synth ----------------------------------------------------------------

int cmd_synth(RunConfig cfg, synth::SynthOptions opt, const std::string& output, const std::string& pcap_dir) {
  opt.seed = cfg.train.seed;
  opt.limits = cfg.ingest.limits;
  if (output.empty() && pcap_dir.empty()) throw InputError("synth needs --out and/or --pcap-dir");
  if (!output.empty()) cfg.paths["out"] = output;
  if (!pcap_dir.empty()) cfg.paths["pcap_dir"] = pcap_dir;
  echo_config(cfg);
  opt.validate();
  ordered_json report;
  if (!output.empty()) {
    const auto ds = synth::synthesize_dataset(opt);
    ingest::write_dataset(fs::path(output), ds);
    report["dataset"] = output;
    report["segments"] = ds.segments.size();
  }
  if (!pcap_dir.empty()) {
    ordered_json dirs = ordered_json::array();
    for (const auto& d : synth::write_capture_corpus(pcap_dir, opt)) dirs.push_back(d.string());
    report["capture_dirs"] = dirs;
  }
  std::cout << report.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TFE-GNN: byte-level graph classifier for encrypted traffic"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "tfegnn 0.1.0");

  std::string input, output, summary_path, model_path, split = "all", pcap_dir;

  CommonFlags pre_flags, train_flags, eval_flags, pred_flags, stats_flags, synth_flags;

  auto* pre = app.add_subcommand("preprocess", "Build a dataset from <input>/<class>/*.pcap");
  pre->add_option("input", input, "Directory with one subdirectory per class")->required();
  pre->add_option("-o,--out", output, "Dataset file (JSON lines)")->required();
  pre->add_option("--summary", summary_path, "Also write the summary JSON here");
  pre_flags.attach(pre);

  auto* tr = app.add_subcommand("train", "Train on a dataset; writes checkpoint, history and metrics");
  tr->add_option("dataset", input, "Dataset file")->required();
  tr->add_option("-o,--out", output, "Output directory")->required();
  train_flags.attach(tr);

  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
  ev->add_option("dataset", input, "Dataset file")->required();
  ev->add_option("-m,--model", model_path, "Checkpoint written by train")->required();
  ev->add_option("--split", split, "all|train|test (train/test use the seeded stratified split)")
      ->check(CLI::IsMember({"all", "train", "test"}));
  ev->add_option("-o,--out", output, "Also write the metrics report here");
  eval_flags.attach(ev);

  auto* pr = app.add_subcommand("predict", "Per-segment predictions for a capture or dataset");
  pr->add_option("input", input, "Capture file or dataset file")->required();
  pr->add_option("-m,--model", model_path, "Checkpoint written by train")->required();
  pred_flags.attach(pr);

  auto* st = app.add_subcommand("stats", "Flow-length distribution of a dataset or capture directory");
  st->add_option("input", input, "Dataset file or capture directory")->required();
  stats_flags.attach(st);

  synth::SynthOptions sopt;
  auto* sy = app.add_subcommand("synth", "Generate a synthetic labelled dataset");
  sy->add_option("--classes", sopt.classes, "Number of classes")->capture_default_str();
  sy->add_option("--segments-per-class", sopt.segments_per_class, "Segments per class")->capture_default_str();
  sy->add_option("--alphabet-size", sopt.alphabet_size, "Byte values per class alphabet")->capture_default_str();
  sy->add_flag("--conflicting", sopt.conflicting, "Payload bytes use the next class's alphabet");
  sy->add_option("-o,--out", output, "Dataset file");
  sy->add_option("--pcap-dir", pcap_dir, "Also write a capture corpus (one subdirectory per class)");
  synth_flags.attach(sy);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    if (*pre) return cmd_preprocess([&] { auto c = pre_flags.resolve(); echo_config(c); return c; }(), input, output, summary_path);
    if (*tr) return cmd_train(train_flags.resolve(), input, output);
    if (*ev) return cmd_evaluate(eval_flags.resolve(), input, model_path, split, output);
    if (*pr) return cmd_predict(pred_flags.resolve(), input, model_path);
    if (*st) return cmd_stats(stats_flags.resolve(), input);
    if (*sy) return cmd_synth(synth_flags.resolve(), sopt, output, pcap_dir);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ingest::DatasetError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ingest::PcapError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ad::CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ad::ShapeError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}
