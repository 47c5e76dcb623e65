#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfegnn/autodiff/ops.hpp"
#include "tfegnn/ingest/dataset.hpp"
#include "tfegnn/model/tfe_gnn.hpp"
#include "tfegnn/train/adam.hpp"
#include "tfegnn/train/metrics.hpp"
#include "tfegnn/train/schedule.hpp"
#include "tfegnn/util/parallel.hpp"
#include "tfegnn/util/rng.hpp"

namespace tfegnn::train {

/// A segment ready for the model: its packets' graph pairs and label.
struct Sample {
  std::size_t label = 0;
  std::vector<graph::PacketGraphs> graphs;
  std::string origin;
};

inline std::vector<Sample> build_samples(const ingest::Dataset& ds, std::size_t window, std::size_t workers = 1) {
  std::vector<Sample> out(ds.segments.size());
  util::parallel_chunks(ds.segments.size(), workers, [&](std::size_t, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& s = ds.segments[i];
      out[i] = Sample{static_cast<std::size_t>(s.label), model::segment_graphs(s, window), s.origin};
    }
  });
  return out;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per class, shuffles that class's indices and holds out
/// round(count * test_fraction) of them. Both lists come back sorted.
inline Split stratified_split(std::span<const std::size_t> labels, std::size_t num_classes, double test_fraction,
                              std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw std::out_of_range("stratified_split: label out of range");
    by_class[labels[i]].push_back(i);
  }
  Split split;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& idx = by_class[c];
    util::Rng rng(util::mix_seed(seed, c));
    rng.shuffle(std::span(idx));
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * test_fraction));
    split.test.insert(split.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.train.insert(split.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double train_accuracy = 0.0;
};

inline nlohmann::ordered_json history_to_json(const std::vector<EpochRecord>& h) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : h) {
    arr.push_back({{"epoch", r.epoch}, {"lr", r.lr}, {"loss", r.loss}, {"train_accuracy", r.train_accuracy}});
  }
  return arr;
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Mini-batch training of `model` on `samples` with scheduled Adam.
///
/// Each mini-batch is forwarded on one tape, so batch normalization sees
/// every node of the batch; the loss is the mean segment cross entropy.
/// Shuffles and dropout masks derive from cfg.seed, so results are
/// bit-identical for a given seed. The learning rate for update k
/// (0-based) is lr_schedule(k + 1, total_steps).
inline std::vector<EpochRecord> fit(model::TfeGnn& model, std::span<const Sample* const> samples, const TrainConfig& cfg,
                                    const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  std::vector<EpochRecord> history;
  if (cfg.max_epochs == 0 || samples.empty()) return history;
  auto& params = model.params();
  const std::size_t n = samples.size();
  const std::size_t batch = std::min(cfg.batch_size, n);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t total_steps = cfg.max_epochs * steps_per_epoch;
  AdamState adam;
  std::vector<std::size_t> order(n);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    util::Rng shuffle_rng(util::mix_seed(cfg.seed, 1, epoch));
    shuffle_rng.shuffle(std::span(order));

    double loss_sum = 0.0;
    std::size_t correct = 0;
    double lr = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      std::vector<std::span<const graph::PacketGraphs>> segs;
      segs.reserve(len);
      for (std::size_t k = 0; k < len; ++k) segs.emplace_back(samples[order[start + k]]->graphs);

      ad::Tape tape(true, util::mix_seed(cfg.seed, 2, step));
      const auto logits = model.forward_batch(tape, segs);
      ad::Var total;
      for (std::size_t k = 0; k < len; ++k) {
        const std::size_t label = samples[order[start + k]]->label;
        ad::Var l = model.loss(logits[k], label);
        loss_sum += l.value().item();
        correct += argmax(logits[k].value().values()) == label;
        total = total.valid() ? ad::add(total, l) : l;
      }
      ad::Var loss = ad::scale(total, 1.0 / static_cast<double>(len));

      params.zero_grad();
      tape.backward(loss);
      tape.commit();
      lr = lr_schedule(step + 1, total_steps, cfg);
      adam_step(params, adam, lr);
      ++step;
    }
    EpochRecord rec{epoch + 1, lr, loss_sum / static_cast<double>(n),
                    static_cast<double>(correct) / static_cast<double>(n)};
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

/// Eval-mode logits for each sample; each segment runs on its own tape.
inline std::vector<std::vector<double>> predict_logits(model::TfeGnn& model, std::span<const Sample* const> samples,
                                                       std::size_t workers = 1) {
  std::vector<std::vector<double>> out(samples.size());
  util::parallel_chunks(samples.size(), workers, [&](std::size_t, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      ad::Tape tape(false);
      auto logits = model.forward_segment(tape, samples[i]->graphs);
      const auto v = logits.value().values();
      out[i].assign(v.begin(), v.end());
    }
  });
  return out;
}

inline Metrics evaluate(model::TfeGnn& model, std::span<const Sample* const> samples, std::size_t workers = 1) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty split");
  const auto logits = predict_logits(model, samples, workers);
  std::vector<std::size_t> labels, preds;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    labels.push_back(samples[i]->label);
    preds.push_back(argmax(logits[i]));
  }
  return compute_metrics(labels, preds, model.config().num_classes);
}

inline std::vector<const Sample*> select(std::span<const Sample> all, std::span<const std::size_t> idx) {
  std::vector<const Sample*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&all[i]);
  return out;
}

inline std::vector<const Sample*> pointers(std::span<const Sample> all) {
  std::vector<const Sample*> out;
  for (const auto& s : all) out.push_back(&s);
  return out;
}

struct TrainResult {
  model::TfeGnn model;
  std::vector<EpochRecord> history;
  Split split;
};

/// Stratified split, model initialisation and fit, all driven by cfg.seed.
inline TrainResult train(std::span<const Sample> dataset, const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                         const std::vector<std::string>& class_names = {},
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  const std::size_t classes = model_cfg.num_classes;
  std::vector<std::size_t> labels;
  for (const auto& s : dataset) labels.push_back(s.label);
  Split split = stratified_split(labels, classes, cfg.test_fraction, util::mix_seed(cfg.seed, 3));
  std::vector<std::size_t> per_class(classes, 0);
  for (auto i : split.train) ++per_class[dataset[i].label];
  for (std::size_t c = 0; c < classes; ++c) {
    if (per_class[c] == 0) {
      const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
      throw std::invalid_argument("train: class '" + name + "' has no training samples");
    }
  }
  model::TfeGnn m(model_cfg, util::mix_seed(cfg.seed, 0));
  auto train_set = select(dataset, split.train);
  auto history = fit(m, train_set, cfg, on_epoch);
  return {std::move(m), std::move(history), std::move(split)};
}

}  // namespace tfegnn::train
