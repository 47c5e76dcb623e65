#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tfegnn::train {

/// Accuracy plus macro-averaged precision/recall/F1. Rows of `confusion`
/// are true labels, columns predictions. A class with no predicted (or no
/// actual) positives contributes 0 to the corresponding macro average.
struct Metrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t total = 0;
};

inline Metrics compute_metrics(std::span<const std::size_t> labels, std::span<const std::size_t> predictions,
                               std::size_t num_classes) {
  if (labels.size() != predictions.size()) throw std::invalid_argument("metrics: label/prediction count mismatch");
  if (labels.empty()) throw std::invalid_argument("metrics: empty evaluation split");
  Metrics m;
  m.total = labels.size();
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) throw std::out_of_range("metrics: class index out of range");
    ++m.confusion[labels[i]][predictions[i]];
    correct += labels[i] == predictions[i];
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double tp = static_cast<double>(m.confusion[c][c]);
    double predicted = 0, actual = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      predicted += static_cast<double>(m.confusion[k][c]);
      actual += static_cast<double>(m.confusion[c][k]);
    }
    const double p = predicted > 0 ? tp / predicted : 0.0;
    const double r = actual > 0 ? tp / actual : 0.0;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    m.precision.push_back(p);
    m.recall.push_back(r);
    m.f1.push_back(f);
    m.macro_precision += p;
    m.macro_recall += r;
    m.macro_f1 += f;
  }
  m.macro_precision /= static_cast<double>(num_classes);
  m.macro_recall /= static_cast<double>(num_classes);
  m.macro_f1 /= static_cast<double>(num_classes);
  return m;
}

inline nlohmann::ordered_json metrics_to_json(const Metrics& m, const std::vector<std::string>& classes = {}) {
  nlohmann::ordered_json j;
  j["accuracy"] = m.accuracy;
  j["macro_precision"] = m.macro_precision;
  j["macro_recall"] = m.macro_recall;
  j["macro_f1"] = m.macro_f1;
  j["total"] = m.total;
  j["per_class"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < m.f1.size(); ++c) {
    j["per_class"].push_back({{"class", c < classes.size() ? classes[c] : std::to_string(c)},
                              {"precision", m.precision[c]},
                              {"recall", m.recall[c]},
                              {"f1", m.f1[c]}});
  }
  j["confusion_matrix"] = m.confusion;
  return j;
}

}  // namespace tfegnn::train
