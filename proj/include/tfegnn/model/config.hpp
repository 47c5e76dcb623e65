#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "tfegnn/autodiff/ops.hpp"

namespace tfegnn::model {

using Pooling = ad::Reduce;

inline const char* pooling_name(Pooling p) {
  switch (p) {
    case Pooling::kMean: return "mean";
    case Pooling::kSum: return "sum";
    case Pooling::kMax: return "max";
  }
  return "mean";
}

inline Pooling parse_pooling(const std::string& s) {
  if (s == "mean") return Pooling::kMean;
  if (s == "sum") return Pooling::kSum;
  if (s == "max") return Pooling::kMax;
  throw std::invalid_argument("unknown pooling '" + s + "' (expected mean|sum|max)");
}

inline constexpr std::size_t kSageLayers = 4;

struct ModelConfig {
  std::size_t embed_dim = 50;
  std::vector<std::size_t> sage_dims{128, 128, 128, 128};
  Pooling pooling = Pooling::kMean;
  std::size_t lstm_hidden = 256;
  std::size_t classifier_hidden = 256;
  std::size_t num_classes = 2;
  double dropout = 0.2;
  /// false selects the single shared embedding table (ablation without dual embedding).
  bool dual_embedding = true;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  /// Width of a pooled graph vector: the concatenation of all SAGE layer outputs.
  [[nodiscard]] std::size_t graph_dim() const { return std::accumulate(sage_dims.begin(), sage_dims.end(), std::size_t{0}); }
  [[nodiscard]] std::size_t fused_dim() const { return 2 * graph_dim(); }

  void validate() const {
    if (sage_dims.size() != kSageLayers) {
      throw std::invalid_argument("model config: expected exactly 4 SAGE layer widths, got " +
                                  std::to_string(sage_dims.size()));
    }
    for (auto d : sage_dims) {
      if (d == 0) throw std::invalid_argument("model config: SAGE widths must be positive");
    }
    if (embed_dim == 0 || lstm_hidden == 0 || classifier_hidden == 0) {
      throw std::invalid_argument("model config: widths must be positive");
    }
    if (num_classes < 2) throw std::invalid_argument("model config: need at least 2 classes");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("model config: dropout must lie in [0, 1)");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"embed_dim", c.embed_dim},
                     {"sage_dims", c.sage_dims},
                     {"pooling", pooling_name(c.pooling)},
                     {"lstm_hidden", c.lstm_hidden},
                     {"classifier_hidden", c.classifier_hidden},
                     {"num_classes", c.num_classes},
                     {"dropout", c.dropout},
                     {"dual_embedding", c.dual_embedding},
                     {"bn_momentum", c.bn_momentum},
                     {"bn_eps", c.bn_eps}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.sage_dims = j.value("sage_dims", d.sage_dims);
  c.pooling = parse_pooling(j.value("pooling", std::string(pooling_name(d.pooling))));
  c.lstm_hidden = j.value("lstm_hidden", d.lstm_hidden);
  c.classifier_hidden = j.value("classifier_hidden", d.classifier_hidden);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.dropout = j.value("dropout", d.dropout);
  c.dual_embedding = j.value("dual_embedding", d.dual_embedding);
  c.bn_momentum = j.value("bn_momentum", d.bn_momentum);
  c.bn_eps = j.value("bn_eps", d.bn_eps);
}

}  // namespace tfegnn::model
