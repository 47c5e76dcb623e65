#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <stdexcept>

namespace tfegnn::train {

struct TrainConfig {
  std::size_t max_epochs = 120;
  double lr_start = 1e-2;
  double lr_end = 1e-4;
  double warmup_ratio = 0.1;
  /// Clamped to the training-set size.
  std::size_t batch_size = 512;
  std::uint64_t seed = 0;
  double test_fraction = 0.1;
  /// Threads for graph building and evaluation.
  std::size_t workers = 1;

  void validate() const {
    if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw std::invalid_argument("train config: warmup_ratio must lie in [0, 1)");
    if (!(lr_end > 0.0 && lr_start >= lr_end)) throw std::invalid_argument("train config: need lr_start >= lr_end > 0");
    if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be positive");
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw std::invalid_argument("train config: test_fraction must lie in [0, 1)");
  }

  bool operator==(const TrainConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"max_epochs", c.max_epochs}, {"lr_start", c.lr_start},         {"lr_end", c.lr_end},
                     {"warmup_ratio", c.warmup_ratio}, {"batch_size", c.batch_size}, {"seed", c.seed},
                     {"test_fraction", c.test_fraction}, {"workers", c.workers}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.lr_start = j.value("lr_start", d.lr_start);
  c.lr_end = j.value("lr_end", d.lr_end);
  c.warmup_ratio = j.value("warmup_ratio", d.warmup_ratio);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.test_fraction = j.value("test_fraction", d.test_fraction);
  c.workers = j.value("workers", d.workers);
}

/// Linear warmup from 0 to lr_start over the first warmup_ratio*total
/// steps, then linear decay to lr_end at step == total_steps.
inline double lr_schedule(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  if (step > total_steps) throw std::out_of_range("lr_schedule: step beyond total_steps");
  const double s = static_cast<double>(step);
  const double warm = cfg.warmup_ratio * static_cast<double>(total_steps);
  if (s < warm) return cfg.lr_start * s / warm;
  const double decay_len = static_cast<double>(total_steps) - warm;
  if (decay_len <= 0.0) return cfg.lr_end;
  return cfg.lr_end + (cfg.lr_start - cfg.lr_end) * (static_cast<double>(total_steps) - s) / decay_len;
}

}  // namespace tfegnn::train
