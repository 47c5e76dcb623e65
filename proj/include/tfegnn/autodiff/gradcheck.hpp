#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "tfegnn/autodiff/tape.hpp"
#include "tfegnn/util/rng.hpp"

namespace tfegnn::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst_param;
};

struct GradCheckOptions {
  double eps = 1e-4;
  /// Coordinates to sample across all parameters (0 = every coordinate).
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  /// Mode of the tapes handed to `f`. The function must be deterministic,
  /// so dropout has to be off for training tapes.
  bool training = false;
};

/// Compares tape gradients of a scalar function of `params` against central
/// finite differences. Relative error per coordinate is
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
/// Parameter values are restored on return; deferred side effects are discarded.
inline GradCheckResult gradient_check(const std::function<Var(Tape&)>& f, std::span<Parameter* const> params,
                                      GradCheckOptions opt = {}) {
  std::vector<Tensor> analytic;
  {
    Tape tape(opt.training);
    Var loss = f(tape);
    tape.compute_gradients(loss);
    for (auto* p : params) analytic.push_back(tape.grad(tape.param(*p)));
  }
  auto evaluate = [&] {
    Tape tape(opt.training);
    return f(tape).value().item();
  };

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k]->value.size(); ++i) coords.emplace_back(k, i);
  }
  if (opt.max_coords > 0 && coords.size() > opt.max_coords) {
    util::Rng rng(opt.seed);
    rng.shuffle(std::span(coords));
    coords.resize(opt.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  for (auto [k, i] : coords) {
    double& x = params[k]->value[i];
    const double saved = x;
    x = saved + opt.eps;
    const double up = evaluate();
    x = saved - opt.eps;
    const double down = evaluate();
    x = saved;
    const double numeric = (up - down) / (2.0 * opt.eps);
    const double a = analytic[k][i];
    const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_param = params[k]->name + "[" + std::to_string(i) + "]";
    }
    ++result.coords_checked;
  }
  return result;
}

}  // namespace tfegnn::ad
