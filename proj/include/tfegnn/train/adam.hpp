#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "tfegnn/autodiff/tensor.hpp"

namespace tfegnn::train {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;
};

/// One bias-corrected Adam update of every trainable parameter from its
/// accumulated `grad`. Buffers are left untouched.
inline void adam_step(ad::ParameterStore& params, AdamState& state, double lr, const AdamOptions& opt = {}) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) throw ad::ShapeError("adam_step: optimizer state does not match parameter count");
  ++state.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.trainable) continue;
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.shape() != p.value.shape()) throw ad::ShapeError("adam_step(" + p.name + ")", m.shape(), p.value.shape());
    if (p.grad.shape() != p.value.shape()) throw ad::ShapeError("adam_step(" + p.name + " grad)", p.grad.shape(), p.value.shape());
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

}  // namespace tfegnn::train
