#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tfegnn/autodiff/tensor.hpp"
#include "tfegnn/util/rng.hpp"

namespace tfegnn::ad {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] Tape& tape() const { return *tape_; }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] const Shape& shape() const { return value().shape(); }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient rule for one recorded op. `input_grads[k]` is null when input k
/// does not require a gradient; otherwise it is a zero-initialised buffer
/// that the rule accumulates into.
using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor* const> input_grads)>;

/// Records a forward computation for reverse-mode differentiation.
///
/// A tape belongs to one worker. Parameters are read through `param()` and
/// are never written during forward or backward; gradients land in the tape
/// and are transferred to `Parameter::grad` (or a caller buffer) by
/// `flush_gradients`. Side effects that must happen in a deterministic order
/// across tapes (batch-norm running statistics) are queued with `defer` and
/// applied by `commit`.
class Tape {
 public:
  explicit Tape(bool training = false, std::uint64_t seed = 0) : training_(training), rng_(seed) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  [[nodiscard]] bool training() const { return training_; }
  util::Rng& rng() { return rng_; }

  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, nullptr, false});
    return {this, nodes_.size() - 1};
  }

  /// Leaf for a parameter; repeated calls return the same node.
  Var param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {this, it->second};
    nodes_.push_back(Node{p.value, {}, {}, nullptr, &p, p.trainable});
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return {this, nodes_.size() - 1};
  }

  /// Appends an op result. The gradient rule is dropped when no input needs one.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
    bool needs = false;
    for (auto id : inputs) needs = needs || nodes_.at(id).requires_grad;
    if (!needs) {
      inputs.clear();
      backward = nullptr;
    }
    nodes_.push_back(Node{std::move(value), {}, std::move(inputs), std::move(backward), nullptr, needs});
    return {this, nodes_.size() - 1};
  }

  [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// Gradient of the last backward target with respect to `v` (zeros when unreached).
  [[nodiscard]] Tensor grad(Var v) const {
    const auto& n = nodes_.at(v.id());
    return n.grad.size() == n.value.size() ? n.grad : Tensor(n.value.shape());
  }

  /// Runs reverse accumulation from a scalar. Parameter gradients stay on
  /// the tape until flushed.
  void compute_gradients(Var loss) {
    if (&loss.tape() != this) throw std::invalid_argument("backward: variable belongs to another tape");
    auto& root = nodes_.at(loss.id());
    if (root.value.size() != 1) {
      throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(root.value.shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor();
    if (!root.requires_grad) return;
    root.grad = Tensor(root.value.shape(), 1.0);

    std::vector<Tensor*> input_grads;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      auto& node = nodes_[id];
      if (!node.backward || node.grad.size() == 0) continue;
      input_grads.clear();
      for (auto in : node.inputs) {
        auto& src = nodes_[in];
        if (!src.requires_grad) {
          input_grads.push_back(nullptr);
          continue;
        }
        if (src.grad.size() != src.value.size()) src.grad = Tensor(src.value.shape());
        input_grads.push_back(&src.grad);
      }
      node.backward(node.grad, input_grads);
    }
  }

  /// Adds each parameter's tape gradient into `sink(param, grad)`.
  void flush_gradients(const std::function<void(Parameter&, const Tensor&)>& sink) const {
    for (const auto& [param, id] : param_nodes_) {
      const auto& n = nodes_[id];
      if (param->trainable && n.grad.size() == n.value.size()) sink(*param, n.grad);
    }
  }

  /// Accumulates tape gradients into Parameter::grad.
  void flush_gradients() const {
    flush_gradients([](Parameter& p, const Tensor& g) {
      if (p.grad.size() != p.value.size()) p.zero_grad();
      p.grad += g;
    });
  }

  /// Computes gradients and accumulates them into every reachable
  /// parameter. Repeated calls without zero_grad() accumulate.
  void backward(Var loss) {
    compute_gradients(loss);
    flush_gradients();
  }

  void defer(std::function<void()> effect) { deferred_.push_back(std::move(effect)); }

  /// Applies deferred side effects in recording order, once.
  void commit() {
    for (auto& f : deferred_) f();
    deferred_.clear();
  }

  /// Hands the queued side effects to the caller (for ordered application
  /// after a parallel section).
  std::vector<std::function<void()>> take_deferred() { return std::exchange(deferred_, {}); }

 private:
  friend class Var;

  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param;
    bool requires_grad;
  };

  bool training_;
  util::Rng rng_;
  std::deque<Node> nodes_;
  std::unordered_map<Parameter*, std::size_t> param_nodes_;
  std::vector<std::function<void()>> deferred_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

}  // namespace tfegnn::ad
