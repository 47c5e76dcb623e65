#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tfegnn::ad {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

/// Error raised by any op whose operands have incompatible shapes.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const Shape& a, const Shape& b)
      : std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b)) {}
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Dense row-major float64 array. Rank 0 is a scalar.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
      throw ShapeError("tensor: shape " + shape_str(shape_) + " needs " +
                       std::to_string(shape_numel(shape_)) + " values, got " +
                       std::to_string(data_.size()));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
  }

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t rank() const { return shape_.size(); }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty() && shape_.empty(); }

  /// Rows when viewed as a matrix: vectors and scalars are a single row.
  [[nodiscard]] std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  [[nodiscard]] std::size_t cols() const {
    if (shape_.empty()) return 1;
    return shape_.back();
  }

  double* data() { return data_.data(); }
  [[nodiscard]] const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  [[nodiscard]] std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  [[nodiscard]] double item() const {
    if (data_.size() != 1) {
      throw ShapeError("item: tensor of shape " + shape_str(shape_) + " is not a scalar");
    }
    return data_[0];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& other) {
    if (other.data_.size() != data_.size()) throw ShapeError("+=", shape_, other.shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Named tensor owned by a ParameterStore. Non-trainable entries are buffers
/// (batch-norm running statistics): they are checkpointed but never updated
/// by the optimizer and never receive gradients.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  std::size_t index = 0;

  void zero_grad() {
    if (grad.size() != value.size()) grad = Tensor(value.shape());
    grad.fill(0.0);
  }
};

/// Ordered collection of uniquely named parameters and buffers.
/// Addresses are stable for the lifetime of the store.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& add(std::string name, Tensor init, bool trainable = true) {
    if (by_name_.count(name)) {
      throw std::invalid_argument("duplicate parameter name '" + name + "'");
    }
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->grad = Tensor(init.shape());
    p->value = std::move(init);
    p->trainable = trainable;
    p->index = items_.size();
    by_name_.emplace(std::move(name), items_.size());
    items_.push_back(std::move(p));
    return *items_.back();
  }

  Parameter& add_buffer(std::string name, Tensor init) { return add(std::move(name), std::move(init), false); }

  [[nodiscard]] std::size_t size() const { return items_.size(); }
  Parameter& operator[](std::size_t i) { return *items_[i]; }
  const Parameter& operator[](std::size_t i) const { return *items_[i]; }

  [[nodiscard]] bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

  Parameter& get(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return *items_[it->second];
  }
  [[nodiscard]] const Parameter& get(const std::string& name) const {
    return const_cast<ParameterStore*>(this)->get(name);
  }

  std::vector<Parameter*> trainable() {
    std::vector<Parameter*> out;
    for (auto& p : items_) {
      if (p->trainable) out.push_back(p.get());
    }
    return out;
  }

  void zero_grad() {
    for (auto& p : items_) p->zero_grad();
  }

  /// Deep copy of values; gradients are reset.
  [[nodiscard]] ParameterStore clone() const {
    ParameterStore out;
    for (const auto& p : items_) out.add(p->name, p->value, p->trainable);
    return out;
  }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  [[nodiscard]] auto begin() const { return items_.begin(); }
  [[nodiscard]] auto end() const { return items_.end(); }

 private:
  std::vector<std::unique_ptr<Parameter>> items_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

}  // namespace tfegnn::ad
