#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tfegnn/autodiff/tape.hpp"
#include "tfegnn/autodiff/tensor.hpp"

/// Differentiable operations on Tape variables. Every op validates shapes
/// up front and throws ShapeError naming the op and both shapes.
namespace tfegnn::ad {

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

inline ConstMap as_matrix(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
inline MutMap as_matrix(Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

inline void require_matrix(const std::string& op, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(op + ": expected a matrix, got shape " + shape_str(t.shape()));
}

/// True when `b` broadcasts over the rows of `a` (a row vector of a.cols()).
inline bool row_broadcast(const Tensor& a, const Tensor& b) {
  return a.rank() == 2 && b.rank() >= 1 && b.rank() <= 2 && b.rows() == 1 && b.cols() == a.cols() &&
         a.shape() != b.shape();
}

inline void check_binary(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() && !row_broadcast(a, b)) throw ShapeError(op, a.shape(), b.shape());
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  detail::require_matrix("matmul", A);
  detail::require_matrix("matmul", B);
  if (A.cols() != B.rows()) throw ShapeError("matmul", A.shape(), B.shape());
  Tensor C({A.rows(), B.cols()});
  detail::as_matrix(C).noalias() = detail::as_matrix(A) * detail::as_matrix(B);
  const Tensor* pa = &A;
  const Tensor* pb = &B;
  return a.tape().record(std::move(C), {a.id(), b.id()}, [pa, pb](const Tensor& g, std::span<Tensor* const> in) {
    auto G = detail::as_matrix(g);
    if (in[0]) detail::as_matrix(*in[0]).noalias() += G * detail::as_matrix(*pb).transpose();
    if (in[1]) detail::as_matrix(*in[1]).noalias() += detail::as_matrix(*pa).transpose() * G;
  });
}

/// Elementwise sum; `b` may be a row vector broadcast over the rows of `a`.
inline Var add(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  detail::check_binary("add", A, B);
  Tensor out = A;
  const std::size_t n = B.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i % n];
  return a.tape().record(std::move(out), {a.id(), b.id()}, [n](const Tensor& g, std::span<Tensor* const> in) {
    if (in[0]) *in[0] += g;
    if (in[1]) {
      auto& gb = *in[1];
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
    }
  });
}

inline Var sub(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  detail::check_binary("sub", A, B);
  Tensor out = A;
  const std::size_t n = B.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i % n];
  return a.tape().record(std::move(out), {a.id(), b.id()}, [n](const Tensor& g, std::span<Tensor* const> in) {
    if (in[0]) *in[0] += g;
    if (in[1]) {
      auto& gb = *in[1];
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] -= g[i];
    }
  });
}

/// Elementwise (Hadamard) product with the same broadcasting as add.
inline Var mul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  detail::check_binary("mul", A, B);
  Tensor out = A;
  const std::size_t n = B.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i % n];
  const Tensor* pa = &A;
  const Tensor* pb = &B;
  return a.tape().record(std::move(out), {a.id(), b.id()}, [pa, pb, n](const Tensor& g, std::span<Tensor* const> in) {
    if (in[0]) {
      auto& ga = *in[0];
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*pb)[i % n];
    }
    if (in[1]) {
      auto& gb = *in[1];
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i] * (*pa)[i];
    }
  });
}

inline Var scale(Var a, double s) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= s;
  return a.tape().record(std::move(out), {a.id()}, [s](const Tensor& g, std::span<Tensor* const> in) {
    auto& ga = *in[0];
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

inline Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return a.tape().record(Tensor::scalar(total), {a.id()}, [](const Tensor& g, std::span<Tensor* const> in) {
    const double s = g[0];
    for (auto& v : in[0]->values()) v += s;
  });
}

inline Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

/// Concatenates matrices along axis 0 (rows) or 1 (columns).
inline Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  Tape& tape = parts[0].tape();
  const Tensor& first = parts[0].value();
  detail::require_matrix("concat", first);
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const Tensor& t = p.value();
    detail::require_matrix("concat", t);
    if (axis == 0 && t.cols() != first.cols()) throw ShapeError("concat(axis=0)", first.shape(), t.shape());
    if (axis == 1 && t.rows() != first.rows()) throw ShapeError("concat(axis=1)", first.shape(), t.shape());
    ids.push_back(p.id());
    extents.push_back(axis == 0 ? t.rows() : t.cols());
    if (axis == 0) rows += t.rows();
    else cols += t.cols();
  }
  if (axis == 0) cols = first.cols();
  else rows = first.rows();

  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& t = parts[k].value();
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t c = 0; c < t.cols(); ++c) {
        if (axis == 0) out.at(offset + r, c) = t.at(r, c);
        else out.at(r, offset + c) = t.at(r, c);
      }
    }
    offset += extents[k];
  }
  return tape.record(std::move(out), std::move(ids), [axis, extents](const Tensor& g, std::span<Tensor* const> in) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      if (in[k]) {
        auto& gk = *in[k];
        for (std::size_t r = 0; r < gk.rows(); ++r) {
          for (std::size_t c = 0; c < gk.cols(); ++c) {
            gk.at(r, c) += axis == 0 ? g.at(offset + r, c) : g.at(r, offset + c);
          }
        }
      }
      offset += extents[k];
    }
  });
}

inline Var concat(std::initializer_list<Var> parts, int axis) {
  std::vector<Var> v(parts);
  return concat(std::span<const Var>(v), axis);
}

/// Rows [begin, begin + count) of a matrix.
inline Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& A = a.value();
  detail::require_matrix("slice_rows", A);
  if (begin + count > A.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                     ") out of range for shape " + shape_str(A.shape()));
  }
  const std::size_t cols = A.cols();
  Tensor out({count, cols});
  std::copy_n(A.data() + begin * cols, count * cols, out.data());
  return a.tape().record(std::move(out), {a.id()}, [begin, cols](const Tensor& g, std::span<Tensor* const> in) {
    double* dst = in[0]->data() + begin * cols;
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

/// Columns [begin, begin + count) of a matrix.
inline Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& A = a.value();
  detail::require_matrix("slice_cols", A);
  if (begin + count > A.cols()) {
    throw ShapeError("slice_cols: cols [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                     ") out of range for shape " + shape_str(A.shape()));
  }
  const std::size_t rows = A.rows();
  Tensor out({rows, count});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < count; ++c) out.at(r, c) = A.at(r, begin + c);
  }
  return a.tape().record(std::move(out), {a.id()}, [begin, rows, count](const Tensor& g, std::span<Tensor* const> in) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < count; ++c) in[0]->at(r, begin + c) += g.at(r, c);
    }
  });
}

enum class Reduce { kMean, kSum, kMax };

/// Reduces contiguous row groups: rows [offsets[k], offsets[k+1]) become
/// output row k. Max routes the gradient to the first arg-max row.
inline Var segment_reduce(Var a, std::span<const std::size_t> offsets, Reduce mode) {
  const Tensor& A = a.value();
  detail::require_matrix("segment_reduce", A);
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != A.rows()) {
    throw ShapeError("segment_reduce: offsets do not cover the " + std::to_string(A.rows()) + " rows of " +
                     shape_str(A.shape()));
  }
  const std::size_t groups = offsets.size() - 1;
  const std::size_t cols = A.cols();
  Tensor out({groups, cols});
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  if (mode == Reduce::kMax) argmax->assign(groups * cols, 0);
  for (std::size_t k = 0; k < groups; ++k) {
    const std::size_t lo = offsets[k], hi = offsets[k + 1];
    if (hi <= lo) throw ShapeError("segment_reduce: group " + std::to_string(k) + " is empty");
    for (std::size_t c = 0; c < cols; ++c) {
      if (mode == Reduce::kMax) {
        std::size_t best = lo;
        for (std::size_t r = lo + 1; r < hi; ++r) {
          if (A.at(r, c) > A.at(best, c)) best = r;
        }
        out.at(k, c) = A.at(best, c);
        (*argmax)[k * cols + c] = best;
      } else {
        double s = 0.0;
        for (std::size_t r = lo; r < hi; ++r) s += A.at(r, c);
        out.at(k, c) = mode == Reduce::kMean ? s / static_cast<double>(hi - lo) : s;
      }
    }
  }
  std::vector<std::size_t> offs(offsets.begin(), offsets.end());
  return a.tape().record(std::move(out), {a.id()},
                         [offs, mode, cols, argmax](const Tensor& g, std::span<Tensor* const> in) {
                           auto& ga = *in[0];
                           for (std::size_t k = 0; k + 1 < offs.size(); ++k) {
                             const std::size_t lo = offs[k], hi = offs[k + 1];
                             for (std::size_t c = 0; c < cols; ++c) {
                               const double gk = g.at(k, c);
                               if (mode == Reduce::kMax) {
                                 ga.at((*argmax)[k * cols + c], c) += gk;
                                 continue;
                               }
                               const double share = mode == Reduce::kMean ? gk / static_cast<double>(hi - lo) : gk;
                               for (std::size_t r = lo; r < hi; ++r) ga.at(r, c) += share;
                             }
                           }
                         });
}

/// Reduction of a matrix along an axis, keeping the reduced axis with extent 1.
inline Var reduce(Var a, int axis, Reduce mode) {
  const Tensor& A = a.value();
  detail::require_matrix("reduce", A);
  if (axis == 0) {
    const std::size_t offs[2] = {0, A.rows()};
    return segment_reduce(a, offs, mode);
  }
  if (axis != 1) throw ShapeError("reduce: axis must be 0 or 1");
  // reduce over columns via the transpose-free path: one group per row
  const std::size_t rows = A.rows(), cols = A.cols();
  if (cols == 0) throw ShapeError("reduce: empty axis in shape " + shape_str(A.shape()));
  Tensor out({rows, 1});
  auto argmax = std::make_shared<std::vector<std::size_t>>(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = mode == Reduce::kMax ? A.at(r, 0) : 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mode == Reduce::kMax) {
        if (A.at(r, c) > acc) {
          acc = A.at(r, c);
          (*argmax)[r] = c;
        }
      } else {
        acc += A.at(r, c);
      }
    }
    out.at(r, 0) = mode == Reduce::kMean ? acc / static_cast<double>(cols) : acc;
  }
  return a.tape().record(std::move(out), {a.id()}, [rows, cols, mode, argmax](const Tensor& g, std::span<Tensor* const> in) {
    for (std::size_t r = 0; r < rows; ++r) {
      if (mode == Reduce::kMax) {
        in[0]->at(r, (*argmax)[r]) += g.at(r, 0);
        continue;
      }
      const double share = mode == Reduce::kMean ? g.at(r, 0) / static_cast<double>(cols) : g.at(r, 0);
      for (std::size_t c = 0; c < cols; ++c) in[0]->at(r, c) += share;
    }
  });
}

inline Var reduce_mean(Var a, int axis) { return reduce(a, axis, Reduce::kMean); }
inline Var reduce_sum(Var a, int axis) { return reduce(a, axis, Reduce::kSum); }
inline Var reduce_max(Var a, int axis) { return reduce(a, axis, Reduce::kMax); }

using NeighborLists = std::vector<std::vector<std::size_t>>;

/// Row v of the result is the mean of rows neighbors[v] of `h`, or zero
/// when v has no neighbors.
inline Var neighbor_mean(Var h, std::shared_ptr<const NeighborLists> neighbors) {
  const Tensor& H = h.value();
  detail::require_matrix("neighbor_mean", H);
  if (neighbors->size() != H.rows()) {
    throw ShapeError("neighbor_mean: " + std::to_string(neighbors->size()) + " adjacency rows for features " +
                     shape_str(H.shape()));
  }
  const std::size_t cols = H.cols();
  Tensor out({H.rows(), cols});
  for (std::size_t v = 0; v < H.rows(); ++v) {
    const auto& nb = (*neighbors)[v];
    if (nb.empty()) continue;
    const double inv = 1.0 / static_cast<double>(nb.size());
    for (auto u : nb) {
      if (u >= H.rows()) throw ShapeError("neighbor_mean: neighbor index out of range");
      for (std::size_t c = 0; c < cols; ++c) out.at(v, c) += H.at(u, c);
    }
    for (std::size_t c = 0; c < cols; ++c) out.at(v, c) *= inv;
  }
  return h.tape().record(std::move(out), {h.id()}, [neighbors, cols](const Tensor& g, std::span<Tensor* const> in) {
    auto& gh = *in[0];
    for (std::size_t v = 0; v < neighbors->size(); ++v) {
      const auto& nb = (*neighbors)[v];
      if (nb.empty()) continue;
      const double inv = 1.0 / static_cast<double>(nb.size());
      for (auto u : nb) {
        for (std::size_t c = 0; c < cols; ++c) gh.at(u, c) += inv * g.at(v, c);
      }
    }
  });
}

/// Row lookup: out[k] = table[indices[k]].
inline Var gather_rows(Var table, std::span<const std::size_t> indices) {
  const Tensor& T = table.value();
  detail::require_matrix("gather_rows", T);
  const std::size_t cols = T.cols();
  Tensor out({indices.size(), cols});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= T.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(indices[k]) + " out of range for table " +
                       shape_str(T.shape()));
    }
    std::copy_n(T.data() + indices[k] * cols, cols, out.data() + k * cols);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return table.tape().record(std::move(out), {table.id()}, [idx, cols](const Tensor& g, std::span<Tensor* const> in) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      double* dst = in[0]->data() + idx[k] * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += g[k * cols + c];
    }
  });
}

inline Var sigmoid(Var a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = detail::sigmoid(v);
  const Tensor* pa = &a.value();
  return a.tape().record(std::move(out), {a.id()}, [pa](const Tensor& g, std::span<Tensor* const> in) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = detail::sigmoid((*pa)[i]);
      (*in[0])[i] += g[i] * s * (1.0 - s);
    }
  });
}

inline Var tanh(Var a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::tanh(v);
  const Tensor* pa = &a.value();
  return a.tape().record(std::move(out), {a.id()}, [pa](const Tensor& g, std::span<Tensor* const> in) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double t = std::tanh((*pa)[i]);
      (*in[0])[i] += g[i] * (1.0 - t * t);
    }
  });
}

/// Parametric ReLU with one slope per channel (column), or a single shared slope.
inline Var prelu(Var a, Var slope) {
  const Tensor& A = a.value();
  const Tensor& S = slope.value();
  const std::size_t cols = A.cols();
  if (S.size() != cols && S.size() != 1) throw ShapeError("prelu", A.shape(), S.shape());
  const std::size_t ns = S.size();
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 0) out[i] *= S[ns == 1 ? 0 : i % cols];
  }
  const Tensor* pa = &A;
  const Tensor* ps = &S;
  return a.tape().record(std::move(out), {a.id(), slope.id()},
                         [pa, ps, ns, cols](const Tensor& g, std::span<Tensor* const> in) {
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             const double x = (*pa)[i];
                             const std::size_t k = ns == 1 ? 0 : i % cols;
                             if (x >= 0) {
                               if (in[0]) (*in[0])[i] += g[i];
                             } else {
                               if (in[0]) (*in[0])[i] += g[i] * (*ps)[k];
                               if (in[1]) (*in[1])[k] += g[i] * x;
                             }
                           }
                         });
}

/// Inverted dropout: identity when not training, otherwise survivors are
/// scaled by 1/(1-rate). Masks come from the tape's seeded generator.
inline Var dropout(Var a, double rate, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(a.value().size());
  auto& rng = a.tape().rng();
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    out[i] *= (*mask)[i];
  }
  return a.tape().record(std::move(out), {a.id()}, [mask](const Tensor& g, std::span<Tensor* const> in) {
    for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += g[i] * (*mask)[i];
  });
}

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Batch normalization over rows. Training mode normalizes with batch
/// statistics and queues an exponential-moving-average update of the
/// running buffers on the tape; eval mode is a fixed affine map of the
/// running statistics.
inline Var batchnorm(Var x, Var gamma, Var beta, Parameter& running_mean, Parameter& running_var,
                     BatchNormOptions opt = {}) {
  const Tensor& X = x.value();
  detail::require_matrix("batchnorm", X);
  const std::size_t n = X.rows(), c = X.cols();
  if (gamma.value().size() != c) throw ShapeError("batchnorm(gamma)", X.shape(), gamma.value().shape());
  if (beta.value().size() != c) throw ShapeError("batchnorm(beta)", X.shape(), beta.value().shape());
  if (running_mean.value.size() != c || running_var.value.size() != c) {
    throw ShapeError("batchnorm(running stats)", X.shape(), running_mean.value.shape());
  }
  if (n == 0) throw ShapeError("batchnorm: empty batch");
  const Tensor* pg = &gamma.value();
  const Tensor* pb = &beta.value();
  Tape& tape = x.tape();

  std::vector<double> mu(c), inv_std(c);
  const double* xd = X.data();
  if (tape.training()) {
    std::vector<double> var(c, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) mu[j] += xd[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) mu[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double d = xd[i * c + j] - mu[j];
        var[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < c; ++j) {
      var[j] /= static_cast<double>(n);
      inv_std[j] = 1.0 / std::sqrt(var[j] + opt.eps);
    }
    if (n > 1) {
      tape.defer([&running_mean, &running_var, mu, var, n, m = opt.momentum] {
        const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
        for (std::size_t j = 0; j < mu.size(); ++j) {
          running_mean.value[j] = (1 - m) * running_mean.value[j] + m * mu[j];
          running_var.value[j] = (1 - m) * running_var.value[j] + m * var[j] * unbias;
        }
      });
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      mu[j] = running_mean.value[j];
      inv_std[j] = 1.0 / std::sqrt(running_var.value[j] + opt.eps);
    }
  }

  auto xhat = std::make_shared<Tensor>(X.shape());
  Tensor out(X.shape());
  double* hd = xhat->data();
  double* od = out.data();
  const double* gd = pg->data();
  const double* bd = pb->data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t k = i * c + j;
      hd[k] = (xd[k] - mu[j]) * inv_std[j];
      od[k] = gd[j] * hd[k] + bd[j];
    }
  }
  const bool batch_stats = tape.training();
  return tape.record(std::move(out), {x.id(), gamma.id(), beta.id()},
                     [xhat, inv_std, pg, n, c, batch_stats](const Tensor& g, std::span<Tensor* const> in) {
                       const double* gr = g.data();
                       const double* hd = xhat->data();
                       std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < c; ++j) {
                           sum_g[j] += gr[i * c + j];
                           sum_gx[j] += gr[i * c + j] * hd[i * c + j];
                         }
                       }
                       for (std::size_t j = 0; j < c; ++j) {
                         if (in[1]) (*in[1])[j] += sum_gx[j];
                         if (in[2]) (*in[2])[j] += sum_g[j];
                       }
                       if (!in[0]) return;
                       double* dx = in[0]->data();
                       const double nn = static_cast<double>(n);
                       std::vector<double> scale(c);
                       for (std::size_t j = 0; j < c; ++j) scale[j] = (*pg)[j] * inv_std[j];
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < c; ++j) {
                           const std::size_t k = i * c + j;
                           if (batch_stats) {
                             dx[k] += scale[j] * (nn * gr[k] - sum_g[j] - hd[k] * sum_gx[j]) / nn;
                           } else {
                             dx[k] += gr[k] * scale[j];
                           }
                         }
                       }
                     });
}

/// Numerically stable softmax of a flat score vector.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double m = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (auto& v : p) {
    v = std::exp(v - m);
    z += v;
  }
  for (auto& v : p) v /= z;
  return p;
}

/// -log softmax(logits)[label] for a single row of logits.
inline Var softmax_cross_entropy(Var logits, std::size_t label) {
  const Tensor& L = logits.value();
  if (L.rows() != 1 || L.size() == 0) {
    throw ShapeError("softmax_cross_entropy: expected one row of logits, got " + shape_str(L.shape()));
  }
  if (label >= L.size()) {
    throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                            std::to_string(L.size()) + ")");
  }
  const double m = *std::max_element(L.values().begin(), L.values().end());
  double z = 0.0;
  for (double v : L.values()) z += std::exp(v - m);
  const double lse = m + std::log(z);
  auto probs = std::make_shared<std::vector<double>>(softmax(L.values()));
  return logits.tape().record(Tensor::scalar(lse - L[label]), {logits.id()},
                              [probs, label](const Tensor& g, std::span<Tensor* const> in) {
                                for (std::size_t k = 0; k < probs->size(); ++k) {
                                  (*in[0])[k] += g[0] * ((*probs)[k] - (k == label ? 1.0 : 0.0));
                                }
                              });
}

}  // namespace tfegnn::ad
