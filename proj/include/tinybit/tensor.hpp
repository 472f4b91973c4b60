#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "tinybit/common.hpp"
#include "tinybit/prng.hpp"

namespace tinybit {

/// Dense row-major n-dimensional array of 32-bit floats. The one value type
/// every other module trades in: images, activations, weights, gradients.
///
/// A constructed tensor always satisfies rank >= 1, every dim >= 1, and
/// data().size() == numel(). A default-constructed Tensor is the documented
/// "absent" sentinel (rank 0, no storage) used for optional parameters such
/// as a missing convolution bias.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::int64_t> shape, float fill = 0.0f)
      : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(static_cast<std::size_t>(count(shape_)), fill);
  }

  Tensor(std::vector<std::int64_t> shape, std::vector<float> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (count(shape_) != static_cast<std::int64_t>(data_.size()))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape product " +
                       std::to_string(count(shape_)));
  }

  static Tensor zeros(std::vector<std::int64_t> shape) {
    return Tensor(std::move(shape), 0.0f);
  }

  static Tensor full(std::vector<std::int64_t> shape, float value) {
    return Tensor(std::move(shape), value);
  }

  /// Uniform fill over [lo,hi); consumes one draw per element in row-major
  /// order.
  static Tensor uniform(std::vector<std::int64_t> shape, float lo, float hi,
                        Prng& rng) {
    Tensor t(std::move(shape));
    for (float& v : t.data_) v = lo + (hi - lo) * rng.next_float();
    return t;
  }

  /// Normal fill; elements are produced pairwise from Box-Muller draws in
  /// row-major order (an odd tail discards its spare).
  static Tensor normal(std::vector<std::int64_t> shape, float mean,
                       float stddev, Prng& rng) {
    if (stddev < 0.0f) throw RangeError("normal fill: stddev must be >= 0");
    Tensor t(std::move(shape));
    std::size_t i = 0;
    const std::size_t n = t.data_.size();
    while (i < n) {
      const auto [a, b] = rng.normal_pair();
      t.data_[i++] = mean + stddev * a;
      if (i < n) t.data_[i++] = mean + stddev * b;
    }
    return t;
  }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& values() { return data_; }
  const std::vector<float>& values() const { return data_; }

  float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  /// Multi-index access; cold paths only.
  float& at(std::initializer_list<std::int64_t> idx) {
    return data_[static_cast<std::size_t>(flat_index(idx))];
  }
  float at(std::initializer_list<std::int64_t> idx) const {
    return data_[static_cast<std::size_t>(flat_index(idx))];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  /// Same storage reinterpreted under a new shape with equal element count.
  Tensor reshaped(std::vector<std::int64_t> new_shape) const {
    validate_shape(new_shape);
    if (count(new_shape) != numel())
      throw ShapeError("reshape: element count changes from " +
                       std::to_string(numel()) + " to " +
                       std::to_string(count(new_shape)));
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
  }

  static std::int64_t count(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) n *= d;
    return n;
  }

  static std::string shape_string(const std::vector<std::int64_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }

 private:
  static void validate_shape(const std::vector<std::int64_t>& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
    for (std::int64_t d : shape)
      if (d < 1)
        throw ShapeError("tensor shape " + shape_string(shape) +
                         " has a non-positive dimension");
  }

  std::int64_t flat_index(std::initializer_list<std::int64_t> idx) const {
    std::int64_t flat = 0;
    auto it = idx.begin();
    for (std::size_t a = 0; a < shape_.size(); ++a, ++it)
      flat = flat * shape_[a] + *it;
    return flat;
  }

  std::vector<std::int64_t> shape_;
  std::vector<float> data_;
};

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shapes " +
                     Tensor::shape_string(a.shape()) + " and " +
                     Tensor::shape_string(b.shape()) + " differ");
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  return out;
}

inline Tensor scale(const Tensor& a, float s) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
  return out;
}

inline Tensor max_with_scalar(const Tensor& a, float s) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = std::max(a[i], s);
  return out;
}

/// Mean and population variance (divide by N) over the given axes; reduced
/// axes are removed from the shape. Reducing every axis yields shape [1].
/// An empty axis set returns (copy of a, zeros). Accumulation is in double.
inline std::pair<Tensor, Tensor> reduce_moments(const Tensor& a,
                                                std::vector<int> axes) {
  const int rank = a.rank();
  std::vector<bool> reduced(static_cast<std::size_t>(rank), false);
  for (int ax : axes) {
    if (ax < 0 || ax >= rank)
      throw ShapeError("reduce_moments: axis " + std::to_string(ax) +
                       " out of range for rank " + std::to_string(rank));
    reduced[static_cast<std::size_t>(ax)] = true;
  }
  if (axes.empty()) return {a, Tensor::zeros(a.shape())};

  std::vector<std::int64_t> out_shape;
  for (int d = 0; d < rank; ++d)
    if (!reduced[static_cast<std::size_t>(d)]) out_shape.push_back(a.dim(d));
  if (out_shape.empty()) out_shape.push_back(1);

  const std::int64_t out_n = Tensor::count(out_shape);
  std::vector<double> sum(static_cast<std::size_t>(out_n), 0.0);
  std::vector<double> sumsq(static_cast<std::size_t>(out_n), 0.0);

  // Row-major walk with a running output index over the kept axes.
  std::vector<std::int64_t> idx(static_cast<std::size_t>(rank), 0);
  for (std::int64_t flat = 0; flat < a.numel(); ++flat) {
    std::int64_t out_idx = 0;
    for (int d = 0; d < rank; ++d)
      if (!reduced[static_cast<std::size_t>(d)])
        out_idx = out_idx * a.dim(d) + idx[static_cast<std::size_t>(d)];
    const double v = a[flat];
    sum[static_cast<std::size_t>(out_idx)] += v;
    sumsq[static_cast<std::size_t>(out_idx)] += v * v;
    for (int d = rank - 1; d >= 0; --d) {
      if (++idx[static_cast<std::size_t>(d)] < a.dim(d)) break;
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }

  const double count = static_cast<double>(a.numel()) / static_cast<double>(out_n);
  Tensor mean(out_shape);
  Tensor variance(out_shape);
  for (std::int64_t i = 0; i < out_n; ++i) {
    const double m = sum[static_cast<std::size_t>(i)] / count;
    const double var = sumsq[static_cast<std::size_t>(i)] / count - m * m;
    mean[i] = static_cast<float>(m);
    variance[i] = static_cast<float>(std::max(var, 0.0));
  }
  return {std::move(mean), std::move(variance)};
}

/// Rank-2 matrix product with double accumulation.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: both operands must be rank 2");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.dim(1)) +
                     " and " + std::to_string(b.dim(0)) + " differ");
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p)
        acc += static_cast<double>(a[i * k + p]) * static_cast<double>(b[p * n + j]);
      out[i * n + j] = static_cast<float>(acc);
    }
  }
  return out;
}

inline bool all_finite(const Tensor& t) {
  for (std::int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

}  // namespace tinybit
