#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "arc/errors.hpp"

namespace arc {

/// Extent of a rank-4 array. For feature maps the axes are (channels, time, height, width);
/// kernel stacks reuse the same storage as (out, in, kh, kw) and channel matrices as (rows, cols, 1, 1).
struct Shape {
  std::size_t c = 1;
  std::size_t t = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  constexpr std::size_t size() const noexcept { return c * t * h * w; }
  constexpr std::size_t plane() const noexcept { return h * w; }
  constexpr std::size_t per_channel() const noexcept { return t * h * w; }
  constexpr std::size_t operator[](std::size_t axis) const noexcept {
    return axis == 0 ? c : axis == 1 ? t : axis == 2 ? h : w;
  }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const;
};

template <class S>
class Tensor {
 public:
  using value_type = S;

  Tensor() = default;
  explicit Tensor(Shape shape, S fill = S(0)) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<S> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size())
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_.str());
  }

  static Tensor zeros(Shape shape) { return Tensor(shape); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  S* data() noexcept { return data_.data(); }
  const S* data() const noexcept { return data_.data(); }
  std::span<S> span() noexcept { return data_; }
  std::span<const S> span() const noexcept { return data_; }
  const std::vector<S>& values() const noexcept { return data_; }

  std::size_t index(std::size_t c, std::size_t t, std::size_t h, std::size_t w) const noexcept {
    return ((c * shape_.t + t) * shape_.h + h) * shape_.w + w;
  }
  S& operator()(std::size_t c, std::size_t t, std::size_t h, std::size_t w) noexcept {
    return data_[index(c, t, h, w)];
  }
  S operator()(std::size_t c, std::size_t t, std::size_t h, std::size_t w) const noexcept {
    return data_[index(c, t, h, w)];
  }
  S& operator[](std::size_t i) noexcept { return data_[i]; }
  S operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<S> channel(std::size_t c) noexcept { return {data_.data() + c * shape_.per_channel(), shape_.per_channel()}; }
  std::span<const S> channel(std::size_t c) const noexcept {
    return {data_.data() + c * shape_.per_channel(), shape_.per_channel()};
  }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same elements viewed under a different shape of equal size.
  Tensor reshaped(Shape s) const {
    if (s.size() != size()) throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
    return Tensor(s, data_);
  }

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](S v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<S> data_;
};

/// Kernel bank of a 2-D convolution, stored as (C_out, C_in / groups, K, K).
template <class S>
class KernelStack {
 public:
  KernelStack() = default;
  KernelStack(std::size_t c_out, std::size_t c_in, std::size_t k, std::size_t groups = 1)
      : weights_(Shape{c_out, c_in / (groups ? groups : 1), k, k}), groups_(groups) {
    validate();
  }
  explicit KernelStack(Tensor<S> weights, std::size_t groups = 1) : weights_(std::move(weights)), groups_(groups) {
    validate();
  }

  std::size_t c_out() const noexcept { return weights_.shape().c; }
  std::size_t c_in() const noexcept { return weights_.shape().t * groups_; }
  std::size_t kernel() const noexcept { return weights_.shape().h; }
  std::size_t groups() const noexcept { return groups_; }

  const Tensor<S>& tensor() const noexcept { return weights_; }
  Tensor<S>& tensor() noexcept { return weights_; }

 private:
  void validate() const {
    const Shape& s = weights_.shape();
    if (groups_ == 0) throw ConfigError("kernel groups must be >= 1");
    if (s.h != s.w) throw ShapeError("kernel stack must be square, got " + s.str());
    if (s.h == 0 || s.h % 2 == 0) throw ShapeError("kernel size must be odd, got " + std::to_string(s.h));
  }

  Tensor<S> weights_;
  std::size_t groups_ = 1;
};

/// Per-position channel map (rows x cols); stored as a (rows, cols, 1, 1) tensor.
template <class S>
class ChannelMatrix {
 public:
  ChannelMatrix() = default;
  ChannelMatrix(std::size_t rows, std::size_t cols) : m_(Shape{rows, cols, 1, 1}) {}
  explicit ChannelMatrix(Tensor<S> m) : m_(std::move(m)) {
    if (m_.shape().h != 1 || m_.shape().w != 1) throw ShapeError("channel matrix must be (rows, cols, 1, 1), got " + m_.shape().str());
  }

  std::size_t rows() const noexcept { return m_.shape().c; }
  std::size_t cols() const noexcept { return m_.shape().t; }
  S& operator()(std::size_t r, std::size_t c) noexcept { return m_[r * cols() + c]; }
  S operator()(std::size_t r, std::size_t c) const noexcept { return m_[r * cols() + c]; }

  static ChannelMatrix identity(std::size_t n) {
    ChannelMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = S(1);
    return m;
  }

  const Tensor<S>& tensor() const noexcept { return m_; }
  Tensor<S>& tensor() noexcept { return m_; }

 private:
  Tensor<S> m_{Shape{0, 0, 1, 1}};
};

/// Fill with i.i.d. N(0, stddev^2) draws from `rng`.
template <class S, class Rng>
void fill_normal(Tensor<S>& t, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.span()) v = static_cast<S>(dist(rng));
}

template <class S, class Rng>
void fill_uniform(Tensor<S>& t, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.span()) v = static_cast<S>(dist(rng));
}

template <class S>
Tensor<S> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  Tensor<S> t(s);
  fill_uniform(t, rng, lo, hi);
  return t;
}

template <class S>
S max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: " + a.shape().str() + " vs " + b.shape().str());
  S m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace arc
