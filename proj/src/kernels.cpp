#include "arc/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>

namespace arc {

namespace {
std::atomic<bool> g_counting{false};
std::atomic<std::uint64_t> g_macs{0};

// Below this many multiply-adds a kernel stays on the calling thread.
constexpr std::size_t kParallelWork = 1 << 15;

std::string shapes(const Shape& a, const Shape& b) { return a.str() + " and " + b.str(); }
}  // namespace

std::string Shape::str() const {
  return "(" + std::to_string(c) + "," + std::to_string(t) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
}

FlopCounter::FlopCounter() {
  g_macs.store(0);
  g_counting.store(true);
}
FlopCounter::~FlopCounter() { g_counting.store(false); }
std::uint64_t FlopCounter::count() const { return g_macs.load(); }

namespace kernels {

void count_macs(std::uint64_t macs) {
  if (g_counting.load(std::memory_order_relaxed)) g_macs.fetch_add(macs, std::memory_order_relaxed);
}

namespace {

struct ConvGeometry {
  std::size_t ci, co, k, stride, pad, t, h, w, ho, wo;
  std::size_t rows() const { return ci * k * k; }
  std::size_t cols() const { return t * ho * wo; }
  bool pointwise() const { return k == 1 && stride == 1; }
};

template <class S>
ConvGeometry geometry(const Shape& x, const Shape& k, std::size_t stride) {
  if (stride == 0) throw ConfigError("conv2d stride must be >= 1");
  if (k.h != k.w || k.h % 2 == 0) throw ShapeError("conv2d kernel must be square and odd, got " + k.str());
  if (x.c != k.t) throw ShapeError("conv2d input channels mismatch: input " + shapes(x, k) + " (kernel)");
  ConvGeometry g{};
  g.ci = x.c;
  g.co = k.c;
  g.k = k.h;
  g.stride = stride;
  g.pad = (k.h - 1) / 2;
  g.t = x.t;
  g.h = x.h;
  g.w = x.w;
  if (x.h + 2 * g.pad < g.k || x.w + 2 * g.pad < g.k) throw ShapeError("conv2d input smaller than kernel: " + shapes(x, k));
  g.ho = conv_out_extent(x.h, g.k, stride, g.pad);
  g.wo = conv_out_extent(x.w, g.k, stride, g.pad);
  return g;
}

// col[(ci, kh, kw), (t, ho, wo)]
template <class S>
std::vector<S> im2col(const Tensor<S>& x, const ConvGeometry& g) {
  const std::size_t cols = g.cols();
  std::vector<S> col(g.rows() * cols, S(0));
  const S* xs = x.data();
#pragma omp parallel for schedule(static) if (g.rows() * cols > kParallelWork)
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const std::size_t ci = r / (g.k * g.k);
    const std::size_t kh = (r / g.k) % g.k;
    const std::size_t kw = r % g.k;
    S* dst = col.data() + r * cols;
    for (std::size_t t = 0; t < g.t; ++t) {
      const S* frame = xs + (ci * g.t + t) * g.h * g.w;
      for (std::size_t oh = 0; oh < g.ho; ++oh) {
        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.pad);
        S* row = dst + (t * g.ho + oh) * g.wo;
        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
        const S* src = frame + ih * g.w;
        for (std::size_t ow = 0; ow < g.wo; ++ow) {
          const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.pad);
          if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w)) row[ow] = src[iw];
        }
      }
    }
  }
  return col;
}

template <class S>
void col2im(const std::vector<S>& col, const ConvGeometry& g, Tensor<S>& dx) {
  const std::size_t cols = g.cols();
  S* xs = dx.data();
#pragma omp parallel for schedule(static) if (g.rows() * cols > kParallelWork)
  for (std::size_t ci = 0; ci < g.ci; ++ci) {
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        const S* src = col.data() + ((ci * g.k + kh) * g.k + kw) * cols;
        for (std::size_t t = 0; t < g.t; ++t) {
          S* frame = xs + (ci * g.t + t) * g.h * g.w;
          for (std::size_t oh = 0; oh < g.ho; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - static_cast<std::ptrdiff_t>(g.pad);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
            const S* row = src + (t * g.ho + oh) * g.wo;
            S* dst = frame + ih * g.w;
            for (std::size_t ow = 0; ow < g.wo; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) - static_cast<std::ptrdiff_t>(g.pad);
              if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w)) dst[iw] += row[ow];
            }
          }
        }
      }
    }
  }
}

// out[i, :] (+)= sum_j a[i, j] * b[j, :]   with a (m x n) row-major, b (n x p)
template <class S>
void gemm_rows(const S* a, const S* b, S* out, std::size_t m, std::size_t n, std::size_t p) {
#pragma omp parallel for schedule(static) if (m * n * p > kParallelWork)
  for (std::size_t i = 0; i < m; ++i) {
    S* o = out + i * p;
    const S* ai = a + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const S aij = ai[j];
      const S* bj = b + j * p;
#pragma omp simd
      for (std::size_t q = 0; q < p; ++q) o[q] += aij * bj[q];
    }
  }
}

// out[i, :] = sum_j a[j, i] * b[j, :]   with a (n x m) row-major, b (n x p)
template <class S>
void gemm_transposed_rows(const S* a, const S* b, S* out, std::size_t m, std::size_t n, std::size_t p) {
#pragma omp parallel for schedule(static) if (m * n * p > kParallelWork)
  for (std::size_t i = 0; i < m; ++i) {
    S* o = out + i * p;
    for (std::size_t j = 0; j < n; ++j) {
      const S aji = a[j * m + i];
      const S* bj = b + j * p;
#pragma omp simd
      for (std::size_t q = 0; q < p; ++q) o[q] += aji * bj[q];
    }
  }
}

// out[i, j] = dot(a[i, :], b[j, :])   with a (m x p), b (n x p)
template <class S>
void gemm_dots(const S* a, const S* b, S* out, std::size_t m, std::size_t n, std::size_t p) {
#pragma omp parallel for schedule(static) if (m * n * p > kParallelWork)
  for (std::size_t i = 0; i < m; ++i) {
    const S* ai = a + i * p;
    for (std::size_t j = 0; j < n; ++j) {
      const S* bj = b + j * p;
      S acc = 0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t q = 0; q < p; ++q) acc += ai[q] * bj[q];
      out[i * n + j] = acc;
    }
  }
}

void check_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + shapes(a, b));
}

}  // namespace

template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& k, std::span<const S> bias, std::size_t stride) {
  const ConvGeometry g = geometry<S>(x.shape(), k.shape(), stride);
  if (!bias.empty() && bias.size() != g.co)
    throw ShapeError("conv2d bias length " + std::to_string(bias.size()) + " != C_out " + std::to_string(g.co));
  Tensor<S> y(Shape{g.co, g.t, g.ho, g.wo});
  if (!bias.empty())
    for (std::size_t c = 0; c < g.co; ++c) std::fill_n(y.data() + c * g.cols(), g.cols(), bias[c]);
  count_macs(static_cast<std::uint64_t>(g.co) * g.rows() * g.cols());
  if (g.pointwise()) {
    gemm_rows(k.data(), x.data(), y.data(), g.co, g.rows(), g.cols());
  } else {
    const std::vector<S> col = im2col(x, g);
    gemm_rows(k.data(), col.data(), y.data(), g.co, g.rows(), g.cols());
  }
  return y;
}

template <class S>
Tensor<S> conv2d_grad_input(const Tensor<S>& dy, const Tensor<S>& k, const Shape& x_shape, std::size_t stride) {
  const ConvGeometry g = geometry<S>(x_shape, k.shape(), stride);
  check_same(dy.shape(), Shape{g.co, g.t, g.ho, g.wo}, "conv2d backward");
  Tensor<S> dx(x_shape);
  if (g.pointwise()) {
    gemm_transposed_rows(k.data(), dy.data(), dx.data(), g.rows(), g.co, g.cols());
    return dx;
  }
  std::vector<S> dcol(g.rows() * g.cols(), S(0));
  gemm_transposed_rows(k.data(), dy.data(), dcol.data(), g.rows(), g.co, g.cols());
  col2im(dcol, g, dx);
  return dx;
}

template <class S>
Tensor<S> conv2d_grad_kernel(const Tensor<S>& dy, const Tensor<S>& x, const Shape& k_shape, std::size_t stride) {
  const ConvGeometry g = geometry<S>(x.shape(), k_shape, stride);
  check_same(dy.shape(), Shape{g.co, g.t, g.ho, g.wo}, "conv2d backward");
  Tensor<S> dk(k_shape);
  if (g.pointwise()) {
    gemm_dots(dy.data(), x.data(), dk.data(), g.co, g.rows(), g.cols());
  } else {
    const std::vector<S> col = im2col(x, g);
    gemm_dots(dy.data(), col.data(), dk.data(), g.co, g.rows(), g.cols());
  }
  return dk;
}

template <class S>
Tensor<S> project(const Tensor<S>& m, const Tensor<S>& x) {
  const Shape& ms = m.shape();
  if (ms.h != 1 || ms.w != 1 || ms.t != x.shape().c)
    throw ShapeError("channel_project: matrix " + ms.str() + " incompatible with input " + x.shape().str());
  const std::size_t p = x.shape().per_channel();
  Tensor<S> y(Shape{ms.c, x.shape().t, x.shape().h, x.shape().w});
  count_macs(static_cast<std::uint64_t>(ms.c) * ms.t * p);
  gemm_rows(m.data(), x.data(), y.data(), ms.c, ms.t, p);
  return y;
}

template <class S>
Tensor<S> project_grad_input(const Tensor<S>& m, const Tensor<S>& dy) {
  const Shape& ms = m.shape();
  if (dy.shape().c != ms.c) throw ShapeError("channel_project backward: " + shapes(ms, dy.shape()));
  const std::size_t p = dy.shape().per_channel();
  Tensor<S> dx(Shape{ms.t, dy.shape().t, dy.shape().h, dy.shape().w});
  gemm_transposed_rows(m.data(), dy.data(), dx.data(), ms.t, ms.c, p);
  return dx;
}

template <class S>
Tensor<S> project_grad_matrix(const Tensor<S>& dy, const Tensor<S>& x) {
  const std::size_t p = x.shape().per_channel();
  if (dy.shape().per_channel() != p) throw ShapeError("channel_project backward: " + shapes(dy.shape(), x.shape()));
  Tensor<S> dm(Shape{dy.shape().c, x.shape().c, 1, 1});
  gemm_dots(dy.data(), x.data(), dm.data(), dy.shape().c, x.shape().c, p);
  return dm;
}

template <class S>
Tensor<S> pool_max(const Tensor<S>& x, PoolAxes axes, std::vector<std::uint32_t>* argmax) {
  const Shape& s = x.shape();
  Shape out = s;
  switch (axes) {
    case PoolAxes::spatial: out.h = out.w = 1; break;
    case PoolAxes::temporal: out.t = 1; break;
    case PoolAxes::global: out.t = out.h = out.w = 1; break;
  }
  Tensor<S> y(out);
  if (argmax) argmax->assign(out.size(), 0);
  const S* xs = x.data();
  for (std::size_t c = 0; c < s.c; ++c) {
    for (std::size_t o = 0; o < out.per_channel(); ++o) {
      // Enumerate the reduced window in scan order.
      std::size_t first = 0, count = 0, step = 1;
      const std::size_t base = c * s.per_channel();
      switch (axes) {
        case PoolAxes::spatial: first = base + o * s.plane(); count = s.plane(); step = 1; break;
        case PoolAxes::temporal: first = base + o; count = s.t; step = s.plane(); break;
        case PoolAxes::global: first = base; count = s.per_channel(); step = 1; break;
      }
      std::size_t best = first;
      for (std::size_t i = 1; i < count; ++i) {
        const std::size_t idx = first + i * step;
        if (xs[idx] > xs[best]) best = idx;
      }
      y[c * out.per_channel() + o] = xs[best];
      if (argmax) (*argmax)[c * out.per_channel() + o] = static_cast<std::uint32_t>(best);
    }
  }
  return y;
}

template <class S>
Tensor<S> scatter_argmax(const Tensor<S>& dy, const std::vector<std::uint32_t>& argmax, const Shape& x_shape) {
  if (dy.size() != argmax.size()) throw ShapeError("max-pool backward: upstream " + dy.shape().str() + " does not match pooled output");
  Tensor<S> dx(x_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

template <class S>
Tensor<S> max_pool2d(const Tensor<S>& x, std::size_t k, std::size_t stride, std::size_t pad,
                     std::vector<std::uint32_t>* argmax) {
  const Shape& s = x.shape();
  if (s.h + 2 * pad < k || s.w + 2 * pad < k) throw ShapeError("max_pool2d input smaller than window: " + s.str());
  const Shape out{s.c, s.t, conv_out_extent(s.h, k, stride, pad), conv_out_extent(s.w, k, stride, pad)};
  Tensor<S> y(out);
  if (argmax) argmax->assign(out.size(), 0);
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t t = 0; t < s.t; ++t)
      for (std::size_t oh = 0; oh < out.h; ++oh)
        for (std::size_t ow = 0; ow < out.w; ++ow) {
          S best = -std::numeric_limits<S>::infinity();
          std::size_t where = 0;
          for (std::size_t kh = 0; kh < k; ++kh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + kh) - static_cast<std::ptrdiff_t>(pad);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(s.h)) continue;
            for (std::size_t kw = 0; kw < k; ++kw) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kw) - static_cast<std::ptrdiff_t>(pad);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(s.w)) continue;
              const std::size_t idx = x.index(c, t, ih, iw);
              if (x[idx] > best) {
                best = x[idx];
                where = idx;
              }
            }
          }
          const std::size_t o = y.index(c, t, oh, ow);
          y[o] = best;
          if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(where);
        }
  return y;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out;
  std::size_t* dims[4] = {&out.c, &out.t, &out.h, &out.w};
  for (std::size_t axis = 0; axis < 4; ++axis) {
    const std::size_t da = a[axis], db = b[axis];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("broadcast: incompatible axis " + std::to_string(axis) + " in " + shapes(a, b));
    *dims[axis] = std::max(da, db);
  }
  return out;
}

namespace {
template <class S, class Op>
Tensor<S> broadcast_apply(const Tensor<S>& a, const Tensor<S>& b, Op op) {
  const Shape out = broadcast_shape(a.shape(), b.shape());
  if (a.shape() == out && b.shape() == out) {
    Tensor<S> y(out);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = op(a[i], b[i]);
    return y;
  }
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  Tensor<S> y(out);
  std::size_t o = 0;
  for (std::size_t c = 0; c < out.c; ++c)
    for (std::size_t t = 0; t < out.t; ++t)
      for (std::size_t h = 0; h < out.h; ++h)
        for (std::size_t w = 0; w < out.w; ++w, ++o) {
          const S va = a(sa.c == 1 ? 0 : c, sa.t == 1 ? 0 : t, sa.h == 1 ? 0 : h, sa.w == 1 ? 0 : w);
          const S vb = b(sb.c == 1 ? 0 : c, sb.t == 1 ? 0 : t, sb.h == 1 ? 0 : h, sb.w == 1 ? 0 : w);
          y[o] = op(va, vb);
        }
  return y;
}
}  // namespace

template <class S>
Tensor<S> broadcast_add(const Tensor<S>& a, const Tensor<S>& b) {
  return broadcast_apply(a, b, [](S u, S v) { return u + v; });
}

template <class S>
Tensor<S> broadcast_mul(const Tensor<S>& a, const Tensor<S>& b) {
  return broadcast_apply(a, b, [](S u, S v) { return u * v; });
}

template <class S>
Tensor<S> reduce_to(const Tensor<S>& g, const Shape& target) {
  if (g.shape() == target) return g;
  const Shape& s = g.shape();
  for (std::size_t axis = 0; axis < 4; ++axis)
    if (target[axis] != s[axis] && target[axis] != 1)
      throw ShapeError("reduce_to: cannot reduce " + shapes(s, target));
  Tensor<S> out(target);
  std::size_t i = 0;
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t t = 0; t < s.t; ++t)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w, ++i)
          out(target.c == 1 ? 0 : c, target.t == 1 ? 0 : t, target.h == 1 ? 0 : h, target.w == 1 ? 0 : w) += g[i];
  return out;
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  check_same(a.shape(), b.shape(), "add");
  Tensor<S> y(a.shape());
  S* o = y.data();
  const S* pa = a.data();
  const S* pb = b.data();
#pragma omp simd
  for (std::size_t i = 0; i < y.size(); ++i) o[i] = pa[i] + pb[i];
  return y;
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  check_same(a.shape(), b.shape(), "mul");
  Tensor<S> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
  return y;
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S s) {
  Tensor<S> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * s;
  return y;
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  S* o = y.data();
  const S* p = x.data();
#pragma omp simd
  for (std::size_t i = 0; i < y.size(); ++i) o[i] = p[i] > S(0) ? p[i] : S(0);
  return y;
}

template <class S>
Tensor<S> relu_grad(const Tensor<S>& x, const Tensor<S>& dy) {
  check_same(x.shape(), dy.shape(), "relu backward");
  Tensor<S> dx(x.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > S(0) ? dy[i] : S(0);
  return dx;
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const S v = x[i];
    // Branch keeps exp() from overflowing for large |v|.
    y[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
  }
  return y;
}

template <class S>
Tensor<S> sigmoid_grad(const Tensor<S>& y, const Tensor<S>& dy) {
  check_same(y.shape(), dy.shape(), "sigmoid backward");
  Tensor<S> dx(y.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * y[i] * (S(1) - y[i]);
  return dx;
}

template <class S>
Tensor<S> concat_channels(std::span<const Tensor<S>* const> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: empty part list");
  const Shape& first = parts.front()->shape();
  std::size_t channels = 0;
  for (const Tensor<S>* p : parts) {
    const Shape& s = p->shape();
    if (s.t != first.t || s.h != first.h || s.w != first.w)
      throw ShapeError("concat_channels: mismatched (T,H,W) " + shapes(first, s));
    channels += s.c;
  }
  Tensor<S> y(Shape{channels, first.t, first.h, first.w});
  S* o = y.data();
  for (const Tensor<S>* p : parts) o = std::copy(p->data(), p->data() + p->size(), o);
  return y;
}

template <class S>
Tensor<S> slice_channels(const Tensor<S>& x, std::size_t begin, std::size_t count) {
  const Shape& s = x.shape();
  if (begin + count > s.c)
    throw ShapeError("slice_channels: [" + std::to_string(begin) + "," + std::to_string(begin + count) + ") out of " + s.str());
  Tensor<S> y(Shape{count, s.t, s.h, s.w});
  std::copy_n(x.data() + begin * s.per_channel(), count * s.per_channel(), y.data());
  return y;
}

template <class S>
Tensor<S> temporal_shift(const Tensor<S>& x, std::size_t fold_div, int direction) {
  const Shape& s = x.shape();
  if (fold_div < 2) throw ConfigError("temporal_shift: fold divisor must be >= 2, got " + std::to_string(fold_div));
  if (fold_div > s.c)
    throw ConfigError("temporal_shift: fold divisor " + std::to_string(fold_div) + " exceeds channel count " + std::to_string(s.c));
  const std::size_t fold = s.c / fold_div;
  const std::size_t plane = s.plane();
  Tensor<S> y(s);
  for (std::size_t c = 0; c < s.c; ++c) {
    // offset: output frame t reads input frame t + offset.
    int offset = 0;
    if (c < fold) offset = direction;
    else if (c < 2 * fold) offset = -direction;
    for (std::size_t t = 0; t < s.t; ++t) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + offset;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(s.t)) continue;
      std::copy_n(x.data() + (c * s.t + src) * plane, plane, y.data() + (c * s.t + t) * plane);
    }
  }
  return y;
}

template <class S>
Tensor<S> channel_affine(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta) {
  const Shape& s = x.shape();
  if (gamma.size() != s.c || beta.size() != s.c)
    throw ShapeError("channel_affine: parameters " + shapes(gamma.shape(), beta.shape()) + " for input " + s.str());
  Tensor<S> y(s);
  const std::size_t n = s.per_channel();
  for (std::size_t c = 0; c < s.c; ++c) {
    const S g = gamma[c], b = beta[c];
    const S* in = x.data() + c * n;
    S* out = y.data() + c * n;
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) out[i] = g * in[i] + b;
  }
  return y;
}

template <class S>
void channel_affine_grad(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& dy, Tensor<S>* dx,
                         Tensor<S>* dgamma, Tensor<S>* dbeta) {
  const Shape& s = x.shape();
  check_same(s, dy.shape(), "channel_affine backward");
  const std::size_t n = s.per_channel();
  if (dx) *dx = Tensor<S>(s);
  if (dgamma) *dgamma = Tensor<S>(gamma.shape());
  if (dbeta) *dbeta = Tensor<S>(gamma.shape());
  for (std::size_t c = 0; c < s.c; ++c) {
    const S* in = x.data() + c * n;
    const S* g = dy.data() + c * n;
    S sg = 0, sb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sg += g[i] * in[i];
      sb += g[i];
    }
    if (dgamma) (*dgamma)[c] = sg;
    if (dbeta) (*dbeta)[c] = sb;
    if (dx) {
      S* out = dx->data() + c * n;
      const S gm = gamma[c];
      for (std::size_t i = 0; i < n; ++i) out[i] = gm * g[i];
    }
  }
}

template <class S>
Tensor<S> global_avg(const Tensor<S>& x) {
  const Shape& s = x.shape();
  Tensor<S> y(Shape{s.c, 1, 1, 1});
  const std::size_t n = s.per_channel();
  for (std::size_t c = 0; c < s.c; ++c) {
    S acc = 0;
    for (S v : x.channel(c)) acc += v;
    y[c] = acc / static_cast<S>(n);
  }
  return y;
}

template <class S>
Tensor<S> global_avg_grad(const Tensor<S>& dy, const Shape& x_shape) {
  if (dy.size() != x_shape.c) throw ShapeError("global_avg backward: " + shapes(dy.shape(), x_shape));
  Tensor<S> dx(x_shape);
  const std::size_t n = x_shape.per_channel();
  for (std::size_t c = 0; c < x_shape.c; ++c) std::fill_n(dx.data() + c * n, n, dy[c] / static_cast<S>(n));
  return dx;
}

#define ARC_INSTANTIATE_KERNELS(S)                                                                                   \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, std::span<const S>, std::size_t);                   \
  template Tensor<S> conv2d_grad_input(const Tensor<S>&, const Tensor<S>&, const Shape&, std::size_t);              \
  template Tensor<S> conv2d_grad_kernel(const Tensor<S>&, const Tensor<S>&, const Shape&, std::size_t);             \
  template Tensor<S> project(const Tensor<S>&, const Tensor<S>&);                                                   \
  template Tensor<S> project_grad_input(const Tensor<S>&, const Tensor<S>&);                                        \
  template Tensor<S> project_grad_matrix(const Tensor<S>&, const Tensor<S>&);                                       \
  template Tensor<S> pool_max(const Tensor<S>&, PoolAxes, std::vector<std::uint32_t>*);                              \
  template Tensor<S> scatter_argmax(const Tensor<S>&, const std::vector<std::uint32_t>&, const Shape&);             \
  template Tensor<S> max_pool2d(const Tensor<S>&, std::size_t, std::size_t, std::size_t, std::vector<std::uint32_t>*); \
  template Tensor<S> broadcast_add(const Tensor<S>&, const Tensor<S>&);                                             \
  template Tensor<S> broadcast_mul(const Tensor<S>&, const Tensor<S>&);                                             \
  template Tensor<S> reduce_to(const Tensor<S>&, const Shape&);                                                     \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                                       \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                                       \
  template Tensor<S> scale(const Tensor<S>&, S);                                                                    \
  template Tensor<S> relu(const Tensor<S>&);                                                                        \
  template Tensor<S> relu_grad(const Tensor<S>&, const Tensor<S>&);                                                 \
  template Tensor<S> sigmoid(const Tensor<S>&);                                                                     \
  template Tensor<S> sigmoid_grad(const Tensor<S>&, const Tensor<S>&);                                              \
  template Tensor<S> concat_channels(std::span<const Tensor<S>* const>);                                            \
  template Tensor<S> slice_channels(const Tensor<S>&, std::size_t, std::size_t);                                   \
  template Tensor<S> temporal_shift(const Tensor<S>&, std::size_t, int);                                            \
  template Tensor<S> channel_affine(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);                          \
  template void channel_affine_grad(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Tensor<S>*, Tensor<S>*,   \
                                    Tensor<S>*);                                                                    \
  template Tensor<S> global_avg(const Tensor<S>&);                                                                  \
  template Tensor<S> global_avg_grad(const Tensor<S>&, const Shape&);

ARC_INSTANTIATE_KERNELS(float)
ARC_INSTANTIATE_KERNELS(double)

}  // namespace kernels
}  // namespace arc
