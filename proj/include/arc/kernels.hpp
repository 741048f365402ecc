#pragma once

// Parallel numeric kernels over Tensor. Every kernel is a pure function of its inputs and is
// parallelised across independent output rows only, so results do not depend on thread count.

#include <cstdint>
#include <span>
#include <vector>

#include "arc/tensor.hpp"

namespace arc {

/// Scoped multiply-add counter. While an instance is alive, forward convolution and channel
/// projection kernels add their nominal multiply-add count (padding taps included).
class FlopCounter {
 public:
  FlopCounter();
  ~FlopCounter();
  FlopCounter(const FlopCounter&) = delete;
  FlopCounter& operator=(const FlopCounter&) = delete;

  std::uint64_t count() const;
};

namespace kernels {

void count_macs(std::uint64_t macs);

/// Output extent of a same-padded convolution or pooling window.
constexpr std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// x: (Ci, T, H, W), k: (Co, Ci, K, K), padding (K-1)/2, optional bias of length Co.
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& k, std::span<const S> bias, std::size_t stride);
template <class S>
Tensor<S> conv2d_grad_input(const Tensor<S>& dy, const Tensor<S>& k, const Shape& x_shape, std::size_t stride);
template <class S>
Tensor<S> conv2d_grad_kernel(const Tensor<S>& dy, const Tensor<S>& x, const Shape& k_shape, std::size_t stride);

// m: (R, C, 1, 1), x: (C, T, H, W) -> (R, T, H, W)
template <class S>
Tensor<S> project(const Tensor<S>& m, const Tensor<S>& x);
template <class S>
Tensor<S> project_grad_input(const Tensor<S>& m, const Tensor<S>& dy);
template <class S>
Tensor<S> project_grad_matrix(const Tensor<S>& dy, const Tensor<S>& x);

enum class PoolAxes { spatial, temporal, global };

/// Max over the reduced axes; `argmax` receives flat input indices (first maximum in scan order).
template <class S>
Tensor<S> pool_max(const Tensor<S>& x, PoolAxes axes, std::vector<std::uint32_t>* argmax);
template <class S>
Tensor<S> scatter_argmax(const Tensor<S>& dy, const std::vector<std::uint32_t>& argmax, const Shape& x_shape);

/// Per-frame KxK window max pooling with implicit -inf padding.
template <class S>
Tensor<S> max_pool2d(const Tensor<S>& x, std::size_t k, std::size_t stride, std::size_t pad,
                     std::vector<std::uint32_t>* argmax);

Shape broadcast_shape(const Shape& a, const Shape& b);
template <class S>
Tensor<S> broadcast_add(const Tensor<S>& a, const Tensor<S>& b);
template <class S>
Tensor<S> broadcast_mul(const Tensor<S>& a, const Tensor<S>& b);
/// Sum `g` over the axes where `target` has extent 1.
template <class S>
Tensor<S> reduce_to(const Tensor<S>& g, const Shape& target);

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <class S>
Tensor<S> scale(const Tensor<S>& a, S s);
template <class S>
Tensor<S> relu(const Tensor<S>& x);
template <class S>
Tensor<S> relu_grad(const Tensor<S>& x, const Tensor<S>& dy);
template <class S>
Tensor<S> sigmoid(const Tensor<S>& x);
template <class S>
Tensor<S> sigmoid_grad(const Tensor<S>& y, const Tensor<S>& dy);

template <class S>
Tensor<S> concat_channels(std::span<const Tensor<S>* const> parts);
template <class S>
Tensor<S> slice_channels(const Tensor<S>& x, std::size_t begin, std::size_t count);

/// direction +1 moves the first fold toward earlier frames and the second toward later ones;
/// direction -1 is the adjoint.
template <class S>
Tensor<S> temporal_shift(const Tensor<S>& x, std::size_t fold_div, int direction);

// y[c] = gamma[c] * x[c] + beta[c]
template <class S>
Tensor<S> channel_affine(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta);
template <class S>
void channel_affine_grad(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& dy, Tensor<S>* dx,
                         Tensor<S>* dgamma, Tensor<S>* dbeta);

/// Mean over (T, H, W) -> (C, 1, 1, 1).
template <class S>
Tensor<S> global_avg(const Tensor<S>& x);
template <class S>
Tensor<S> global_avg_grad(const Tensor<S>& dy, const Shape& x_shape);

}  // namespace kernels
}  // namespace arc
