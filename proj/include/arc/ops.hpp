#pragma once

// Value-level primitives on feature maps. Thin typed wrappers over arc::kernels.

#include <span>
#include <vector>

#include "arc/kernels.hpp"
#include "arc/tensor.hpp"

namespace arc {

/// Per-frame 2-D cross-correlation with zero same-padding of (K-1)/2.
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const KernelStack<S>& k, std::span<const S> bias = {}, std::size_t stride = 1) {
  if (k.groups() != 1) throw ConfigError("conv2d: grouped kernels are not supported");
  if (x.shape().c != k.c_in())
    throw ShapeError("conv2d: input " + x.shape().str() + " vs kernel " + k.tensor().shape().str());
  return kernels::conv2d(x, k.tensor(), bias, stride);
}

/// out[r,t,h,w] = sum_c m[r,c] x[c,t,h,w]
template <class S>
Tensor<S> channel_project(const ChannelMatrix<S>& m, const Tensor<S>& x) {
  return kernels::project(m.tensor(), x);
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  return kernels::relu(x);
}
template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return kernels::sigmoid(x);
}

template <class S>
Tensor<S> pool_spatial_max(const Tensor<S>& x) {
  return kernels::pool_max(x, kernels::PoolAxes::spatial, nullptr);
}
template <class S>
Tensor<S> pool_temporal_max(const Tensor<S>& x) {
  return kernels::pool_max(x, kernels::PoolAxes::temporal, nullptr);
}
template <class S>
Tensor<S> pool_global_max(const Tensor<S>& x) {
  return kernels::pool_max(x, kernels::PoolAxes::global, nullptr);
}

template <class S>
Tensor<S> broadcast_add(const Tensor<S>& a, const Tensor<S>& b) {
  return kernels::broadcast_add(a, b);
}

template <class S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& parts) {
  std::vector<const Tensor<S>*> ptrs;
  ptrs.reserve(parts.size());
  for (const auto& p : parts) ptrs.push_back(&p);
  return kernels::concat_channels<S>(ptrs);
}

/// Inverse of concat_channels for equal-width groups.
template <class S>
std::vector<Tensor<S>> split_channels(const Tensor<S>& x, std::size_t groups) {
  if (groups == 0 || x.shape().c % groups != 0)
    throw ConfigError("split_channels: " + std::to_string(x.shape().c) + " channels not divisible into " +
                      std::to_string(groups) + " groups");
  const std::size_t width = x.shape().c / groups;
  std::vector<Tensor<S>> out;
  for (std::size_t g = 0; g < groups; ++g) out.push_back(kernels::slice_channels(x, g * width, width));
  return out;
}

}  // namespace arc
