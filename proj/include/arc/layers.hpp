#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "arc/autodiff.hpp"
#include "arc/ops.hpp"
#include "arc/tensor.hpp"

namespace arc {

enum class Interaction { additive, multiplicative };

/// How a generated group Y_j is summarised before the attention projection.
enum class Aggregation {
  spatial,                // S: max over (H, W) per frame
  temporal,               // T: max over frames per position
  global,                 // ST: max over all positions
  spatial_plus_temporal,  // S+T: broadcast sum of the two separate pools
};

enum class AttentionHead { fc };

std::string to_string(Interaction v);
std::string to_string(Aggregation v);
Interaction parse_interaction(const std::string& s);
/// Accepts "s", "t", "st", "s+t" (case-insensitive).
Aggregation parse_aggregation(const std::string& s);

struct ArcConfig {
  std::size_t n = 4;
  Interaction interaction = Interaction::additive;
  Aggregation aggregation = Aggregation::spatial_plus_temporal;
  AttentionHead head = AttentionHead::fc;

  void validate() const;
  /// Throws ConfigError unless n divides `c_out`.
  void check_width(std::size_t c_out) const;
  friend bool operator==(const ArcConfig&, const ArcConfig&) = default;
};

/// Parameters of one ARC-wrapped convolution with n recursive steps.
///
/// `fuse[j]` and `attend[j]` (each C_in x C_out/n) route group Y_{j+1} back into the input space.
/// Only n-1 of each are stored: the last group is never fed back.
template <class S>
struct ArcLayerParams {
  std::vector<KernelStack<S>> kernels;
  ChannelMatrix<S> embed;
  std::vector<ChannelMatrix<S>> fuse;
  std::vector<ChannelMatrix<S>> attend;

  std::size_t n() const noexcept { return kernels.size(); }
  std::size_t c_in() const { return kernels.at(0).c_in(); }
  std::size_t group_width() const { return kernels.at(0).c_out(); }
  std::size_t c_out() const { return group_width() * n(); }
  std::size_t parameter_count() const;
  void validate() const;

  /// Partition a feed-forward kernel bank into n groups in channel order; ARU matrices are zero.
  static ArcLayerParams from_feedforward(const KernelStack<S>& k, const ArcConfig& cfg);
  /// Concatenation of the kernel groups, i.e. the equivalent feed-forward bank.
  KernelStack<S> merged_kernels() const;
};

/// Tape handles for an ArcLayerParams.
struct ArcLayerVars {
  std::vector<Var> kernels;
  Var embed;
  std::vector<Var> fuse;
  std::vector<Var> attend;
};

template <class S>
ArcLayerVars bind(Tape<S>& tape, const ArcLayerParams<S>& p, bool requires_grad);

/// Receives each evolving input state Z_i (i >= 2) as it is produced.
template <class S>
using StateObserver = std::function<void(std::size_t step, const Tensor<S>& z)>;

namespace ag {

/// Evolving input state Z_step computed from X0 and the groups generated so far.
template <class S>
Var aru(Tape<S>& tape, Var x0, std::span<const Var> generated, const ArcLayerVars& p, std::size_t step,
        const ArcConfig& cfg);

template <class S>
Var arc_layer(Tape<S>& tape, Var x0, const ArcLayerVars& p, const ArcConfig& cfg, const StateObserver<S>& observe = {});

/// y_1 = f(x_1), y_i = f(x_i + y_{i-1}), concatenated. Kernels are (C/n, C/n, K, K).
template <class S>
Var res2net_block(Tape<S>& tape, Var x, std::span<const Var> kernels);

/// ARC recursion where the updater is the parameter-free sum of the i-th masked input group and
/// the previous output group. Kernels are full-input (C/n, C, K, K).
template <class S>
Var arc_reduction(Tape<S>& tape, Var x0, std::span<const Var> kernels);

}  // namespace ag

template <class S>
Tensor<S> feedforward_conv(const Tensor<S>& x, const KernelStack<S>& k);

template <class S>
Tensor<S> aru(const Tensor<S>& x0, const std::vector<Tensor<S>>& generated, const ArcLayerParams<S>& params,
              std::size_t step, const ArcConfig& cfg);

template <class S>
Tensor<S> arc_layer_forward(const Tensor<S>& x0, const ArcLayerParams<S>& params, const ArcConfig& cfg);

template <class S>
Tensor<S> temporal_shift(const Tensor<S>& x, std::size_t fold_div);

template <class S>
Tensor<S> res2net_block(const Tensor<S>& x, const std::vector<KernelStack<S>>& kernels);

template <class S>
Tensor<S> arc_reduction_mode(const Tensor<S>& x, const ArcLayerParams<S>& params, const ArcConfig& cfg);

/// Lift Res2Net group kernels (C/n, C/n, K, K) into full-input kernels that read only group i.
template <class S>
ArcLayerParams<S> embed_res2net_kernels(const std::vector<KernelStack<S>>& kernels);

}  // namespace arc
