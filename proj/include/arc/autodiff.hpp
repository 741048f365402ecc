#pragma once

// Reverse-mode differentiation. A Tape records every primitive executed through the ag:: ops
// together with a closure computing its vector-Jacobian product; Tape::backward replays the
// closures in exact reverse execution order.

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <vector>

#include "arc/kernels.hpp"
#include "arc/tensor.hpp"

namespace arc {

struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
};

template <class S>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor<S>& upstream)>;

  /// With record == false no closures are kept and backward() is unavailable (inference).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor<S> value);
  Var parameter(Tensor<S> value);
  /// Leaf referencing external storage that must outlive the tape.
  Var borrow(const Tensor<S>& value, bool requires_grad);
  Var emit(Tensor<S> value, std::initializer_list<Var> parents, Backward fn);
  Var emit(Tensor<S> value, std::span<const Var> parents, Backward fn);

  const Tensor<S>& value(Var v) const { return node(v).value(); }
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  bool has_grad(Var v) const { return node(v).has_grad; }
  /// Gradient accumulated into `v` by the last backward pass; zeros when nothing reached it.
  Tensor<S> grad(Var v) const;
  void accumulate(Var v, Tensor<S> g);

  /// Returns the node ids whose vector-Jacobian products ran, in visiting order.
  std::vector<std::uint32_t> backward(Var root, const Tensor<S>& seed);
  std::vector<std::uint32_t> backward(Var root);

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Activation-pattern monitor for the gradient checker.
  void set_monitor(bool on) { monitor_ = on; }
  bool monitoring() const noexcept { return monitor_; }
  void observe_relu(const Tensor<S>& pre);
  void observe_argmax(const std::vector<std::uint32_t>& idx, S gap);
  std::uint64_t pattern_signature() const noexcept { return signature_; }
  /// Smallest distance of a non-zero ReLU input to 0, or of a pooled maximum to its runner-up.
  double kink_margin() const noexcept { return margin_; }

 private:
  struct Node {
    Tensor<S> owned;
    const Tensor<S>* ref = nullptr;
    Tensor<S> grad;
    Backward backward;
    bool requires_grad = false;
    bool has_grad = false;
    const Tensor<S>& value() const { return ref ? *ref : owned; }
  };
  Node& node(Var v);
  const Node& node(Var v) const;
  void mix(std::uint64_t v);

  std::deque<Node> nodes_;
  bool record_ = true;
  bool monitor_ = false;
  std::uint64_t signature_ = 1469598103934665603ull;
  double margin_ = std::numeric_limits<double>::infinity();
};

namespace ag {

template <class S>
Var conv2d(Tape<S>& tape, Var x, Var k, std::size_t stride = 1, Var bias = {});
template <class S>
Var project(Tape<S>& tape, Var m, Var x);
template <class S>
Var relu(Tape<S>& tape, Var x);
template <class S>
Var sigmoid(Tape<S>& tape, Var x);
template <class S>
Var add(Tape<S>& tape, Var a, Var b);
template <class S>
Var mul(Tape<S>& tape, Var a, Var b);
template <class S>
Var broadcast_add(Tape<S>& tape, Var a, Var b);
template <class S>
Var broadcast_mul(Tape<S>& tape, Var a, Var b);
template <class S>
Var pool_max(Tape<S>& tape, Var x, kernels::PoolAxes axes);
template <class S>
Var pool_spatial_max(Tape<S>& tape, Var x) { return pool_max(tape, x, kernels::PoolAxes::spatial); }
template <class S>
Var pool_temporal_max(Tape<S>& tape, Var x) { return pool_max(tape, x, kernels::PoolAxes::temporal); }
template <class S>
Var pool_global_max(Tape<S>& tape, Var x) { return pool_max(tape, x, kernels::PoolAxes::global); }
template <class S>
Var max_pool2d(Tape<S>& tape, Var x, std::size_t k, std::size_t stride, std::size_t pad);
template <class S>
Var concat_channels(Tape<S>& tape, std::span<const Var> parts);
template <class S>
Var slice_channels(Tape<S>& tape, Var x, std::size_t begin, std::size_t count);
/// Zero channels before and after x (adjoint of slice_channels).
template <class S>
Var pad_channels(Tape<S>& tape, Var x, std::size_t before, std::size_t after);
template <class S>
Var temporal_shift(Tape<S>& tape, Var x, std::size_t fold_div);
template <class S>
Var channel_affine(Tape<S>& tape, Var x, Var gamma, Var beta);
template <class S>
Var global_avg(Tape<S>& tape, Var x);
/// Inverted dropout with a mask drawn from `seed`; identity when rate == 0.
template <class S>
Var dropout(Tape<S>& tape, Var x, double rate, std::uint64_t seed);
/// logits = W x + b with W (K, C, 1, 1), x (C, 1, 1, 1), b (K, 1, 1, 1).
template <class S>
Var linear(Tape<S>& tape, Var weight, Var bias, Var x);
/// Softmax cross-entropy of one sample against `label`, as a (1,1,1,1) scalar.
template <class S>
Var softmax_cross_entropy(Tape<S>& tape, Var logits, std::size_t label);
template <class S>
Var sum(Tape<S>& tape, Var x);

}  // namespace ag
}  // namespace arc
