#include "arc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace arc {

template <class S>
typename Tape<S>::Node& Tape<S>::node(Var v) {
  if (v.id >= nodes_.size()) throw std::out_of_range("tape: unknown variable " + std::to_string(v.id));
  return nodes_[v.id];
}

template <class S>
const typename Tape<S>::Node& Tape<S>::node(Var v) const {
  if (v.id >= nodes_.size()) throw std::out_of_range("tape: unknown variable " + std::to_string(v.id));
  return nodes_[v.id];
}

template <class S>
Var Tape<S>::constant(Tensor<S> value) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class S>
Var Tape<S>::parameter(Tensor<S> value) {
  Var v = constant(std::move(value));
  nodes_.back().requires_grad = record_;
  return v;
}

template <class S>
Var Tape<S>::borrow(const Tensor<S>& value, bool requires_grad) {
  Node& n = nodes_.emplace_back();
  n.ref = &value;
  n.requires_grad = record_ && requires_grad;
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class S>
Var Tape<S>::emit(Tensor<S> value, std::initializer_list<Var> parents, Backward fn) {
  return emit(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
}

template <class S>
Var Tape<S>::emit(Tensor<S> value, std::span<const Var> parents, Backward fn) {
  bool needs = false;
  if (record_)
    for (Var p : parents) needs = needs || node(p).requires_grad;
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(fn);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class S>
Tensor<S> Tape<S>::grad(Var v) const {
  const Node& n = node(v);
  if (n.has_grad) return n.grad;
  return Tensor<S>(n.value().shape());
}

template <class S>
void Tape<S>::accumulate(Var v, Tensor<S> g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (g.shape() != n.value().shape())
    throw ShapeError("gradient shape " + g.shape().str() + " does not match value " + n.value().shape().str());
  if (!n.has_grad) {
    n.grad = std::move(g);
    n.has_grad = true;
    return;
  }
  S* dst = n.grad.data();
  const S* src = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

template <class S>
std::vector<std::uint32_t> Tape<S>::backward(Var root, const Tensor<S>& seed) {
  if (!record_) throw std::logic_error("tape: backward() on a non-recording tape");
  Node& r = node(root);
  if (seed.shape() != r.value().shape())
    throw ShapeError("backward seed " + seed.shape().str() + " does not match root " + r.value().shape().str());
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor<S>();
  }
  std::vector<std::uint32_t> visited;
  if (!r.requires_grad) return visited;
  r.grad = seed;
  r.has_grad = true;
  for (std::uint32_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    visited.push_back(id);
    n.backward(*this, n.grad);
    // Interior gradients are not needed once propagated.
    n.grad = Tensor<S>();
    n.has_grad = false;
  }
  return visited;
}

template <class S>
std::vector<std::uint32_t> Tape<S>::backward(Var root) {
  return backward(root, Tensor<S>(shape(root), S(1)));
}

template <class S>
void Tape<S>::mix(std::uint64_t v) {
  signature_ ^= v;
  signature_ *= 1099511628211ull;
}

template <class S>
void Tape<S>::observe_relu(const Tensor<S>& pre) {
  if (!monitor_) return;
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < pre.size(); ++i) {
    const S v = pre[i];
    word = (word << 1) | (v > S(0) ? 1u : 0u);
    if ((i & 63) == 63) mix(word), word = 0;
    if (v != S(0)) margin_ = std::min(margin_, static_cast<double>(std::abs(v)));
  }
  mix(word);
}

template <class S>
void Tape<S>::observe_argmax(const std::vector<std::uint32_t>& idx, S gap) {
  if (!monitor_) return;
  for (std::uint32_t i : idx) mix(i);
  margin_ = std::min(margin_, static_cast<double>(gap));
}

template class Tape<float>;
template class Tape<double>;

namespace ag {

namespace {
template <class S>
S runner_up_gap(const Tensor<S>& x, const Tensor<S>& y, const std::vector<std::uint32_t>& argmax,
                kernels::PoolAxes axes) {
  Tensor<S> masked = x;
  for (std::uint32_t i : argmax) masked[i] = -std::numeric_limits<S>::infinity();
  const Tensor<S> second = kernels::pool_max(masked, axes, nullptr);
  S gap = std::numeric_limits<S>::infinity();
  for (std::size_t i = 0; i < y.size(); ++i)
    if (std::isfinite(second[i])) gap = std::min(gap, y[i] - second[i]);
  return gap;
}
}  // namespace

template <class S>
Var conv2d(Tape<S>& tape, Var x, Var k, std::size_t stride, Var bias) {
  std::span<const S> b;
  if (bias.valid()) b = tape.value(bias).span();
  Tensor<S> y = kernels::conv2d(tape.value(x), tape.value(k), b, stride);
  std::vector<Var> parents{x, k};
  if (bias.valid()) parents.push_back(bias);
  return tape.emit(std::move(y), parents, [x, k, bias, stride](Tape<S>& t, const Tensor<S>& dy) {
    if (t.requires_grad(x)) t.accumulate(x, kernels::conv2d_grad_input(dy, t.value(k), t.shape(x), stride));
    if (t.requires_grad(k)) t.accumulate(k, kernels::conv2d_grad_kernel(dy, t.value(x), t.shape(k), stride));
    if (bias.valid() && t.requires_grad(bias)) {
      Tensor<S> db(t.shape(bias));
      for (std::size_t c = 0; c < dy.shape().c; ++c)
        for (S v : dy.channel(c)) db[c] += v;
      t.accumulate(bias, std::move(db));
    }
  });
}

template <class S>
Var project(Tape<S>& tape, Var m, Var x) {
  return tape.emit(kernels::project(tape.value(m), tape.value(x)), {m, x}, [m, x](Tape<S>& t, const Tensor<S>& dy) {
    if (t.requires_grad(m)) t.accumulate(m, kernels::project_grad_matrix(dy, t.value(x)));
    if (t.requires_grad(x)) t.accumulate(x, kernels::project_grad_input(t.value(m), dy));
  });
}

template <class S>
Var relu(Tape<S>& tape, Var x) {
  tape.observe_relu(tape.value(x));
  return tape.emit(kernels::relu(tape.value(x)), {x}, [x](Tape<S>& t, const Tensor<S>& dy) {
    t.accumulate(x, kernels::relu_grad(t.value(x), dy));
  });
}

template <class S>
Var sigmoid(Tape<S>& tape, Var x) {
  // The closure reads this node's own output, which lands at the next id.
  const auto self = static_cast<std::uint32_t>(tape.size());
  return tape.emit(kernels::sigmoid(tape.value(x)), {x}, [x, self](Tape<S>& t, const Tensor<S>& dy) {
    t.accumulate(x, kernels::sigmoid_grad(t.value(Var{self}), dy));
  });
}

template <class S>
Var add(Tape<S>& tape, Var a, Var b) {
  return tape.emit(kernels::add(tape.value(a), tape.value(b)), {a, b}, [a, b](Tape<S>& t, const Tensor<S>& dy) {
    t.accumulate(a, dy);
    t.accumulate(b, dy);
  });
}

template <class S>
Var mul(Tape<S>& tape, Var a, Var b) {
  return tape.emit(kernels::mul(tape.value(a), tape.value(b)), {a, b}, [a, b](Tape<S>& t, const Tensor<S>& dy) {
    if (t.requires_grad(a)) t.accumulate(a, kernels::mul(dy, t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, kernels::mul(dy, t.value(a)));
  });
}

template <class S>
Var broadcast_add(Tape<S>& tape, Var a, Var b) {
  return tape.emit(kernels::broadcast_add(tape.value(a), tape.value(b)), {a, b},
                   [a, b](Tape<S>& t, const Tensor<S>& dy) {
                     if (t.requires_grad(a)) t.accumulate(a, kernels::reduce_to(dy, t.shape(a)));
                     if (t.requires_grad(b)) t.accumulate(b, kernels::reduce_to(dy, t.shape(b)));
                   });
}

template <class S>
Var broadcast_mul(Tape<S>& tape, Var a, Var b) {
  return tape.emit(kernels::broadcast_mul(tape.value(a), tape.value(b)), {a, b},
                   [a, b](Tape<S>& t, const Tensor<S>& dy) {
                     if (t.requires_grad(a))
                       t.accumulate(a, kernels::reduce_to(kernels::broadcast_mul(dy, t.value(b)), t.shape(a)));
                     if (t.requires_grad(b))
                       t.accumulate(b, kernels::reduce_to(kernels::broadcast_mul(dy, t.value(a)), t.shape(b)));
                   });
}

template <class S>
Var pool_max(Tape<S>& tape, Var x, kernels::PoolAxes axes) {
  std::vector<std::uint32_t> argmax;
  Tensor<S> y = kernels::pool_max(tape.value(x), axes, &argmax);
  if (tape.monitoring()) tape.observe_argmax(argmax, runner_up_gap(tape.value(x), y, argmax, axes));
  return tape.emit(std::move(y), {x}, [x, argmax = std::move(argmax)](Tape<S>& t, const Tensor<S>& dy) {
    t.accumulate(x, kernels::scatter_argmax(dy, argmax, t.shape(x)));
  });
}

template <class S>
Var max_pool2d(Tape<S>& tape, Var x, std::size_t k, std::size_t stride, std::size_t pad) {
  std::vector<std::uint32_t> argmax;
  Tensor<S> y = kernels::max_pool2d(tape.value(x), k, stride, pad, &argmax);
  if (tape.monitoring()) {
    Tensor<S> masked = tape.value(x);
    for (std::uint32_t i : argmax) masked[i] = -std::numeric_limits<S>::infinity();
    const Tensor<S> second = kernels::max_pool2d(masked, k, stride, pad, nullptr);
    S gap = std::numeric_limits<S>::infinity();
    for (std::size_t i = 0; i < y.size(); ++i)
      if (std::isfinite(second[i])) gap = std::min(gap, y[i] - second[i]);
    tape.observe_argmax(argmax, gap);
  }
  return tape.emit(std::move(y), {x}, [x, argmax = std::move(argmax)](Tape<S>& t, const Tensor<S>& dy) {
    t.accumulate(x, kernels::scatter_argmax(dy, argmax, t.shape(x)));
  });
}

template <class S>
Var concat_channels(Tape<S>& tape, std::span<const Var> parts) {
  std::vector<const Tensor<S>*> values;
  for (Var p : parts) values.push_back(&tape.value(p));
  Tensor<S> y = kernels::concat_channels<S>(values);
  std::vector<Var> ps(parts.begin(), parts.end());
  return tape.emit(std::move(y), parts, [ps](Tape<S>& t, const Tensor<S>& dy) {
    std::size_t begin = 0;
    for (Var p : ps) {
      const std::size_t c = t.shape(p).c;
      if (t.requires_grad(p)) t.accumulate(p, kernels::slice_channels(dy, begin, c));
      begin += c;
    }
  });
}

template <class S>
Var slice_channels(Tape<S>& tape, Var x, std::size_t begin, std::size_t count) {
  return tape.emit(kernels::slice_channels(tape.value(x), begin, count), {x},
                   [x, begin](Tape<S>& t, const Tensor<S>& dy) {
                     const Shape& s = t.shape(x);
                     Tensor<S> dx(s);
                     std::copy_n(dy.data(), dy.size(), dx.data() + begin * s.per_channel());
                     t.accumulate(x, std::move(dx));
                   });
}

template <class S>
Var pad_channels(Tape<S>& tape, Var x, std::size_t before, std::size_t after) {
  const Shape& s = tape.shape(x);
  Tensor<S> y(Shape{before + s.c + after, s.t, s.h, s.w});
  std::copy_n(tape.value(x).data(), s.size(), y.data() + before * s.per_channel());
  return tape.emit(std::move(y), {x}, [x, before](Tape<S>& t, const Tensor<S>& dy) {
    t.accumulate(x, kernels::slice_channels(dy, before, t.shape(x).c));
  });
}

template <class S>
Var temporal_shift(Tape<S>& tape, Var x, std::size_t fold_div) {
  return tape.emit(kernels::temporal_shift(tape.value(x), fold_div, +1), {x},
                   [x, fold_div](Tape<S>& t, const Tensor<S>& dy) {
                     t.accumulate(x, kernels::temporal_shift(dy, fold_div, -1));
                   });
}

template <class S>
Var channel_affine(Tape<S>& tape, Var x, Var gamma, Var beta) {
  return tape.emit(kernels::channel_affine(tape.value(x), tape.value(gamma), tape.value(beta)), {x, gamma, beta},
                   [x, gamma, beta](Tape<S>& t, const Tensor<S>& dy) {
                     Tensor<S> dx, dg, db;
                     kernels::channel_affine_grad(t.value(x), t.value(gamma), dy, t.requires_grad(x) ? &dx : nullptr,
                                                  t.requires_grad(gamma) ? &dg : nullptr,
                                                  t.requires_grad(beta) ? &db : nullptr);
                     if (t.requires_grad(x)) t.accumulate(x, std::move(dx));
                     if (t.requires_grad(gamma)) t.accumulate(gamma, std::move(dg));
                     if (t.requires_grad(beta)) t.accumulate(beta, std::move(db));
                   });
}

template <class S>
Var global_avg(Tape<S>& tape, Var x) {
  return tape.emit(kernels::global_avg(tape.value(x)), {x}, [x](Tape<S>& t, const Tensor<S>& dy) {
    t.accumulate(x, kernels::global_avg_grad(dy, t.shape(x)));
  });
}

template <class S>
Var dropout(Tape<S>& tape, Var x, double rate, std::uint64_t seed) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  Tensor<S> mask(tape.shape(x));
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - rate);
  const S scale = static_cast<S>(1.0 / (1.0 - rate));
  for (auto& m : mask.span()) m = keep(rng) ? scale : S(0);
  Tensor<S> y = kernels::mul(tape.value(x), mask);
  return tape.emit(std::move(y), {x}, [x, mask = std::move(mask)](Tape<S>& t, const Tensor<S>& dy) {
    t.accumulate(x, kernels::mul(dy, mask));
  });
}

template <class S>
Var linear(Tape<S>& tape, Var weight, Var bias, Var x) {
  Var z = project(tape, weight, x);
  return bias.valid() ? add(tape, z, bias) : z;
}

template <class S>
Var softmax_cross_entropy(Tape<S>& tape, Var logits, std::size_t label) {
  const Tensor<S>& z = tape.value(logits);
  if (label >= z.size())
    throw ShapeError("cross-entropy label " + std::to_string(label) + " outside " + std::to_string(z.size()) + " classes");
  S top = z[0];
  for (std::size_t i = 1; i < z.size(); ++i) top = std::max(top, z[i]);
  S denom = 0;
  for (std::size_t i = 0; i < z.size(); ++i) denom += std::exp(z[i] - top);
  const S lse = top + std::log(denom);
  Tensor<S> loss(Shape{1, 1, 1, 1}, lse - z[label]);
  return tape.emit(std::move(loss), {logits}, [logits, label, lse](Tape<S>& t, const Tensor<S>& dy) {
    const Tensor<S>& zz = t.value(logits);
    Tensor<S> g(zz.shape());
    for (std::size_t i = 0; i < zz.size(); ++i) g[i] = std::exp(zz[i] - lse) * dy[0];
    g[label] -= dy[0];
    t.accumulate(logits, std::move(g));
  });
}

template <class S>
Var sum(Tape<S>& tape, Var x) {
  S acc = 0;
  for (S v : tape.value(x).span()) acc += v;
  return tape.emit(Tensor<S>(Shape{1, 1, 1, 1}, acc), {x}, [x](Tape<S>& t, const Tensor<S>& dy) {
    t.accumulate(x, Tensor<S>(t.shape(x), dy[0]));
  });
}

#define ARC_INSTANTIATE_AG(S)                                                    \
  template Var conv2d(Tape<S>&, Var, Var, std::size_t, Var);                    \
  template Var project(Tape<S>&, Var, Var);                                     \
  template Var relu(Tape<S>&, Var);                                             \
  template Var sigmoid(Tape<S>&, Var);                                          \
  template Var add(Tape<S>&, Var, Var);                                         \
  template Var mul(Tape<S>&, Var, Var);                                         \
  template Var broadcast_add(Tape<S>&, Var, Var);                               \
  template Var broadcast_mul(Tape<S>&, Var, Var);                               \
  template Var pool_max(Tape<S>&, Var, kernels::PoolAxes);                      \
  template Var max_pool2d(Tape<S>&, Var, std::size_t, std::size_t, std::size_t); \
  template Var concat_channels(Tape<S>&, std::span<const Var>);                 \
  template Var slice_channels(Tape<S>&, Var, std::size_t, std::size_t);         \
  template Var pad_channels(Tape<S>&, Var, std::size_t, std::size_t);           \
  template Var temporal_shift(Tape<S>&, Var, std::size_t);                      \
  template Var channel_affine(Tape<S>&, Var, Var, Var);                         \
  template Var global_avg(Tape<S>&, Var);                                       \
  template Var dropout(Tape<S>&, Var, double, std::uint64_t);                   \
  template Var linear(Tape<S>&, Var, Var, Var);                                 \
  template Var softmax_cross_entropy(Tape<S>&, Var, std::size_t);               \
  template Var sum(Tape<S>&, Var);

ARC_INSTANTIATE_AG(float)
ARC_INSTANTIATE_AG(double)

}  // namespace ag
}  // namespace arc
