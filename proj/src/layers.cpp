#include "arc/layers.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

namespace arc {

std::string to_string(Interaction v) { return v == Interaction::additive ? "additive" : "multiplicative"; }

std::string to_string(Aggregation v) {
  switch (v) {
    case Aggregation::spatial: return "s";
    case Aggregation::temporal: return "t";
    case Aggregation::global: return "st";
    case Aggregation::spatial_plus_temporal: return "s+t";
  }
  return "?";
}

Interaction parse_interaction(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "additive") return Interaction::additive;
  if (l == "multiplicative") return Interaction::multiplicative;
  throw ConfigError("unknown interaction '" + s + "' (expected additive|multiplicative)");
}

Aggregation parse_aggregation(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "s") return Aggregation::spatial;
  if (l == "t") return Aggregation::temporal;
  if (l == "st") return Aggregation::global;
  if (l == "s+t" || l == "s_plus_t") return Aggregation::spatial_plus_temporal;
  throw ConfigError("unknown aggregation '" + s + "' (expected s|t|st|s+t)");
}

void ArcConfig::validate() const {
  if (n < 1) throw ConfigError("ARC recursion count n must be >= 1");
}

void ArcConfig::check_width(std::size_t c_out) const {
  validate();
  if (c_out % n != 0)
    throw ConfigError("ARC: n = " + std::to_string(n) + " does not divide C_out = " + std::to_string(c_out) +
                      "; the wrapped layer must not use feature grouping");
}

template <class S>
std::size_t ArcLayerParams<S>::parameter_count() const {
  std::size_t total = embed.tensor().size();
  for (const auto& k : kernels) total += k.tensor().size();
  for (const auto& m : fuse) total += m.tensor().size();
  for (const auto& m : attend) total += m.tensor().size();
  return total;
}

template <class S>
void ArcLayerParams<S>::validate() const {
  if (kernels.empty()) throw ConfigError("ARC layer needs at least one kernel group");
  const Shape& k0 = kernels[0].tensor().shape();
  for (const auto& k : kernels)
    if (k.tensor().shape() != k0) throw ShapeError("ARC kernel groups differ: " + k0.str() + " vs " + k.tensor().shape().str());
  const std::size_t ci = c_in(), gw = group_width(), steps = n() - 1;
  const std::size_t e = steps ? ci : 0;
  if (embed.rows() != e || embed.cols() != e)
    throw ShapeError("ARC embedding must be " + std::to_string(e) + "x" + std::to_string(e) + ", got " + embed.tensor().shape().str());
  if (fuse.size() != steps || attend.size() != steps)
    throw ShapeError("ARC layer with n = " + std::to_string(n()) + " needs " + std::to_string(steps) +
                     " fusion and attention matrices");
  for (const auto* set : {&fuse, &attend})
    for (const auto& m : *set)
      if (m.rows() != ci || m.cols() != gw)
        throw ShapeError("ARC fusion/attention matrix must be " + std::to_string(ci) + "x" + std::to_string(gw) +
                         ", got " + m.tensor().shape().str());
}

template <class S>
ArcLayerParams<S> ArcLayerParams<S>::from_feedforward(const KernelStack<S>& k, const ArcConfig& cfg) {
  if (k.groups() != 1)
    throw ConfigError("cannot ARC-convert a grouped convolution (groups = " + std::to_string(k.groups()) + ")");
  cfg.check_width(k.c_out());
  ArcLayerParams p;
  const std::size_t gw = k.c_out() / cfg.n;
  const Shape& s = k.tensor().shape();
  for (std::size_t i = 0; i < cfg.n; ++i)
    p.kernels.emplace_back(kernels::slice_channels(k.tensor(), i * gw, gw));
  if (cfg.n > 1) p.embed = ChannelMatrix<S>(s.t, s.t);  // n = 1 has no backward path
  for (std::size_t j = 0; j + 1 < cfg.n; ++j) {
    p.fuse.emplace_back(s.t, gw);
    p.attend.emplace_back(s.t, gw);
  }
  return p;
}

template <class S>
KernelStack<S> ArcLayerParams<S>::merged_kernels() const {
  std::vector<const Tensor<S>*> parts;
  for (const auto& k : kernels) parts.push_back(&k.tensor());
  return KernelStack<S>(kernels::concat_channels<S>(parts));
}

template <class S>
ArcLayerVars bind(Tape<S>& tape, const ArcLayerParams<S>& p, bool requires_grad) {
  ArcLayerVars v;
  for (const auto& k : p.kernels) v.kernels.push_back(tape.borrow(k.tensor(), requires_grad));
  v.embed = tape.borrow(p.embed.tensor(), requires_grad);
  for (const auto& m : p.fuse) v.fuse.push_back(tape.borrow(m.tensor(), requires_grad));
  for (const auto& m : p.attend) v.attend.push_back(tape.borrow(m.tensor(), requires_grad));
  return v;
}

namespace ag {

namespace {

// Running sums of the backward path. AF and AM are linear in the Y_j, so each generated group is
// absorbed once. The attention of S+T is kept as its two separately projected pools, which is the
// same map as projecting their broadcast sum.
template <class S>
class Backflow {
 public:
  Backflow(Tape<S>& tape, Var x0, const ArcLayerVars& p, const ArcConfig& cfg) : tape_(tape), p_(p), cfg_(cfg) {
    base_ = add(tape, x0, project(tape, p.embed, x0));
  }

  void absorb(Var y, std::size_t j) {
    accumulate(fused_, project(tape_, p_.fuse.at(j), y));
    const Var wa = p_.attend.at(j);
    switch (cfg_.aggregation) {
      case Aggregation::spatial: accumulate(att_s_, project(tape_, wa, pool_spatial_max(tape_, y))); break;
      case Aggregation::temporal: accumulate(att_t_, project(tape_, wa, pool_temporal_max(tape_, y))); break;
      case Aggregation::global: accumulate(att_g_, project(tape_, wa, pool_global_max(tape_, y))); break;
      case Aggregation::spatial_plus_temporal:
        accumulate(att_s_, project(tape_, wa, pool_spatial_max(tape_, y)));
        accumulate(att_t_, project(tape_, wa, pool_temporal_max(tape_, y)));
        break;
    }
  }

  Var evolve() {
    Var pre = fused_ ? add(tape_, base_, *fused_) : base_;
    if (cfg_.interaction == Interaction::additive) {
      for (const auto* a : {&att_s_, &att_t_, &att_g_})
        if (*a) pre = broadcast_add(tape_, pre, **a);
      return relu(tape_, pre);
    }
    std::optional<Var> attention;
    for (const auto* a : {&att_s_, &att_t_, &att_g_})
      if (*a) attention = attention ? broadcast_add(tape_, *attention, **a) : **a;
    if (!attention) return relu(tape_, pre);
    return relu(tape_, broadcast_mul(tape_, pre, sigmoid(tape_, *attention)));
  }

 private:
  void accumulate(std::optional<Var>& acc, Var term) { acc = acc ? add(tape_, *acc, term) : term; }

  Tape<S>& tape_;
  const ArcLayerVars& p_;
  const ArcConfig& cfg_;
  Var base_;
  std::optional<Var> fused_, att_s_, att_t_, att_g_;
};

void check_vars(const ArcLayerVars& p, const ArcConfig& cfg) {
  cfg.validate();
  if (p.kernels.size() != cfg.n)
    throw ConfigError("ARC config n = " + std::to_string(cfg.n) + " but layer has " + std::to_string(p.kernels.size()) +
                      " kernel groups");
  if (p.fuse.size() + 1 != cfg.n || p.attend.size() + 1 != cfg.n)
    throw ConfigError("ARC layer must carry n-1 fusion and attention matrices");
}

template <class S>
void check_group(Tape<S>& tape, Var x0, Var y, std::size_t width) {
  const Shape& xs = tape.shape(x0);
  const Shape& ys = tape.shape(y);
  if (ys.c != width || ys.t != xs.t || ys.h != xs.h || ys.w != xs.w)
    throw ShapeError("ARU: generated group " + ys.str() + " incompatible with input " + xs.str() + " and group width " +
                     std::to_string(width));
}

}  // namespace

template <class S>
Var aru(Tape<S>& tape, Var x0, std::span<const Var> generated, const ArcLayerVars& p, std::size_t step,
        const ArcConfig& cfg) {
  check_vars(p, cfg);
  if (step < 2 || step > cfg.n)
    throw ConfigError("ARU step " + std::to_string(step) + " outside [2, " + std::to_string(cfg.n) + "]");
  if (generated.size() != step - 1)
    throw ShapeError("ARU step " + std::to_string(step) + " expects " + std::to_string(step - 1) + " generated groups, got " +
                     std::to_string(generated.size()));
  const std::size_t width = tape.shape(p.fuse[0]).t;
  Backflow<S> flow(tape, x0, p, cfg);
  for (std::size_t j = 0; j < generated.size(); ++j) {
    check_group(tape, x0, generated[j], width);
    flow.absorb(generated[j], j);
  }
  return flow.evolve();
}

template <class S>
Var arc_layer(Tape<S>& tape, Var x0, const ArcLayerVars& p, const ArcConfig& cfg, const StateObserver<S>& observe) {
  check_vars(p, cfg);
  const Shape& ks = tape.shape(p.kernels[0]);
  if (tape.shape(x0).c != ks.t)
    throw ShapeError("ARC layer: input " + tape.shape(x0).str() + " vs kernel group " + ks.str());
  std::vector<Var> groups;
  groups.push_back(conv2d(tape, x0, p.kernels[0]));
  if (cfg.n > 1) {
    Backflow<S> flow(tape, x0, p, cfg);
    for (std::size_t i = 1; i < cfg.n; ++i) {
      flow.absorb(groups.back(), i - 1);
      const Var z = flow.evolve();
      if (observe) observe(i + 1, tape.value(z));
      groups.push_back(conv2d(tape, z, p.kernels[i]));
    }
  }
  return groups.size() == 1 ? groups[0] : concat_channels<S>(tape, groups);
}

template <class S>
Var res2net_block(Tape<S>& tape, Var x, std::span<const Var> kernels) {
  const std::size_t n = kernels.size();
  const Shape& xs = tape.shape(x);
  if (n == 0 || xs.c % n != 0)
    throw ConfigError("res2net: " + std::to_string(xs.c) + " channels not divisible by " + std::to_string(n) + " groups");
  const std::size_t width = xs.c / n;
  std::vector<Var> ys;
  for (std::size_t i = 0; i < n; ++i) {
    const Shape& ks = tape.shape(kernels[i]);
    if (ks.c != width || ks.t != width)
      throw ShapeError("res2net: kernel " + ks.str() + " must map " + std::to_string(width) + " to " + std::to_string(width) + " channels");
    Var xi = slice_channels(tape, x, i * width, width);
    if (i > 0) xi = add(tape, xi, ys.back());
    ys.push_back(conv2d(tape, xi, kernels[i]));
  }
  return ys.size() == 1 ? ys[0] : concat_channels<S>(tape, ys);
}

template <class S>
Var arc_reduction(Tape<S>& tape, Var x0, std::span<const Var> kernels) {
  const std::size_t n = kernels.size();
  const Shape& xs = tape.shape(x0);
  if (n == 0 || xs.c % n != 0)
    throw ConfigError("ARC reduction: " + std::to_string(xs.c) + " channels not divisible by n = " + std::to_string(n));
  const std::size_t width = xs.c / n;
  std::vector<Var> ys;
  for (std::size_t i = 0; i < n; ++i) {
    const Shape& ks = tape.shape(kernels[i]);
    if (ks.c != width || ks.t != xs.c)
      throw ShapeError("ARC reduction: kernel " + ks.str() + " must map " + std::to_string(xs.c) + " to " + std::to_string(width) + " channels");
    Var z = x0;
    if (i > 0) {
      const std::size_t before = i * width, after = xs.c - before - width;
      Var masked = pad_channels(tape, slice_channels(tape, x0, before, width), before, after);
      z = add(tape, masked, pad_channels(tape, ys.back(), before, after));
    }
    ys.push_back(conv2d(tape, z, kernels[i]));
  }
  return ys.size() == 1 ? ys[0] : concat_channels<S>(tape, ys);
}

}  // namespace ag

template <class S>
Tensor<S> feedforward_conv(const Tensor<S>& x, const KernelStack<S>& k) {
  return conv2d(x, k);
}

template <class S>
Tensor<S> aru(const Tensor<S>& x0, const std::vector<Tensor<S>>& generated, const ArcLayerParams<S>& params,
              std::size_t step, const ArcConfig& cfg) {
  params.validate();
  Tape<S> tape(false);
  const ArcLayerVars vars = bind(tape, params, false);
  Var x = tape.borrow(x0, false);
  std::vector<Var> ys;
  for (const auto& y : generated) ys.push_back(tape.borrow(y, false));
  return tape.value(ag::aru(tape, x, ys, vars, step, cfg));
}

template <class S>
Tensor<S> arc_layer_forward(const Tensor<S>& x0, const ArcLayerParams<S>& params, const ArcConfig& cfg) {
  params.validate();
  Tape<S> tape(false);
  const ArcLayerVars vars = bind(tape, params, false);
  return tape.value(ag::arc_layer(tape, tape.borrow(x0, false), vars, cfg));
}

template <class S>
Tensor<S> temporal_shift(const Tensor<S>& x, std::size_t fold_div) {
  return kernels::temporal_shift(x, fold_div, +1);
}

template <class S>
Tensor<S> res2net_block(const Tensor<S>& x, const std::vector<KernelStack<S>>& kernels) {
  Tape<S> tape(false);
  std::vector<Var> ks;
  for (const auto& k : kernels) ks.push_back(tape.borrow(k.tensor(), false));
  return tape.value(ag::res2net_block<S>(tape, tape.borrow(x, false), ks));
}

template <class S>
Tensor<S> arc_reduction_mode(const Tensor<S>& x, const ArcLayerParams<S>& params, const ArcConfig& cfg) {
  if (params.n() != cfg.n)
    throw ConfigError("ARC reduction: config n = " + std::to_string(cfg.n) + " but params have " + std::to_string(params.n()) + " groups");
  Tape<S> tape(false);
  std::vector<Var> ks;
  for (const auto& k : params.kernels) ks.push_back(tape.borrow(k.tensor(), false));
  return tape.value(ag::arc_reduction<S>(tape, tape.borrow(x, false), ks));
}

template <class S>
ArcLayerParams<S> embed_res2net_kernels(const std::vector<KernelStack<S>>& kernels) {
  const std::size_t n = kernels.size();
  if (n == 0) throw ConfigError("res2net: no kernel groups");
  const std::size_t width = kernels[0].c_out();
  const std::size_t k = kernels[0].kernel();
  const std::size_t c = width * n;
  ArcLayerParams<S> p;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor<S>& src = kernels[i].tensor();
    if (src.shape() != Shape{width, width, k, k}) throw ShapeError("res2net: kernel groups must share shape");
    Tensor<S> full(Shape{width, c, k, k});
    for (std::size_t o = 0; o < width; ++o)
      for (std::size_t ci = 0; ci < width; ++ci)
        for (std::size_t kh = 0; kh < k; ++kh)
          for (std::size_t kw = 0; kw < k; ++kw) full(o, i * width + ci, kh, kw) = src(o, ci, kh, kw);
    p.kernels.emplace_back(std::move(full));
  }
  if (n > 1) p.embed = ChannelMatrix<S>(c, c);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    p.fuse.emplace_back(c, width);
    p.attend.emplace_back(c, width);
  }
  return p;
}

#define ARC_INSTANTIATE_LAYERS(S)                                                                                  \
  template struct ArcLayerParams<S>;                                                                               \
  template ArcLayerVars bind(Tape<S>&, const ArcLayerParams<S>&, bool);                                            \
  template Var ag::aru(Tape<S>&, Var, std::span<const Var>, const ArcLayerVars&, std::size_t, const ArcConfig&);   \
  template Var ag::arc_layer(Tape<S>&, Var, const ArcLayerVars&, const ArcConfig&, const StateObserver<S>&);                                \
  template Var ag::res2net_block(Tape<S>&, Var, std::span<const Var>);                                             \
  template Var ag::arc_reduction(Tape<S>&, Var, std::span<const Var>);                                             \
  template Tensor<S> feedforward_conv(const Tensor<S>&, const KernelStack<S>&);                                    \
  template Tensor<S> aru(const Tensor<S>&, const std::vector<Tensor<S>>&, const ArcLayerParams<S>&, std::size_t,   \
                         const ArcConfig&);                                                                        \
  template Tensor<S> arc_layer_forward(const Tensor<S>&, const ArcLayerParams<S>&, const ArcConfig&);              \
  template Tensor<S> temporal_shift(const Tensor<S>&, std::size_t);                                                \
  template Tensor<S> res2net_block(const Tensor<S>&, const std::vector<KernelStack<S>>&);                          \
  template Tensor<S> arc_reduction_mode(const Tensor<S>&, const ArcLayerParams<S>&, const ArcConfig&);             \
  template ArcLayerParams<S> embed_res2net_kernels(const std::vector<KernelStack<S>>&);

ARC_INSTANTIATE_LAYERS(float)
ARC_INSTANTIATE_LAYERS(double)

}  // namespace arc
