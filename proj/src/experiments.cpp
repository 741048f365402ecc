#include "arc/experiments.hpp"

#include <algorithm>
#include <cmath>

namespace arc {

using nlohmann::json;
using T64 = Tensor<double>;
using Tape64 = Tape<double>;

namespace {

// Scalar probe: <out, R> with a fixed random R, so every output coordinate carries gradient.
Var contract(Tape64& tape, Var out, std::uint64_t seed) {
  const Var r = tape.constant(random_tensor<double>(tape.shape(out), seed));
  return ag::sum(tape, ag::mul(tape, out, r));
}

struct Suite {
  const GradCheckOptions& opts;
  std::uint64_t seed;
  std::vector<GradReport> reports;
  std::uint64_t next = 0;

  T64 rnd(Shape s, double lo = -1, double hi = 1) { return random_tensor<double>(s, seed_mix(seed, ++next), lo, hi); }

  template <class F>
  void run(const std::string& label, std::vector<GradInput> inputs, F&& fn) {
    const std::uint64_t probe = seed_mix(seed, 0xfeed + reports.size());
    GraphFn g = [fn, probe](Tape64& tape, std::span<const Var> v) { return contract(tape, fn(tape, v), probe); };
    reports.push_back(check_gradients(label, g, std::move(inputs), opts));
  }
};

GradInput data(const std::string& name, T64 v) { return {name, std::move(v), true}; }
GradInput weight(const std::string& name, T64 v) { return {name, std::move(v), false}; }

// ARC layer inputs in the order x0, kernels, embed, fuse, attend.
std::vector<GradInput> arc_inputs(Suite& s, std::size_t c_in, std::size_t c_out, std::size_t n, Shape x) {
  std::vector<GradInput> in{data("x0", s.rnd(x))};
  const std::size_t gw = c_out / n;
  for (std::size_t i = 0; i < n; ++i) in.push_back(weight("kernel." + std::to_string(i), s.rnd({gw, c_in, 3, 3}, -0.5, 0.5)));
  in.push_back(weight("embed", s.rnd({c_in, c_in, 1, 1}, -0.5, 0.5)));
  for (std::size_t j = 0; j + 1 < n; ++j) in.push_back(weight("fuse." + std::to_string(j), s.rnd({c_in, gw, 1, 1}, -0.5, 0.5)));
  for (std::size_t j = 0; j + 1 < n; ++j)
    in.push_back(weight("attend." + std::to_string(j), s.rnd({c_in, gw, 1, 1}, -0.5, 0.5)));
  return in;
}

ArcLayerVars arc_vars(std::span<const Var> v, std::size_t n) {
  ArcLayerVars p;
  std::size_t i = 1;
  for (std::size_t k = 0; k < n; ++k) p.kernels.push_back(v[i++]);
  p.embed = v[i++];
  for (std::size_t j = 0; j + 1 < n; ++j) p.fuse.push_back(v[i++]);
  for (std::size_t j = 0; j + 1 < n; ++j) p.attend.push_back(v[i++]);
  return p;
}

std::string variant(const ArcConfig& c) { return to_string(c.interaction) + "," + to_string(c.aggregation); }

}  // namespace

std::vector<GradReport> gradcheck_primitives(const GradCheckOptions& opts, std::uint64_t seed) {
  Suite s{opts, seed, {}};
  using PA = kernels::PoolAxes;

  s.run("conv2d", {data("x", s.rnd({2, 2, 4, 4})), weight("k", s.rnd({3, 2, 3, 3})), weight("bias", s.rnd({3, 1, 1, 1}))},
        [](Tape64& t, std::span<const Var> v) { return ag::conv2d(t, v[0], v[1], 1, v[2]); });
  s.run("conv2d_stride2", {data("x", s.rnd({2, 2, 4, 4})), weight("k", s.rnd({2, 2, 3, 3}))},
        [](Tape64& t, std::span<const Var> v) { return ag::conv2d(t, v[0], v[1], 2); });
  s.run("conv2d_1x1", {data("x", s.rnd({3, 2, 3, 3})), weight("k", s.rnd({4, 3, 1, 1}))},
        [](Tape64& t, std::span<const Var> v) { return ag::conv2d(t, v[0], v[1]); });
  s.run("project", {weight("m", s.rnd({3, 2, 1, 1})), data("x", s.rnd({2, 2, 3, 3}))},
        [](Tape64& t, std::span<const Var> v) { return ag::project(t, v[0], v[1]); });
  s.run("relu", {data("x", s.rnd({2, 2, 3, 3}))}, [](Tape64& t, std::span<const Var> v) { return ag::relu(t, v[0]); });
  s.run("sigmoid", {data("x", s.rnd({2, 2, 3, 3}, -3, 3))},
        [](Tape64& t, std::span<const Var> v) { return ag::sigmoid(t, v[0]); });
  s.run("add", {data("a", s.rnd({2, 2, 2, 2})), data("b", s.rnd({2, 2, 2, 2}))},
        [](Tape64& t, std::span<const Var> v) { return ag::add(t, v[0], v[1]); });
  s.run("mul", {data("a", s.rnd({2, 2, 2, 2})), data("b", s.rnd({2, 2, 2, 2}))},
        [](Tape64& t, std::span<const Var> v) { return ag::mul(t, v[0], v[1]); });
  s.run("broadcast_add", {data("a", s.rnd({3, 2, 1, 1})), data("b", s.rnd({3, 1, 3, 3}))},
        [](Tape64& t, std::span<const Var> v) { return ag::broadcast_add(t, v[0], v[1]); });
  s.run("broadcast_add_full", {data("a", s.rnd({2, 3, 3, 3})), data("b", s.rnd({2, 1, 1, 1}))},
        [](Tape64& t, std::span<const Var> v) { return ag::broadcast_add(t, v[0], v[1]); });
  s.run("broadcast_mul", {data("a", s.rnd({2, 3, 2, 2})), data("b", s.rnd({2, 3, 1, 1}))},
        [](Tape64& t, std::span<const Var> v) { return ag::broadcast_mul(t, v[0], v[1]); });
  s.run("pool_spatial_max", {data("x", s.rnd({2, 3, 3, 3}))},
        [](Tape64& t, std::span<const Var> v) { return ag::pool_max(t, v[0], PA::spatial); });
  s.run("pool_temporal_max", {data("x", s.rnd({2, 3, 3, 3}))},
        [](Tape64& t, std::span<const Var> v) { return ag::pool_max(t, v[0], PA::temporal); });
  s.run("pool_global_max", {data("x", s.rnd({2, 3, 3, 3}))},
        [](Tape64& t, std::span<const Var> v) { return ag::pool_max(t, v[0], PA::global); });
  s.run("max_pool2d", {data("x", s.rnd({2, 2, 4, 4}))},
        [](Tape64& t, std::span<const Var> v) { return ag::max_pool2d(t, v[0], 3, 2, 1); });
  s.run("concat_channels", {data("a", s.rnd({1, 2, 3, 3})), data("b", s.rnd({2, 2, 3, 3})), data("c", s.rnd({3, 2, 3, 3}))},
        [](Tape64& t, std::span<const Var> v) { return ag::concat_channels(t, v); });
  s.run("slice_channels", {data("x", s.rnd({4, 2, 2, 2}))},
        [](Tape64& t, std::span<const Var> v) { return ag::slice_channels(t, v[0], 1, 2); });
  s.run("pad_channels", {data("x", s.rnd({2, 2, 2, 2}))},
        [](Tape64& t, std::span<const Var> v) { return ag::pad_channels(t, v[0], 1, 1); });
  s.run("temporal_shift", {data("x", s.rnd({4, 4, 2, 2}))},
        [](Tape64& t, std::span<const Var> v) { return ag::temporal_shift(t, v[0], 4); });
  s.run("channel_affine",
        {data("x", s.rnd({3, 2, 2, 2})), weight("gamma", s.rnd({3, 1, 1, 1})), weight("beta", s.rnd({3, 1, 1, 1}))},
        [](Tape64& t, std::span<const Var> v) { return ag::channel_affine(t, v[0], v[1], v[2]); });
  s.run("global_avg", {data("x", s.rnd({3, 2, 3, 3}))},
        [](Tape64& t, std::span<const Var> v) { return ag::global_avg(t, v[0]); });
  s.run("dropout", {data("x", s.rnd({4, 2, 2, 2}))},
        [](Tape64& t, std::span<const Var> v) { return ag::dropout(t, v[0], 0.5, 11); });
  s.run("linear", {weight("w", s.rnd({3, 4, 1, 1})), weight("b", s.rnd({3, 1, 1, 1})), data("x", s.rnd({4, 1, 1, 1}))},
        [](Tape64& t, std::span<const Var> v) { return ag::linear(t, v[0], v[1], v[2]); });
  s.run("softmax_cross_entropy", {data("logits", s.rnd({4, 1, 1, 1}, -2, 2))},
        [](Tape64& t, std::span<const Var> v) { return ag::softmax_cross_entropy(t, v[0], 2); });
  s.run("sum", {data("x", s.rnd({2, 2, 2, 2}))}, [](Tape64& t, std::span<const Var> v) { return ag::sum(t, v[0]); });
  return std::move(s.reports);
}

std::vector<GradReport> gradcheck_composites(const GradCheckOptions& opts, std::uint64_t seed) {
  Suite s{opts, seed, {}};
  const Shape x{4, 3, 4, 4};

  std::vector<ArcConfig> variants;
  for (auto in : {Interaction::additive, Interaction::multiplicative})
    for (auto ag : {Aggregation::spatial, Aggregation::temporal, Aggregation::global, Aggregation::spatial_plus_temporal}) {
      ArcConfig c;
      c.n = 2;
      c.interaction = in;
      c.aggregation = ag;
      variants.push_back(c);
    }

  for (const auto& cfg : variants) {
    s.run("aru[" + variant(cfg) + "]", arc_inputs(s, 4, 4, 2, x), [cfg](Tape64& t, std::span<const Var> v) {
      const auto p = arc_vars(v, 2);
      const Var y1 = ag::conv2d(t, v[0], p.kernels[0]);
      const Var gen[] = {y1};
      return ag::aru(t, v[0], gen, p, 2, cfg);
    });
  }
  for (const auto& cfg : variants) {
    s.run("arc_layer[" + variant(cfg) + ",n=2]", arc_inputs(s, 4, 4, 2, x),
          [cfg](Tape64& t, std::span<const Var> v) { return ag::arc_layer(t, v[0], arc_vars(v, 2), cfg); });
  }
  {
    ArcConfig cfg;
    cfg.n = 4;
    s.run("arc_layer[" + variant(cfg) + ",n=4]", arc_inputs(s, 4, 4, 4, x),
          [cfg](Tape64& t, std::span<const Var> v) { return ag::arc_layer(t, v[0], arc_vars(v, 4), cfg); });
    cfg.interaction = Interaction::multiplicative;
    s.run("arc_layer[" + variant(cfg) + ",n=4]", arc_inputs(s, 4, 4, 4, x),
          [cfg](Tape64& t, std::span<const Var> v) { return ag::arc_layer(t, v[0], arc_vars(v, 4), cfg); });
    cfg = ArcConfig{};
    cfg.n = 2;
    s.run("arc_layer[c_in=2,c_out=4]", arc_inputs(s, 2, 4, 2, {2, 3, 4, 4}),
          [cfg](Tape64& t, std::span<const Var> v) { return ag::arc_layer(t, v[0], arc_vars(v, 2), cfg); });
  }

  s.run("temporal_shift+conv", {data("x", s.rnd({4, 4, 3, 3})), weight("k", s.rnd({4, 4, 3, 3}))},
        [](Tape64& t, std::span<const Var> v) { return ag::conv2d(t, ag::temporal_shift(t, v[0], 4), v[1]); });
  s.run("res2net_block",
        {data("x", s.rnd({4, 2, 4, 4})), weight("k.0", s.rnd({2, 2, 3, 3})), weight("k.1", s.rnd({2, 2, 3, 3}))},
        [](Tape64& t, std::span<const Var> v) { return ag::res2net_block(t, v[0], v.subspan(1)); });
  s.run("arc_reduction",
        {data("x", s.rnd({4, 2, 4, 4})), weight("k.0", s.rnd({2, 4, 3, 3})), weight("k.1", s.rnd({2, 4, 3, 3}))},
        [](Tape64& t, std::span<const Var> v) { return ag::arc_reduction(t, v[0], v.subspan(1)); });
  return std::move(s.reports);
}

ModelConfig gradcheck_model_config() {
  ModelConfig c;
  c.name = "gradcheck";
  c.stage_widths = {4, 4};
  c.blocks_per_stage = {1, 1};
  c.frames = 4;
  c.height = c.width = 4;
  c.input_channels = 2;
  c.num_classes = 3;
  c.stem = {3, 1, false};
  c.tsm_fold_div = 4;
  c.arc.n = 2;
  c.augmented_stages = {"res2", "res3"};
  return c;
}

std::vector<GradReport> gradcheck_network(const GradCheckOptions& opts, std::uint64_t seed) {
  std::vector<GradReport> reports;
  const ModelConfig cfg = gradcheck_model_config();
  Model<double> model = build_model<double>(cfg, seed);
  // Non-zero ARU matrices and norms so every path carries gradient.
  std::mt19937_64 rng(seed_mix(seed, 0xa5));
  for (auto& p : model.parameters()) {
    const auto& n = p.name;
    if (n.find(".fuse.") != std::string::npos || n.find(".attend.") != std::string::npos || n.ends_with(".embed"))
      fill_uniform(p.value, rng, -0.3, 0.3);
    else if (n.ends_with(".beta") || n == "head.bias")
      fill_uniform(p.value, rng, -0.1, 0.1);
    else if (n == "head.weight")
      fill_uniform(p.value, rng, -0.5, 0.5);
  }
  const std::size_t nparams = model.parameters().size();
  auto params_as_inputs = [&](const std::vector<std::size_t>& which) {
    std::vector<GradInput> in;
    for (auto i : which) in.push_back(weight(model.parameters()[i].name, model.param(i)));
    return in;
  };

  // Each residual block on its own, with the parameters it touches.
  for (std::size_t bi = 0; bi < model.blocks().size(); ++bi) {
    const ResidualBlock& block = model.blocks()[bi];
    std::vector<std::size_t> used;
    auto collect = [&](const ConvLayer& l) {
      for (auto i : {l.weight, l.embed, l.gamma, l.beta})
        if (i != ConvLayer::npos) used.push_back(i);
      for (const auto* set : {&l.kernels, &l.fuse, &l.attend}) used.insert(used.end(), set->begin(), set->end());
    };
    for (const auto& l : block.convs) collect(l);
    if (block.shortcut) collect(*block.shortcut);
    const ConvLayer& first = block.convs.front();
    std::vector<GradInput> in{data("x", random_tensor<double>(Shape{first.c_in, cfg.frames, first.in_h, first.in_w},
                                                              seed_mix(seed, 0xb0 + bi), 0.0, 1.0))};
    auto rest = params_as_inputs(used);
    in.insert(in.end(), rest.begin(), rest.end());
    GraphFn g = [&model, &block, used, nparams, probe = seed_mix(seed, 0xc0 + bi)](Tape64& t, std::span<const Var> v) {
      std::vector<Var> pv(nparams);
      for (std::size_t k = 0; k < used.size(); ++k) pv[used[k]] = v[k + 1];
      return contract(t, model.block_forward(t, block, v[0], pv), probe);
    };
    const std::string label = "residual_block[" + first.name.substr(0, first.name.rfind('.')) + "]";
    reports.push_back(check_gradients(label, g, std::move(in), opts));
  }

  // Whole network: cross-entropy of every parameter and the clip.
  std::vector<std::size_t> all(nparams);
  for (std::size_t i = 0; i < nparams; ++i) all[i] = i;
  std::vector<GradInput> in{data("clip", random_tensor<double>(cfg.clip_shape(), seed_mix(seed, 0xd0), 0.0, 1.0))};
  auto rest = params_as_inputs(all);
  in.insert(in.end(), rest.begin(), rest.end());
  GraphFn g = [&model](Tape64& t, std::span<const Var> v) {
    ForwardOptions fo;
    fo.training = true;
    fo.dropout_seed = 3;
    return ag::softmax_cross_entropy(t, model.forward(t, v[0], v.subspan(1), fo), 1);
  };
  reports.push_back(check_gradients("tiny_network", g, std::move(in), opts));
  return reports;
}

std::vector<GradReport> gradcheck_suite(const std::string& preset, const GradCheckOptions& opts, std::uint64_t seed) {
  if (preset == "layer") {
    auto r = gradcheck_primitives(opts, seed);
    auto c = gradcheck_composites(opts, seed);
    r.insert(r.end(), c.begin(), c.end());
    return r;
  }
  if (preset == "tiny") return gradcheck_network(opts, seed);
  throw ConfigError("unknown gradcheck preset '" + preset + "' (expected tiny or layer)");
}

// ---------------------------------------------------------------------------------------------

ModelConfig equivalence_config(const std::string& model) {
  ModelConfig c = ModelConfig::preset(model);
  if (model != "tiny") {
    c.height = c.width = 32;
    c.frames = 4;
  }
  return c;
}

json EquivalenceReport::to_json() const {
  return {{"model", options.model},
          {"n", options.n},
          {"seed", options.seed},
          {"clips", options.clips},
          {"fault", options.fault},
          {"arc_layers", arc_layers},
          {"config", arc::to_json(config)},
          {"max_abs_diff_f32", max_diff_f32},
          {"max_abs_diff_f64", max_diff_f64},
          {"tolerance_f32", tol_f32},
          {"tolerance_f64", tol_f64},
          {"passed", passed()}};
}

namespace {

template <class S>
double max_logit_gap(const ModelConfig& base_cfg, const EquivalenceOptions& o, std::size_t* arc_layers) {
  const Model<S> baseline = build_model<S>(base_cfg, o.seed);
  ArcConfig arc = base_cfg.arc;
  arc.n = o.n;
  std::set<std::string> stages = o.stages;
  if (stages.empty())
    for (std::size_t i = 0; i < base_cfg.stage_widths.size(); ++i) stages.insert(ModelConfig::stage_name(i));
  Model<S> converted = convert_pretrained(baseline, arc, stages);
  std::size_t count = 0;
  const ConvLayer* first = nullptr;
  for (const ConvLayer* l : converted.conv_layers())
    if (l->arc) {
      ++count;
      if (!first) first = l;
    }
  if (arc_layers) *arc_layers = count;
  if (o.fault != 0) {
    if (!first) throw ConfigError("fault injection needs an ARC layer (n > 1)");
    converted.param(first->embed)[0] += static_cast<S>(o.fault);
  }

  std::vector<double> gaps(o.clips, 0.0);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < o.clips; ++i) {
    const auto clip = random_tensor<S>(base_cfg.clip_shape(), seed_mix(o.seed, i), 0.0, 1.0);
    const auto a = forward_classify(baseline, clip);
    const auto b = forward_classify(converted, clip);
    for (std::size_t k = 0; k < a.size(); ++k)
      gaps[i] = std::max(gaps[i], std::abs(static_cast<double>(a[k]) - static_cast<double>(b[k])));
  }
  return *std::max_element(gaps.begin(), gaps.end());
}

}  // namespace

EquivalenceReport run_equivalence(const EquivalenceOptions& opts) {
  if (opts.n == 0) throw ConfigError("n must be positive");
  if (opts.clips == 0) throw ConfigError("clips must be positive");
  EquivalenceReport r;
  r.options = opts;
  r.config = equivalence_config(opts.model);
  r.config.validate();
  r.max_diff_f32 = max_logit_gap<float>(r.config, opts, &r.arc_layers);
  r.max_diff_f64 = max_logit_gap<double>(r.config, opts, nullptr);
  return r;
}

// ---------------------------------------------------------------------------------------------

ModelConfig desk_model(const std::string& variant, std::size_t n) {
  ModelConfig c = ModelConfig::tiny();
  if (variant == "baseline") {
    c.tsm_fold_div.reset();
  } else if (variant == "arc") {
    c.arc.n = n;
    c.augmented_stages = default_arc_stages(c);
  } else if (variant != "tsm") {
    throw ConfigError("unknown desk variant '" + variant + "' (expected baseline, tsm or arc)");
  }
  return c;
}

SyntheticTask desk_train_task(std::uint64_t seed) {
  SyntheticTask t;
  t.seed = seed;
  t.samples_per_class = 400;
  return t;
}

SyntheticTask desk_val_task(std::uint64_t seed) {
  SyntheticTask t;
  t.seed = seed + 1;
  t.samples_per_class = 80;
  return t;
}

std::set<std::string> default_arc_stages(const ModelConfig& cfg) {
  std::set<std::string> s;
  const std::size_t first = cfg.stage_widths.size() > 1 ? 1 : 0;
  for (std::size_t i = first; i < cfg.stage_widths.size(); ++i) s.insert(ModelConfig::stage_name(i));
  return s;
}

}  // namespace arc
