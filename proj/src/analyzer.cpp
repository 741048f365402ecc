#include "arc/analyzer.hpp"

#include <ostream>
#include <random>
#include <sstream>

namespace arc {

using nlohmann::json;
using u64 = std::uint64_t;

void LayerCostSpec::validate() const {
  if (!K || !C_in || !C_out || !H || !W || !T || !n || !stride) throw ConfigError("layer cost spec fields must be positive");
  if (K % 2 == 0) throw ConfigError("kernel size must be odd");
  if (arc_enabled) {
    if (C_out % n) throw ConfigError("n = " + std::to_string(n) + " does not divide C_out = " + std::to_string(C_out));
    if (n > 1 && stride != 1) throw ConfigError("ARC layers must preserve the spatial extent (stride 1)");
  }
}

bool LayerCostSpec::formula_applicable() const {
  return C_in == C_out && stride == 1 && (steps() == 1 || aggregation == Aggregation::spatial_plus_temporal);
}

std::uint64_t flops_arc_layer(const LayerCostSpec& s) {
  const u64 K = s.K, C = s.C_out, H = s.out_h(), W = s.out_w(), T = s.T, n = s.steps();
  const u64 conv = K * K * C * C * H * W * T;
  if (n == 1) return conv;
  return conv + C * C * H * W * T + C * C * (H * W * T + H * W + T) * (n - 1) / n;
}

std::uint64_t params_arc_layer(const LayerCostSpec& s) {
  const u64 K = s.K, C = s.C_out, n = s.steps();
  if (n == 1) return K * K * C * C;
  return K * K * C * C + C * C + C * C * (n - 1) / n;
}

MemoryCost peak_memory_arc_layer(const LayerCostSpec& s) {
  const u64 C = s.C_out, H = s.out_h(), W = s.out_w(), T = s.T, n = s.steps();
  const u64 hwt = H * W * T, tail = C * H * W + C * T;
  return {2 * C * C * hwt + (n - 1) * C * C * hwt + tail, 2 * C * hwt + (n - 1) * C * hwt + tail};
}

json CostBreakdown::to_json() const {
  return {{"conv", conv}, {"embed", embed}, {"fuse", fuse}, {"attend", attend}, {"total", total()}};
}

CostBreakdown flops_exact(const LayerCostSpec& s) {
  const u64 K = s.K, ci = s.C_in, co = s.C_out, H = s.out_h(), W = s.out_w(), T = s.T, n = s.steps();
  CostBreakdown b;
  b.conv = K * K * ci * co * H * W * T;
  if (n == 1) return b;
  const u64 gw = co / n;
  b.embed = ci * ci * H * W * T;
  b.fuse = (n - 1) * ci * gw * H * W * T;
  u64 pooled = 0;
  switch (s.aggregation) {
    case Aggregation::spatial: pooled = T; break;
    case Aggregation::temporal: pooled = H * W; break;
    case Aggregation::global: pooled = 1; break;
    case Aggregation::spatial_plus_temporal: pooled = T + H * W; break;
  }
  b.attend = (n - 1) * ci * gw * pooled;
  return b;
}

CostBreakdown params_exact(const LayerCostSpec& s) {
  const u64 K = s.K, ci = s.C_in, co = s.C_out, n = s.steps();
  CostBreakdown b;
  b.conv = K * K * ci * co;
  if (n == 1) return b;
  b.embed = ci * ci;
  b.fuse = b.attend = (n - 1) * ci * (co / n);
  return b;
}

std::uint64_t count_flops_instrumented(const LayerCostSpec& s, std::uint64_t seed) {
  s.validate();
  std::mt19937_64 rng(seed);
  Tensor<double> x(Shape{s.C_in, s.T, s.H, s.W});
  fill_uniform(x, rng, 0.0, 1.0);
  KernelStack<double> k(s.C_out, s.C_in, s.K);
  fill_normal(k.tensor(), rng);
  FlopCounter counter;
  if (s.steps() == 1) {
    (void)kernels::conv2d<double>(x, k.tensor(), {}, s.stride);
    return counter.count();
  }
  ArcConfig cfg;
  cfg.n = s.n;
  cfg.aggregation = s.aggregation;
  auto p = ArcLayerParams<double>::from_feedforward(k, cfg);
  for (auto* set : {&p.fuse, &p.attend})
    for (auto& m : *set) fill_normal(m.tensor(), rng, 0.1);
  (void)arc_layer_forward(x, p, cfg);
  return counter.count();
}

template <class S>
std::uint64_t count_flops_instrumented(const Model<S>& model) {
  const Tensor<S> clip(model.config().clip_shape());
  FlopCounter counter;
  (void)forward_classify(model, clip);
  return counter.count();
}

template std::uint64_t count_flops_instrumented(const Model<float>&);
template std::uint64_t count_flops_instrumented(const Model<double>&);

FormulaCheck check_flops_formula(const LayerCostSpec& spec, std::uint64_t seed) {
  FormulaCheck c;
  c.spec = spec;
  c.formula = flops_arc_layer(spec);
  c.counted = count_flops_instrumented(spec, seed);
  c.breakdown = flops_exact(spec);
  c.applicable = spec.formula_applicable();
  c.matches = c.formula == c.counted;
  if (!c.matches) {
    const u64 K = spec.K, C = spec.C_out, H = spec.out_h(), W = spec.out_w(), T = spec.T, n = spec.steps();
    std::ostringstream os;
    os << "flops mismatch for K=" << K << " C_in=" << spec.C_in << " C_out=" << spec.C_out << " H=" << spec.H
       << " W=" << spec.W << " T=" << T << " n=" << spec.n << " stride=" << spec.stride
       << " agg=" << to_string(spec.aggregation) << (c.applicable ? "" : " (outside formula preconditions)") << "\n"
       << "  term      formula      counted\n"
       << "  conv   " << K * K * C * C * H * W * T << "  " << c.breakdown.conv << "\n";
    if (n > 1) {
      const u64 back = C * C * (H * W * T + H * W + T) * (n - 1) / n;
      os << "  embed  " << C * C * H * W * T << "  " << c.breakdown.embed << "\n"
         << "  fuse+attend  " << back << "  " << c.breakdown.fuse + c.breakdown.attend << " (fuse " << c.breakdown.fuse
         << ", attend " << c.breakdown.attend << ")\n";
    }
    os << "  total  " << c.formula << "  " << c.counted << " (exact closed form " << c.breakdown.total() << ")";
    c.report = os.str();
  }
  return c;
}

namespace {

OverheadRow make_row(const std::string& id, const std::string& stage, const LayerCostSpec& spec, u64 params_counted) {
  OverheadRow r;
  r.layer_id = id;
  r.stage = stage;
  r.spec = spec;
  r.flops_formula = flops_arc_layer(spec);
  r.flops_counted = flops_exact(spec).total();
  r.params_formula = params_arc_layer(spec);
  r.params_counted = params_counted;
  const MemoryCost m = peak_memory_arc_layer(spec);
  r.mem_printed = m.printed;
  r.mem_corrected = m.corrected;
  return r;
}

}  // namespace

OverheadReport network_overhead(const ModelConfig& cfg) {
  const Model<float> model = Model<float>::layout(cfg);
  OverheadReport rep;
  rep.config = to_json(cfg);
  for (const ConvLayer* l : model.conv_layers()) {
    LayerCostSpec s;
    s.K = l->kernel;
    s.C_in = l->c_in;
    s.C_out = l->c_out;
    s.H = l->in_h;
    s.W = l->in_w;
    s.T = cfg.frames;
    s.stride = l->stride;
    s.arc_enabled = l->arc;
    s.n = l->arc ? cfg.arc.n : 1;
    s.aggregation = cfg.arc.aggregation;
    u64 stored = 0;
    if (l->arc) {
      for (const auto* set : {&l->kernels, &l->fuse, &l->attend})
        for (auto i : *set) stored += model.param(i).size();
      stored += model.param(l->embed).size();
    } else {
      stored = model.param(l->weight).size();
    }
    const u64 norm = model.param(l->gamma).size() + model.param(l->beta).size();
    OverheadRow r = make_row(l->name, l->stage == ConvLayer::npos ? "stem" : ModelConfig::stage_name(l->stage), s, stored);
    rep.rows.push_back(r);
    rep.total_params_counted += norm;
    rep.total_params_formula += norm;
  }
  // Classifier: a 1x1 "convolution" over one position plus its bias.
  const auto& hw = model.param(model.head_weight());
  const auto& hb = model.param(model.head_bias());
  LayerCostSpec head;
  head.K = 1;
  head.C_in = hw.shape().t;
  head.C_out = hw.shape().c;
  OverheadRow hr = make_row("head", "head", head, hw.size());
  hr.flops_formula = hr.flops_counted = head.C_in * head.C_out;
  hr.params_formula = hr.params_counted = hw.size();
  rep.rows.push_back(hr);
  rep.total_params_counted += hb.size();
  rep.total_params_formula += hb.size();

  for (const auto& r : rep.rows) {
    rep.total_flops_formula += r.flops_formula;
    rep.total_flops_counted += r.flops_counted;
    rep.total_params_formula += r.params_formula;
    rep.total_params_counted += r.params_counted;
  }
  if (rep.total_params_counted != model.parameter_count())
    throw InvariantError("overhead enumeration " + std::to_string(rep.total_params_counted) + " != stored parameters " +
                         std::to_string(model.parameter_count()));
  return rep;
}

void OverheadReport::write_csv(std::ostream& out) const {
  out << "layer_id,stage,K,C_in,C_out,H,W,T,n,flops_formula,flops_counted,params_formula,params_counted,mem_printed,"
         "mem_corrected\n";
  for (const auto& r : rows) {
    const auto& s = r.spec;
    out << r.layer_id << ',' << r.stage << ',' << s.K << ',' << s.C_in << ',' << s.C_out << ',' << s.H << ',' << s.W << ','
        << s.T << ',' << s.steps() << ',' << r.flops_formula << ',' << r.flops_counted << ',' << r.params_formula << ','
        << r.params_counted << ',' << r.mem_printed << ',' << r.mem_corrected << '\n';
  }
}

json OverheadReport::to_json() const {
  json layers = json::array();
  for (const auto& r : rows) {
    const auto& s = r.spec;
    layers.push_back({{"layer_id", r.layer_id},
                      {"stage", r.stage},
                      {"K", s.K},
                      {"C_in", s.C_in},
                      {"C_out", s.C_out},
                      {"H", s.H},
                      {"W", s.W},
                      {"T", s.T},
                      {"n", s.steps()},
                      {"flops_formula", r.flops_formula},
                      {"flops_counted", r.flops_counted},
                      {"params_formula", r.params_formula},
                      {"params_counted", r.params_counted},
                      {"mem_printed", r.mem_printed},
                      {"mem_corrected", r.mem_corrected}});
  }
  return {{"config", config},
          {"layers", layers},
          {"totals",
           {{"flops_formula", total_flops_formula},
            {"flops_counted", total_flops_counted},
            {"params_formula", total_params_formula},
            {"params_counted", total_params_counted}}}};
}

}  // namespace arc
