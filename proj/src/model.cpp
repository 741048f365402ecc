#include "arc/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "arc/serialize.hpp"

namespace arc {

using nlohmann::json;

// ---------------------------------------------------------------------------------------------
// configuration

ModelConfig ModelConfig::resnet18() {
  ModelConfig c;
  c.name = "resnet18";
  c.stage_widths = {64, 128, 256, 512};
  c.blocks_per_stage = {2, 2, 2, 2};
  c.tsm_fold_div = 8;
  return c;
}

ModelConfig ModelConfig::resnet50() {
  ModelConfig c = resnet18();
  c.name = "resnet50";
  c.blocks_per_stage = {3, 4, 6, 3};
  c.block_kind = BlockKind::bottleneck;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.name = "tiny";
  c.stage_widths = {8, 16};
  c.blocks_per_stage = {2, 2};
  c.frames = 8;
  c.height = c.width = 16;
  c.input_channels = 1;
  c.num_classes = 5;
  c.stem = {3, 2, false};  // desk scale: no max-pool, one stride-2 conv
  c.tsm_fold_div = 8;
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "resnet18") return resnet18();
  if (name == "resnet50") return resnet50();
  if (name == "tiny") return tiny();
  throw ConfigError("unknown model preset '" + name + "' (expected tiny, resnet18, resnet50)");
}

void ModelConfig::validate() const {
  if (stage_widths.empty() || stage_widths.size() > 4)
    throw ConfigError("model needs between 1 and 4 stages, got " + std::to_string(stage_widths.size()));
  if (stage_widths.size() != blocks_per_stage.size())
    throw ConfigError("stage_widths and blocks_per_stage differ in length");
  for (std::size_t i = 0; i < stage_widths.size(); ++i)
    if (stage_widths[i] == 0 || blocks_per_stage[i] == 0) throw ConfigError("stage " + stage_name(i) + " is empty");
  if (frames == 0 || height == 0 || width == 0 || input_channels == 0 || num_classes == 0)
    throw ConfigError("frames, resolution, input channels and classes must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (stem.kernel == 0 || stem.kernel % 2 == 0 || stem.stride == 0) throw ConfigError("stem kernel must be odd, stride >= 1");
  if (tsm_fold_div && (*tsm_fold_div < 2 || *tsm_fold_div > stage_widths[0]))
    throw ConfigError("tsm_fold_div must lie in [2, " + std::to_string(stage_widths[0]) + "]");
  for (const auto& s : augmented_stages) {
    bool known = false;
    for (std::size_t i = 0; i < stage_widths.size(); ++i) known = known || s == stage_name(i);
    if (!known) throw ConfigError("unknown stage '" + s + "' for a " + std::to_string(stage_widths.size()) + "-stage model");
  }
  if (has_arc()) {
    arc.validate();
    for (std::size_t i = 0; i < stage_widths.size(); ++i)
      if (augmented(i)) arc.check_width(stage_widths[i]);
  }
  std::size_t h = window_out(height, stem.kernel, stem.stride), w = window_out(width, stem.kernel, stem.stride);
  if (stem.max_pool) h = window_out(h, 3, 2), w = window_out(w, 3, 2);
  for (std::size_t i = 1; i < stage_widths.size(); ++i) h = window_out(h, 3, 2), w = window_out(w, 3, 2);
  if (h == 0 || w == 0 || height < stem.kernel / 2 + 1) throw ConfigError("input resolution too small for the network depth");
}

json to_json(const ArcConfig& cfg) {
  return {{"n", cfg.n}, {"interaction", to_string(cfg.interaction)}, {"aggregation", to_string(cfg.aggregation)},
          {"head", "fc"}};
}

ArcConfig arc_config_from_json(const json& j, ArcConfig base) {
  try {
    if (j.contains("n")) base.n = j.at("n").get<std::size_t>();
    if (j.contains("interaction")) base.interaction = parse_interaction(j.at("interaction").get<std::string>());
    if (j.contains("aggregation")) base.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
    if (j.contains("head") && j.at("head").get<std::string>() != "fc")
      throw ConfigError("only the fc attention head is supported");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad arc config: ") + e.what());
  }
  return base;
}

json to_json(const ModelConfig& c) {
  json j = {{"name", c.name},
            {"stage_widths", c.stage_widths},
            {"blocks_per_stage", c.blocks_per_stage},
            {"block_kind", c.block_kind == BlockKind::basic ? "basic" : "bottleneck"},
            {"frames", c.frames},
            {"input_resolution", {c.height, c.width}},
            {"input_channels", c.input_channels},
            {"num_classes", c.num_classes},
            {"stem", {{"kernel", c.stem.kernel}, {"stride", c.stem.stride}, {"max_pool", c.stem.max_pool}}},
            {"arc", to_json(c.arc)},
            {"augmented_stages", c.augmented_stages},
            {"dropout_rate", c.dropout_rate}};
  j["tsm_fold_div"] = c.tsm_fold_div ? json(*c.tsm_fold_div) : json(nullptr);
  return j;
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  try {
    if (j.contains("name")) c.name = j.at("name").get<std::string>();
    if (j.contains("stage_widths")) c.stage_widths = j.at("stage_widths").get<std::vector<std::size_t>>();
    if (j.contains("blocks_per_stage")) c.blocks_per_stage = j.at("blocks_per_stage").get<std::vector<std::size_t>>();
    if (j.contains("block_kind")) {
      const auto k = j.at("block_kind").get<std::string>();
      if (k != "basic" && k != "bottleneck") throw ConfigError("block_kind must be basic or bottleneck, got " + k);
      c.block_kind = k == "basic" ? BlockKind::basic : BlockKind::bottleneck;
    }
    if (j.contains("frames")) c.frames = j.at("frames").get<std::size_t>();
    if (j.contains("input_resolution")) {
      const auto& r = j.at("input_resolution");
      if (r.is_array()) {
        c.height = r.at(0).get<std::size_t>();
        c.width = r.at(1).get<std::size_t>();
      } else {
        c.height = c.width = r.get<std::size_t>();
      }
    }
    if (j.contains("input_channels")) c.input_channels = j.at("input_channels").get<std::size_t>();
    if (j.contains("num_classes")) c.num_classes = j.at("num_classes").get<std::size_t>();
    if (j.contains("stem")) {
      const auto& s = j.at("stem");
      if (s.contains("kernel")) c.stem.kernel = s.at("kernel").get<std::size_t>();
      if (s.contains("stride")) c.stem.stride = s.at("stride").get<std::size_t>();
      if (s.contains("max_pool")) c.stem.max_pool = s.at("max_pool").get<bool>();
    }
    if (j.contains("arc")) c.arc = arc_config_from_json(j.at("arc"), c.arc);
    if (j.contains("augmented_stages")) c.augmented_stages = j.at("augmented_stages").get<std::set<std::string>>();
    if (j.contains("tsm_fold_div")) {
      const auto& f = j.at("tsm_fold_div");
      c.tsm_fold_div = f.is_null() ? std::nullopt : std::optional<std::size_t>(f.get<std::size_t>());
    }
    if (j.contains("dropout_rate")) c.dropout_rate = j.at("dropout_rate").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  return c;
}

std::set<std::string> parse_stage_list(const std::string& csv) {
  std::set<std::string> out;
  std::stringstream ss(csv);
  for (std::string item; std::getline(ss, item, ',');) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (item.empty() || item == "none") continue;
    if (item.size() != 4 || item.rfind("res", 0) != 0 || item[3] < '2' || item[3] > '5')
      throw ConfigError("unknown stage '" + item + "' (expected res2..res5)");
    out.insert(item);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// layout

template <class S>
std::size_t Model<S>::add_param(const std::string& name, Shape shape) {
  by_name_.emplace(name, params_.size());
  params_.push_back({name, Tensor<S>(shape)});
  return params_.size() - 1;
}

template <class S>
ConvLayer Model<S>::make_conv(const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t k,
                              std::size_t stride, std::size_t stage, bool arc, std::size_t& h, std::size_t& w) {
  ConvLayer l;
  l.name = name;
  l.c_in = c_in;
  l.c_out = c_out;
  l.kernel = k;
  l.stride = stride;
  l.stage = stage;
  // ARU feeds output groups back into the input space, so only shape-preserving 3x3 convs qualify.
  // n = 1 is the plain layer.
  l.arc = arc && cfg_.arc.n > 1 && k == 3 && stride == 1 && c_in == c_out;
  l.in_h = h;
  l.in_w = w;
  h = l.out_h = window_out(h, k, stride);
  w = l.out_w = window_out(w, k, stride);
  if (l.arc) {
    const std::size_t n = cfg_.arc.n, gw = c_out / n;
    for (std::size_t i = 0; i < n; ++i) l.kernels.push_back(add_param(name + ".kernel." + std::to_string(i), {gw, c_in, k, k}));
    l.embed = add_param(name + ".embed", {c_in, c_in, 1, 1});
    for (std::size_t j = 0; j + 1 < n; ++j) l.fuse.push_back(add_param(name + ".fuse." + std::to_string(j), {c_in, gw, 1, 1}));
    for (std::size_t j = 0; j + 1 < n; ++j)
      l.attend.push_back(add_param(name + ".attend." + std::to_string(j), {c_in, gw, 1, 1}));
  } else {
    l.weight = add_param(name + ".weight", {c_out, c_in, k, k});
  }
  l.gamma = add_param(name + ".norm.gamma", {c_out, 1, 1, 1});
  l.beta = add_param(name + ".norm.beta", {c_out, 1, 1, 1});
  return l;
}

template <class S>
Model<S> Model<S>::layout(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  std::size_t h = cfg.height, w = cfg.width;
  const std::size_t stem_width = cfg.stage_widths[0];
  m.stem_ = m.make_conv("stem", cfg.input_channels, stem_width, cfg.stem.kernel, cfg.stem.stride, ConvLayer::npos, false, h, w);
  if (cfg.stem.max_pool) h = window_out(h, 3, 2), w = window_out(w, 3, 2);

  std::size_t c = stem_width;
  const std::size_t e = cfg.expansion();
  for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
    const std::size_t width = cfg.stage_widths[s];
    const bool arc = cfg.augmented(s);
    for (std::size_t b = 0; b < cfg.blocks_per_stage[s]; ++b) {
      const std::string prefix = ModelConfig::stage_name(s) + "." + std::to_string(b) + ".";
      const std::size_t stride = (b == 0 && s > 0) ? 2 : 1;
      ResidualBlock block;
      block.shift = cfg.tsm_fold_div.has_value();
      const std::size_t h0 = h, w0 = w;
      if (cfg.block_kind == BlockKind::basic) {
        block.convs.push_back(m.make_conv(prefix + "conv1", c, width, 3, stride, s, arc, h, w));
        block.convs.push_back(m.make_conv(prefix + "conv2", width, width, 3, 1, s, arc, h, w));
      } else {
        block.convs.push_back(m.make_conv(prefix + "conv1", c, width, 1, 1, s, false, h, w));
        block.convs.push_back(m.make_conv(prefix + "conv2", width, width, 3, stride, s, arc, h, w));
        block.convs.push_back(m.make_conv(prefix + "conv3", width, width * e, 1, 1, s, false, h, w));
      }
      if (stride != 1 || c != width * e) {
        std::size_t hs = h0, ws = w0;
        block.shortcut = m.make_conv(prefix + "shortcut", c, width * e, 1, stride, s, false, hs, ws);
      }
      c = width * e;
      m.blocks_.push_back(std::move(block));
    }
  }
  m.head_w_ = m.add_param("head.weight", {cfg.num_classes, c, 1, 1});
  m.head_b_ = m.add_param("head.bias", {cfg.num_classes, 1, 1, 1});
  return m;
}

template <class S>
std::vector<const ConvLayer*> Model<S>::conv_layers() const {
  std::vector<const ConvLayer*> out{&stem_};
  for (const auto& b : blocks_) {
    for (const auto& c : b.convs) out.push_back(&c);
    if (b.shortcut) out.push_back(&*b.shortcut);
  }
  return out;
}

template <class S>
std::size_t Model<S>::index_of(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ConfigError("model has no parameter named '" + name + "'");
  return it->second;
}

template <class S>
std::size_t Model<S>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <class S>
ArcLayerParams<S> Model<S>::arc_params(const ConvLayer& l) const {
  if (!l.arc) throw ConfigError("layer " + l.name + " is not ARC-augmented");
  ArcLayerParams<S> p;
  for (auto i : l.kernels) p.kernels.emplace_back(param(i));
  p.embed = ChannelMatrix<S>(param(l.embed));
  for (auto i : l.fuse) p.fuse.emplace_back(param(i));
  for (auto i : l.attend) p.attend.emplace_back(param(i));
  return p;
}

template <class S>
KernelStack<S> Model<S>::merged_kernel(const ConvLayer& l) const {
  return l.arc ? arc_params(l).merged_kernels() : KernelStack<S>(param(l.weight));
}

// ---------------------------------------------------------------------------------------------
// forward

template <class S>
std::vector<Var> Model<S>::bind(Tape<S>& tape, bool requires_grad) const {
  std::vector<Var> v;
  v.reserve(params_.size());
  for (const auto& p : params_) v.push_back(tape.borrow(p.value, requires_grad));
  return v;
}

template <class S>
Var Model<S>::conv_unit(Tape<S>& tape, const ConvLayer& l, Var x, std::span<const Var> pv, bool check_invariants) const {
  Var y;
  if (l.arc) {
    ArcLayerVars v;
    for (auto i : l.kernels) v.kernels.push_back(pv[i]);
    v.embed = pv[l.embed];
    for (auto i : l.fuse) v.fuse.push_back(pv[i]);
    for (auto i : l.attend) v.attend.push_back(pv[i]);
    StateObserver<S> check;
    if (check_invariants) {
      const Shape expect = tape.shape(x);
      check = [&l, expect](std::size_t step, const Tensor<S>& z) {
        const std::string where = l.name + " step " + std::to_string(step);
        if (z.shape() != expect) throw InvariantError(where + ": evolving state " + z.shape().str() + " != input " + expect.str());
        for (S v : z.span())
          if (!(v >= S(0))) throw InvariantError(where + ": evolving state has a negative or non-finite entry");
      };
    }
    y = ag::arc_layer(tape, x, v, cfg_.arc, check);
  } else {
    y = ag::conv2d(tape, x, pv[l.weight], l.stride);
  }
  return ag::channel_affine(tape, y, pv[l.gamma], pv[l.beta]);
}

template <class S>
Var Model<S>::forward(Tape<S>& tape, Var clip, std::span<const Var> pv, const ForwardOptions& opts) const {
  if (tape.shape(clip) != cfg_.clip_shape())
    throw ShapeError("clip " + tape.shape(clip).str() + " does not match model input " + cfg_.clip_shape().str());
  if (pv.size() != params_.size()) throw ShapeError("parameter binding has the wrong length");
  Var x = ag::relu(tape, conv_unit(tape, stem_, clip, pv, opts.check_invariants));
  if (cfg_.stem.max_pool) x = ag::max_pool2d(tape, x, 3, 2, 1);
  for (const auto& b : blocks_) x = block_forward(tape, b, x, pv, opts);
  Var f = ag::global_avg(tape, x);
  const double rate = opts.dropout_rate >= 0 ? opts.dropout_rate : cfg_.dropout_rate;
  if (opts.training && rate > 0) f = ag::dropout(tape, f, rate, opts.dropout_seed);
  return ag::linear(tape, pv[head_w_], pv[head_b_], f);
}

template <class S>
Var Model<S>::block_forward(Tape<S>& tape, const ResidualBlock& b, Var x, std::span<const Var> pv,
                            const ForwardOptions& opts) const {
  Var h = b.shift ? ag::temporal_shift(tape, x, *cfg_.tsm_fold_div) : x;
  for (std::size_t i = 0; i < b.convs.size(); ++i) {
    h = conv_unit(tape, b.convs[i], h, pv, opts.check_invariants);
    if (i + 1 < b.convs.size()) h = ag::relu(tape, h);
  }
  const Var skip = b.shortcut ? conv_unit(tape, *b.shortcut, x, pv, opts.check_invariants) : x;
  return ag::relu(tape, ag::add(tape, h, skip));
}

template <class S>
std::vector<S> forward_classify(const Model<S>& model, const Tensor<S>& clip) {
  if (clip.shape() != model.config().clip_shape())
    throw ShapeError("clip " + clip.shape().str() + " does not match model input " + model.config().clip_shape().str());
  Tape<S> tape(false);
  const auto pv = model.bind(tape, false);
  const Var logits = model.forward(tape, tape.borrow(clip, false), pv);
  const auto& v = tape.value(logits).values();
  return {v.begin(), v.end()};
}

// ---------------------------------------------------------------------------------------------
// construction

template <class S>
Model<S> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelConfig plain = cfg;
  plain.augmented_stages.clear();
  Model<S> m = Model<S>::layout(plain);
  std::mt19937_64 rng(seed);
  for (const ConvLayer* l : m.conv_layers()) {
    Tensor<S>& k = m.param(l->weight);
    fill_normal(k, rng, std::sqrt(2.0 / static_cast<double>(l->c_in * l->kernel * l->kernel)));
    m.param(l->gamma).fill(S(1));
  }
  fill_normal(m.param(m.head_weight()), rng, 0.01);
  if (!cfg.has_arc()) return m;
  return convert_pretrained(m, cfg.arc, cfg.augmented_stages);
}

template <class S>
Model<S> convert_pretrained(const Model<S>& baseline, const ArcConfig& arc, const std::set<std::string>& stages) {
  if (baseline.config().has_arc()) throw ConfigError("convert_pretrained expects a plain baseline model");
  ModelConfig cfg = baseline.config();
  cfg.arc = arc;
  cfg.augmented_stages = stages;
  Model<S> m = Model<S>::layout(cfg);
  std::map<std::string, const Tensor<S>*> src;
  for (const auto& q : baseline.parameters()) src.emplace(q.name, &q.value);
  for (auto& p : m.parameters())
    if (auto it = src.find(p.name); it != src.end()) p.value = *it->second;
  for (const ConvLayer* l : m.conv_layers()) {
    if (!l->arc) continue;
    const KernelStack<S> k(baseline.param(baseline.index_of(l->name + ".weight")));
    const auto parts = ArcLayerParams<S>::from_feedforward(k, arc);
    for (std::size_t i = 0; i < l->kernels.size(); ++i) m.param(l->kernels[i]) = parts.kernels[i].tensor();
  }
  return m;
}

// ---------------------------------------------------------------------------------------------
// checkpoints

namespace {
constexpr char kMagic[4] = {'A', 'R', 'C', 'K'};

template <class S>
json describe(const std::vector<NamedTensor<S>>& ts) {
  json arr = json::array();
  for (const auto& t : ts) {
    const Shape& s = t.value.shape();
    arr.push_back({{"name", t.name}, {"shape", {s.c, s.t, s.h, s.w}}});
  }
  return arr;
}

std::vector<NamedTensor<float>> read_records(std::istream& in, const json& desc) {
  std::vector<NamedTensor<float>> out;
  for (const auto& d : desc) {
    auto t = read_tensor<float>(in);
    const auto dims = d.at("shape").get<std::vector<std::size_t>>();
    if (dims.size() != 4 || t.shape() != Shape{dims[0], dims[1], dims[2], dims[3]})
      throw FormatError("checkpoint record " + d.at("name").get<std::string>() + " disagrees with its header shape");
    out.push_back({d.at("name").get<std::string>(), std::move(t)});
  }
  return out;
}
}  // namespace

template <class S>
void save_checkpoint(const std::filesystem::path& path, const Model<S>& model, std::uint64_t seed,
                     const std::vector<NamedTensor<S>>* optimizer, const json& extra) {
  json header = {{"config", to_json(model.config())},
                 {"seed", seed},
                 {"extra", extra},
                 {"tensors", describe(model.parameters())},
                 {"optimizer", optimizer ? describe(*optimizer) : json::array()}};
  const std::string text = header.dump();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
    out.write(kMagic, 4);
    write_u32(out, kCheckpointVersion);
    write_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : model.parameters()) write_tensor(out, p.value);
    if (optimizer)
      for (const auto& p : *optimizer) write_tensor(out, p.value);
    if (!out.flush()) throw FormatError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4)) throw FormatError("truncated checkpoint (magic)");
  if (!std::equal(magic, magic + 4, kMagic)) throw FormatError("not a checkpoint file: bad magic");
  Checkpoint ck;
  ck.version = read_u32(in, "checkpoint version");
  if (ck.version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(ck.version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  const std::uint32_t len = read_u32(in, "checkpoint header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw FormatError("truncated checkpoint header");
  json header;
  try {
    header = json::parse(text);
    ck.config = model_config_from_json(header.at("config"), ModelConfig{});
    ck.seed = header.at("seed").get<std::uint64_t>();
    ck.extra = header.value("extra", json{});
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("corrupt checkpoint config: ") + e.what());
  }
  ck.tensors = read_records(in, header.at("tensors"));
  ck.optimizer = read_records(in, header.value("optimizer", json::array()));
  return ck;
}

template <class S>
void load_into(Model<S>& model, const Checkpoint& ck) {
  std::map<std::string, Shape> have;
  for (const auto& t : ck.tensors) have.emplace(t.name, t.value.shape());
  std::vector<std::string> diffs;
  for (const auto& p : model.parameters()) {
    auto it = have.find(p.name);
    if (it == have.end())
      diffs.push_back("missing " + p.name + " " + p.value.shape().str());
    else if (it->second != p.value.shape())
      diffs.push_back("shape " + p.name + ": checkpoint " + it->second.str() + " vs model " + p.value.shape().str());
  }
  std::set<std::string> wanted;
  for (const auto& p : model.parameters()) wanted.insert(p.name);
  for (const auto& t : ck.tensors)
    if (!wanted.count(t.name)) diffs.push_back("unexpected " + t.name + " " + t.value.shape().str());
  if (!diffs.empty()) {
    std::string msg = "checkpoint does not match model (" + std::to_string(diffs.size()) + " differences):";
    for (const auto& d : diffs) msg += "\n  " + d;
    throw ConfigError(msg);
  }
  for (const auto& t : ck.tensors) model.param(model.index_of(t.name)) = t.value.template cast<S>();
}

#define ARC_MODEL_INSTANTIATE(S)                                                                                    \
  template class Model<S>;                                                                                          \
  template Model<S> build_model(const ModelConfig&, std::uint64_t);                                                 \
  template Model<S> convert_pretrained(const Model<S>&, const ArcConfig&, const std::set<std::string>&);           \
  template std::vector<S> forward_classify(const Model<S>&, const Tensor<S>&);                                      \
  template void save_checkpoint(const std::filesystem::path&, const Model<S>&, std::uint64_t,                       \
                                const std::vector<NamedTensor<S>>*, const json&);                                   \
  template void load_into(Model<S>&, const Checkpoint&);

ARC_MODEL_INSTANTIATE(float)
ARC_MODEL_INSTANTIATE(double)

}  // namespace arc
