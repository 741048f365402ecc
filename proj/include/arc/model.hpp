#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "arc/autodiff.hpp"
#include "arc/layers.hpp"
#include "json.hpp"

namespace arc {

enum class BlockKind { basic, bottleneck };

struct StemConfig {
  std::size_t kernel = 7;
  std::size_t stride = 2;
  bool max_pool = true;
  friend bool operator==(const StemConfig&, const StemConfig&) = default;
};

struct ModelConfig {
  std::string name = "custom";
  std::vector<std::size_t> stage_widths;
  std::vector<std::size_t> blocks_per_stage;
  BlockKind block_kind = BlockKind::basic;
  std::size_t frames = 8;
  std::size_t height = 224;
  std::size_t width = 224;
  std::size_t input_channels = 3;
  std::size_t num_classes = 174;
  StemConfig stem;
  ArcConfig arc;
  /// Stage names res2, res3, ... (res2 is the first stage after the stem).
  std::set<std::string> augmented_stages;
  std::optional<std::size_t> tsm_fold_div;
  double dropout_rate = 0.5;

  static ModelConfig resnet18();
  static ModelConfig resnet50();
  /// Two stages of widths 8 and 16, two basic blocks each, 16x16 frames, T = 8.
  static ModelConfig tiny();
  static ModelConfig preset(const std::string& name);

  static std::string stage_name(std::size_t stage) { return "res" + std::to_string(stage + 2); }
  bool augmented(std::size_t stage) const { return augmented_stages.count(stage_name(stage)) > 0; }
  bool has_arc() const { return !augmented_stages.empty(); }
  std::size_t expansion() const { return block_kind == BlockKind::bottleneck ? 4 : 1; }
  Shape clip_shape() const { return Shape{input_channels, frames, height, width}; }

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ArcConfig& cfg);
ArcConfig arc_config_from_json(const nlohmann::json& j, ArcConfig base = {});
nlohmann::json to_json(const ModelConfig& cfg);
/// Fields missing from `j` keep their value in `base`.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base);
std::set<std::string> parse_stage_list(const std::string& csv);

/// One convolution + per-channel affine normalisation, optionally ARC-wrapped.
struct ConvLayer {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::string name;
  std::size_t c_in = 0, c_out = 0, kernel = 3, stride = 1;
  std::size_t stage = npos;  // npos for the stem
  bool arc = false;
  std::size_t weight = npos;  // plain kernel bank
  std::vector<std::size_t> kernels, fuse, attend;
  std::size_t embed = npos;
  std::size_t gamma = npos, beta = npos;
  std::size_t in_h = 0, in_w = 0, out_h = 0, out_w = 0;
};

/// Output extent of a same-padded convolution or pooling window.
constexpr std::size_t window_out(std::size_t in, std::size_t k, std::size_t stride) {
  return (in + 2 * (k / 2) - k) / stride + 1;
}

struct ResidualBlock {
  std::vector<ConvLayer> convs;
  std::optional<ConvLayer> shortcut;
  bool shift = false;
};

template <class S>
struct NamedTensor {
  std::string name;
  Tensor<S> value;
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
  /// Overrides the configured dropout rate when non-negative.
  double dropout_rate = -1;
  /// Assert evolving ARC states are non-negative, finite and input-shaped (throws InvariantError).
  bool check_invariants = false;
};

template <class S>
class Model {
 public:
  const ModelConfig& config() const noexcept { return cfg_; }
  const ConvLayer& stem() const noexcept { return stem_; }
  const std::vector<ResidualBlock>& blocks() const noexcept { return blocks_; }
  std::vector<const ConvLayer*> conv_layers() const;

  std::vector<NamedTensor<S>>& parameters() noexcept { return params_; }
  const std::vector<NamedTensor<S>>& parameters() const noexcept { return params_; }
  std::size_t head_weight() const noexcept { return head_w_; }
  std::size_t head_bias() const noexcept { return head_b_; }
  Tensor<S>& param(std::size_t i) { return params_.at(i).value; }
  const Tensor<S>& param(std::size_t i) const { return params_.at(i).value; }
  /// Throws ConfigError when absent.
  std::size_t index_of(const std::string& name) const;
  /// Sum of stored parameter elements.
  std::size_t parameter_count() const;

  ArcLayerParams<S> arc_params(const ConvLayer& layer) const;
  KernelStack<S> merged_kernel(const ConvLayer& layer) const;

  std::vector<Var> bind(Tape<S>& tape, bool requires_grad) const;
  Var forward(Tape<S>& tape, Var clip, std::span<const Var> params, const ForwardOptions& opts = {}) const;
  /// One residual block: optional temporal shift, conv units, shortcut, outer ReLU.
  Var block_forward(Tape<S>& tape, const ResidualBlock& block, Var x, std::span<const Var> params,
                    const ForwardOptions& opts = {}) const;

  /// Allocate a zero-valued model with the layout of `cfg`.
  static Model layout(const ModelConfig& cfg);

 private:
  std::size_t add_param(const std::string& name, Shape shape);
  ConvLayer make_conv(const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t stride,
                      std::size_t stage, bool arc, std::size_t& h, std::size_t& w);
  Var conv_unit(Tape<S>& tape, const ConvLayer& layer, Var x, std::span<const Var> pv, bool check_invariants) const;

  ModelConfig cfg_;
  ConvLayer stem_;
  std::vector<ResidualBlock> blocks_;
  std::vector<NamedTensor<S>> params_;
  std::map<std::string, std::size_t> by_name_;
  std::size_t head_w_ = ConvLayer::npos, head_b_ = ConvLayer::npos;
};

/// Deterministic initialisation: He-normal kernels (fan-in), unit/zero normalisation, small
/// normal head, zero ARU matrices. ARC models are the conversion of the same-seed baseline.
template <class S>
Model<S> build_model(const ModelConfig& cfg, std::uint64_t seed);

/// Copy every baseline parameter into an ARC-augmented layout; 3x3 stride-1 convolutions in
/// `stages` are partitioned into n kernel groups and their ARU matrices start at zero.
template <class S>
Model<S> convert_pretrained(const Model<S>& baseline, const ArcConfig& arc, const std::set<std::string>& stages);

template <class S>
std::vector<S> forward_classify(const Model<S>& model, const Tensor<S>& clip);

// Checkpoint files: "ARCK", u32 version, u32 header length, JSON header, ARCT tensor records.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  ModelConfig config;
  std::uint64_t seed = 0;
  nlohmann::json extra;
  std::vector<NamedTensor<float>> tensors;
  std::vector<NamedTensor<float>> optimizer;
};

template <class S>
void save_checkpoint(const std::filesystem::path& path, const Model<S>& model, std::uint64_t seed,
                     const std::vector<NamedTensor<S>>* optimizer = nullptr, const nlohmann::json& extra = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Copy checkpoint tensors into `model`; a name/shape mismatch throws ConfigError listing every difference.
template <class S>
void load_into(Model<S>& model, const Checkpoint& ck);

}  // namespace arc
