#pragma once

// Canned experiments shared by the CLI and the acceptance binary.

#include <cstdint>
#include <string>
#include <vector>

#include "arc/gradcheck.hpp"
#include "arc/harness.hpp"
#include "arc/model.hpp"
#include "json.hpp"

namespace arc {

// ---------------------------------------------------------------------------------------------
// gradient checks (64-bit, every extent <= 4)

/// "layer": every differentiable primitive plus ARU / ARC layer / temporal shift / Res2Net composites.
/// "tiny": residual blocks and a whole tiny network (parameters and input).
std::vector<GradReport> gradcheck_suite(const std::string& preset, const GradCheckOptions& opts = {},
                                        std::uint64_t seed = 0);
std::vector<GradReport> gradcheck_primitives(const GradCheckOptions& opts, std::uint64_t seed);
std::vector<GradReport> gradcheck_composites(const GradCheckOptions& opts, std::uint64_t seed);
std::vector<GradReport> gradcheck_network(const GradCheckOptions& opts, std::uint64_t seed);

/// Two one-block stages of width 4 on 2x4x4x4 clips, TSM fold 4, ARC n = 2 on both stages.
ModelConfig gradcheck_model_config();

// ---------------------------------------------------------------------------------------------
// zero-init equivalence

struct EquivalenceOptions {
  std::string model = "tiny";
  std::size_t n = 4;
  std::uint64_t seed = 0;
  std::size_t clips = 50;
  /// Added to W_e[0][0] of the first ARC layer after conversion (0 = no fault).
  double fault = 0;
  /// Stages to augment; empty means every stage.
  std::set<std::string> stages;
};

struct EquivalenceReport {
  EquivalenceOptions options;
  ModelConfig config;
  std::size_t arc_layers = 0;
  double max_diff_f32 = 0, max_diff_f64 = 0;
  double tol_f32 = 1e-5, tol_f64 = 1e-12;
  bool passed() const { return max_diff_f32 <= tol_f32 && max_diff_f64 <= tol_f64; }
  nlohmann::json to_json() const;
};

/// Model used for the equivalence proof. resnet18 keeps its full architecture but runs on
/// 32x32 clips with T = 4 so fifty clips per precision stay within the time budget.
ModelConfig equivalence_config(const std::string& model);
EquivalenceReport run_equivalence(const EquivalenceOptions& opts);

// ---------------------------------------------------------------------------------------------
// desk-scale training

/// "baseline" (no shift, no ARC), "tsm", "arc" (TSM + ARC on the default stages).
ModelConfig desk_model(const std::string& variant, std::size_t n = 4);
/// Training split: 400 clips per class from `seed`; validation: 80 per class from seed + 1.
SyntheticTask desk_train_task(std::uint64_t seed = 7);
SyntheticTask desk_val_task(std::uint64_t seed = 7);
/// Stages augmented when none are given: every stage after the first (res3 onward).
std::set<std::string> default_arc_stages(const ModelConfig& cfg);

/// The class pair that differs only in temporal order.
inline const std::vector<std::size_t> kOrderPair = {0, 1};

}  // namespace arc
