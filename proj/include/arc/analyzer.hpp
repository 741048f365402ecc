#pragma once

// Cost model of an ARC-wrapped convolution. One multiply-add counts as one FLOP; normalisation,
// activations, pooling and element-wise sums are not counted.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "arc/layers.hpp"
#include "arc/model.hpp"
#include "json.hpp"

namespace arc {

/// H and W are the input extent; the output extent follows from K and stride (same padding).
struct LayerCostSpec {
  std::size_t K = 3, C_in = 1, C_out = 1, H = 1, W = 1, T = 1, n = 1;
  bool arc_enabled = false;
  std::size_t stride = 1;
  Aggregation aggregation = Aggregation::spatial_plus_temporal;

  void validate() const;
  std::size_t out_h() const { return window_out(H, K, stride); }
  std::size_t out_w() const { return window_out(W, K, stride); }
  /// Recursive steps actually executed (1 for plain layers).
  std::size_t steps() const { return arc_enabled ? n : 1; }
  /// Conditions under which the closed-form cost expressions describe the layer exactly.
  bool formula_applicable() const;
};

struct MemoryCost {
  std::uint64_t printed = 0;
  std::uint64_t corrected = 0;
};

/// K^2 C^2 HWT + C^2 HWT + C^2 (HWT + HW + T)(n-1)/n, or K^2 C^2 HWT when n = 1 (C = C_out, output extent).
std::uint64_t flops_arc_layer(const LayerCostSpec& spec);
/// K^2 C^2 + C^2 + (C^2/n)(n-1), or K^2 C^2 when n = 1.
std::uint64_t params_arc_layer(const LayerCostSpec& spec);
/// printed: 2C^2 HWT + (n-1) C^2 HWT + CHW + CT; corrected: C in place of C^2 in the feature-map terms.
MemoryCost peak_memory_arc_layer(const LayerCostSpec& spec);

/// Exact cost split by component: kernels, W_e, all W_f, all W_a.
struct CostBreakdown {
  std::uint64_t conv = 0, embed = 0, fuse = 0, attend = 0;
  std::uint64_t total() const { return conv + embed + fuse + attend; }
  nlohmann::json to_json() const;
};

/// Exact multiply-adds of the forward pass for any C_in, C_out, stride and aggregation.
CostBreakdown flops_exact(const LayerCostSpec& spec);
/// Exact stored elements; both the W_f and the W_a sets are counted.
CostBreakdown params_exact(const LayerCostSpec& spec);

/// Run the layer forward on seeded data and count the multiply-adds executed by the kernels.
std::uint64_t count_flops_instrumented(const LayerCostSpec& spec, std::uint64_t seed = 0);
/// Same for a whole model on a zero clip.
template <class S>
std::uint64_t count_flops_instrumented(const Model<S>& model);

/// Formula vs instrumented count for one spec; `report` itemises every term on a mismatch.
struct FormulaCheck {
  LayerCostSpec spec;
  std::uint64_t formula = 0;
  std::uint64_t counted = 0;
  CostBreakdown breakdown;
  bool applicable = false;
  bool matches = false;
  std::string report;
};
FormulaCheck check_flops_formula(const LayerCostSpec& spec, std::uint64_t seed = 0);

struct OverheadRow {
  std::string layer_id;
  std::string stage;
  LayerCostSpec spec;
  std::uint64_t flops_formula = 0, flops_counted = 0;
  std::uint64_t params_formula = 0, params_counted = 0;
  std::uint64_t mem_printed = 0, mem_corrected = 0;
};

struct OverheadReport {
  nlohmann::json config;
  std::vector<OverheadRow> rows;
  std::uint64_t total_flops_formula = 0, total_flops_counted = 0;
  std::uint64_t total_params_formula = 0, total_params_counted = 0;

  void write_csv(std::ostream& out) const;
  nlohmann::json to_json() const;
};

/// Per-layer and total costs of `cfg`; params_counted is the enumeration of the built model.
OverheadReport network_overhead(const ModelConfig& cfg);

}  // namespace arc
