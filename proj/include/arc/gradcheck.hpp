#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "arc/autodiff.hpp"
#include "json.hpp"

namespace arc {

/// |a - f| / max(|a|, |f|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every coordinate of x.
template <class S>
Tensor<S> finite_diff(const std::function<S(const Tensor<S>&)>& f, const Tensor<S>& x, double eps);

struct GradEntry {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0;
  double max_abs_error = 0;
  std::size_t worst_index = 0;
};

struct GradReport {
  std::string label;
  double eps = 0;
  double tolerance = 0;
  std::vector<GradEntry> entries;
  std::size_t nudges = 0;          // +nudge shifts applied to the data input
  std::size_t kink_crossings = 0;  // FD probes that changed the activation pattern (final attempt)
  double kink_margin = 0;
  bool passed = false;

  double max_rel_error() const;
  /// "label/input[index]" of the largest relative error.
  std::string worst() const;
  nlohmann::json to_json() const;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-4;
  double kink_threshold = 1e-3;
  double nudge = 0.05;
  int margin_retries = 20;
  int crossing_retries = 6;
};

struct GradInput {
  std::string name;
  Tensor<double> value;
  bool data = false;  // receives the kink-avoidance nudge
};

/// Builds a scalar-valued graph from the input variables.
using GraphFn = std::function<Var(Tape<double>&, std::span<const Var>)>;

/// Compare tape gradients against central differences for every coordinate of every input.
GradReport check_gradients(const std::string& label, const GraphFn& graph, std::vector<GradInput> inputs,
                           const GradCheckOptions& opts = {});

nlohmann::json to_json(const std::vector<GradReport>& reports);

}  // namespace arc
