#include "arc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace arc {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

template <class S>
Tensor<S> finite_diff(const std::function<S(const Tensor<S>&)>& f, const Tensor<S>& x, double eps) {
  if (!(eps > 0)) throw ConfigError("finite_diff: eps must be positive");
  Tensor<S> g(x.shape());
  Tensor<S> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const S orig = probe[i];
    probe[i] = orig + static_cast<S>(eps);
    const S up = f(probe);
    probe[i] = orig - static_cast<S>(eps);
    const S down = f(probe);
    probe[i] = orig;
    g[i] = static_cast<S>((up - down) / (2 * eps));
  }
  return g;
}

template Tensor<float> finite_diff(const std::function<float(const Tensor<float>&)>&, const Tensor<float>&, double);
template Tensor<double> finite_diff(const std::function<double(const Tensor<double>&)>&, const Tensor<double>&, double);

double GradReport::max_rel_error() const {
  double m = 0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

std::string GradReport::worst() const {
  const GradEntry* w = nullptr;
  for (const auto& e : entries)
    if (!w || e.max_rel_error > w->max_rel_error) w = &e;
  return w ? label + "/" + w->name + "[" + std::to_string(w->worst_index) + "]" : label;
}

nlohmann::json GradReport::to_json() const {
  nlohmann::json j;
  j["label"] = label;
  j["eps"] = eps;
  j["tolerance"] = tolerance;
  j["passed"] = passed;
  j["max_rel_error"] = max_rel_error();
  j["nudges"] = nudges;
  j["kink_crossings"] = kink_crossings;
  j["kink_margin"] = kink_margin;
  j["worst"] = worst();
  auto& params = j["parameters"] = nlohmann::json::array();
  for (const auto& e : entries)
    params.push_back({{"name", e.name},
                      {"coordinates", e.coordinates},
                      {"max_rel_error", e.max_rel_error},
                      {"max_abs_error", e.max_abs_error},
                      {"worst_index", e.worst_index}});
  return j;
}

nlohmann::json to_json(const std::vector<GradReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  bool ok = true;
  for (const auto& r : reports) {
    arr.push_back(r.to_json());
    ok = ok && r.passed;
  }
  return {{"passed", ok}, {"reports", arr}};
}

namespace {

struct Evaluation {
  double value;
  std::uint64_t signature;
  double margin;
};

Evaluation evaluate(const GraphFn& graph, const std::vector<GradInput>& inputs) {
  Tape<double> tape(false);
  tape.set_monitor(true);
  std::vector<Var> vars;
  for (const auto& in : inputs) vars.push_back(tape.borrow(in.value, false));
  const Var out = graph(tape, vars);
  if (tape.value(out).size() != 1) throw ShapeError("gradient check graph must produce a scalar");
  return {tape.value(out)[0], tape.pattern_signature(), tape.kink_margin()};
}

void nudge(std::vector<GradInput>& inputs, double amount) {
  bool any = std::any_of(inputs.begin(), inputs.end(), [](const GradInput& g) { return g.data; });
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (inputs[i].data || (!any && i == 0))
      for (auto& v : inputs[i].value.span()) v += amount;
}

}  // namespace

GradReport check_gradients(const std::string& label, const GraphFn& graph, std::vector<GradInput> inputs,
                           const GradCheckOptions& opts) {
  GradReport report;
  report.label = label;
  report.eps = opts.eps;
  report.tolerance = opts.tolerance;

  for (int margin_try = 0;; ++margin_try) {
    const Evaluation base = evaluate(graph, inputs);
    report.kink_margin = base.margin;
    if (base.margin >= opts.kink_threshold || margin_try >= opts.margin_retries) break;
    nudge(inputs, opts.nudge);
    ++report.nudges;
  }

  for (int attempt = 0;; ++attempt) {
    const Evaluation base = evaluate(graph, inputs);
    report.kink_margin = base.margin;

    Tape<double> tape(true);
    std::vector<Var> vars;
    for (const auto& in : inputs) vars.push_back(tape.borrow(in.value, true));
    const Var out = graph(tape, vars);
    tape.backward(out);

    report.entries.clear();
    report.kink_crossings = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const Tensor<double> analytic = tape.grad(vars[k]);
      GradEntry e;
      e.name = inputs[k].name;
      e.coordinates = analytic.size();
      Tensor<double>& x = inputs[k].value;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + opts.eps;
        const Evaluation up = evaluate(graph, inputs);
        x[i] = orig - opts.eps;
        const Evaluation down = evaluate(graph, inputs);
        x[i] = orig;
        if (up.signature != base.signature || down.signature != base.signature) ++report.kink_crossings;
        const double numeric = (up.value - down.value) / (2 * opts.eps);
        const double rel = relative_error(analytic[i], numeric);
        if (rel > e.max_rel_error) {
          e.max_rel_error = rel;
          e.worst_index = i;
        }
        e.max_abs_error = std::max(e.max_abs_error, std::abs(analytic[i] - numeric));
      }
      report.entries.push_back(e);
    }
    if (report.kink_crossings == 0 || attempt >= opts.crossing_retries) break;
    nudge(inputs, opts.nudge);
    ++report.nudges;
  }
  report.passed = report.max_rel_error() < opts.tolerance;
  return report;
}

}  // namespace arc
