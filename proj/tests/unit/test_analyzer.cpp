#include <sstream>

#include "arc/analyzer.hpp"
#include "arc/experiments.hpp"
#include "doctest.h"

using namespace arc;

namespace {

LayerCostSpec spec(std::size_t K, std::size_t C, std::size_t H, std::size_t W, std::size_t T, std::size_t n) {
  LayerCostSpec s;
  s.K = K;
  s.C_in = s.C_out = C;
  s.H = H;
  s.W = W;
  s.T = T;
  s.n = n;
  s.arc_enabled = true;
  return s;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("closed forms on the worked layer") {
  const auto s = spec(3, 4, 2, 2, 2, 2);
  CHECK(flops_arc_layer(s) == 1392);
  CHECK(params_arc_layer(s) == 168);
  CHECK(params_exact(s).total() == 176);  // both W_f and W_a sets stored
  CHECK(peak_memory_arc_layer(s).printed == 408);
  CHECK(peak_memory_arc_layer(s).corrected == 120);
  const auto one = spec(3, 4, 2, 2, 2, 1);
  CHECK(flops_arc_layer(one) == 1152);
  CHECK(params_arc_layer(one) == 144);
  CHECK(peak_memory_arc_layer(one).printed == 280);
  auto plain = s;
  plain.arc_enabled = false;
  CHECK(flops_arc_layer(plain) == 1152);
  CHECK(count_flops_instrumented(plain) == 1152);
}

TEST_CASE("formula equals the instrumented count wherever it applies") {
  std::size_t applicable = 0;
  for (std::size_t K : {1u, 3u})
    for (std::size_t C : {2u, 4u, 8u})
      for (std::size_t n : {1u, 2u, 4u})
        for (std::size_t HW : {1u, 3u})
          for (std::size_t T : {1u, 2u}) {
            if (C % n) continue;
            const auto s = spec(K, C, HW, HW + 1, T, n);
            REQUIRE(s.formula_applicable());
            const auto c = check_flops_formula(s, K * 100 + C);
            INFO(c.report);
            CHECK(c.matches);
            CHECK(c.counted == flops_exact(s).total());
            ++applicable;
          }
  CHECK(applicable > 50);
}

TEST_CASE("mismatches outside the preconditions come with a breakdown") {
  LayerCostSpec s = spec(3, 4, 3, 3, 2, 2);
  s.C_out = 8;
  const auto c = check_flops_formula(s);
  CHECK_FALSE(c.applicable);
  CHECK_FALSE(c.matches);
  CHECK(c.counted == flops_exact(s).total());
  CHECK(c.report.find("conv") != std::string::npos);
  CHECK(c.report.find("fuse") != std::string::npos);
  CHECK(c.report.find("outside formula preconditions") != std::string::npos);

  // Single-axis pooling is cheaper than the S+T attention the formula assumes.
  auto t = spec(3, 4, 3, 3, 2, 2);
  t.aggregation = Aggregation::temporal;
  const auto ct = check_flops_formula(t);
  CHECK_FALSE(ct.matches);
  CHECK_FALSE(ct.report.empty());
  CHECK(ct.counted == flops_exact(t).total());
}

TEST_CASE("instrumented strided and widening layers match the exact form") {
  LayerCostSpec s = spec(3, 2, 5, 4, 2, 1);
  s.C_out = 6;
  s.stride = 2;
  s.arc_enabled = false;
  CHECK(count_flops_instrumented(s) == flops_exact(s).total());
  CHECK(flops_exact(s).conv == 9ull * 2 * 6 * 3 * 2 * 2);
}

TEST_CASE("whole-model instrumented count equals the per-layer sum") {
  for (const auto& cfg : {ModelConfig::tiny(), desk_model("arc")}) {
    const auto rep = network_overhead(cfg);
    const auto m = build_model<float>(cfg, 0);
    CHECK(count_flops_instrumented(m) == rep.total_flops_counted);
    CHECK(rep.total_params_counted == m.parameter_count());
  }
}

TEST_CASE("baseline network costs") {
  const auto r18 = network_overhead(ModelConfig::resnet18());
  CHECK(rel(double(r18.total_flops_counted), 14.6e9) < 0.02);
  CHECK(rel(double(r18.total_params_counted), 11.27e6) < 0.02);
  const auto r50 = network_overhead(ModelConfig::resnet50());
  CHECK(rel(double(r50.total_flops_counted), 33e9) < 0.02);
  CHECK(rel(double(r50.total_params_counted), 24.3e6) < 0.02);
}

TEST_CASE("ARC network costs and constancy in n") {
  auto cfg = ModelConfig::resnet18();
  cfg.augmented_stages = {"res3", "res4", "res5"};
  cfg.arc.n = 4;
  const auto r4 = network_overhead(cfg);
  CHECK(rel(double(r4.total_flops_counted), 17.2e9) < 0.10);
  CHECK(rel(double(r4.total_params_counted), 14.2e6) < 0.10);
  cfg.arc.n = 2;
  const auto r2 = network_overhead(cfg);
  CHECK(rel(double(r2.total_flops_counted), double(r4.total_flops_counted)) < 0.03);

  cfg.augmented_stages = {"res5"};
  cfg.arc.n = 4;
  const auto r5 = network_overhead(cfg);
  const auto base = network_overhead(ModelConfig::resnet18());
  std::uint64_t delta5 = 0, delta_other = 0;
  for (std::size_t i = 0; i < r5.rows.size(); ++i) {
    const auto d = r5.rows[i].params_counted - base.rows[i].params_counted;
    (r5.rows[i].stage == "res5" ? delta5 : delta_other) += d;
  }
  CHECK(delta5 > 0);
  CHECK(delta_other == 0);
  CHECK(rel(double(r5.total_params_counted), 13.49e6) < 0.10);
}

TEST_CASE("report serialisation") {
  const auto rep = network_overhead(desk_model("arc"));
  std::ostringstream csv;
  rep.write_csv(csv);
  const std::string text = csv.str();
  CHECK(text.rfind("layer_id,stage,K,C_in,C_out,H,W,T,n,flops_formula,flops_counted,params_formula,params_counted,"
                   "mem_printed,mem_corrected\n",
                   0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(rep.rows.size() + 1));
  const auto j = rep.to_json();
  CHECK(j["layers"].size() == rep.rows.size());
  CHECK(j["totals"]["params_counted"] == rep.total_params_counted);
  CHECK(j["config"]["name"] == "tiny");
}

TEST_CASE("invalid specs are rejected") {
  auto s = spec(3, 4, 2, 2, 2, 3);
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = spec(2, 4, 2, 2, 2, 2);
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = spec(3, 4, 0, 2, 2, 2);
  CHECK_THROWS_AS(count_flops_instrumented(s), ConfigError);
}
