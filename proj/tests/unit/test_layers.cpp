#include <random>

#include "arc/analyzer.hpp"
#include "arc/layers.hpp"
#include "doctest.h"
#include "reference.hpp"

using namespace arc;
using T64 = Tensor<double>;

namespace {

ArcConfig config(std::size_t n, Interaction in = Interaction::additive,
                 Aggregation ag = Aggregation::spatial_plus_temporal) {
  ArcConfig c;
  c.n = n;
  c.interaction = in;
  c.aggregation = ag;
  return c;
}

ArcLayerParams<double> random_params(std::size_t c_in, std::size_t c_out, const ArcConfig& cfg, std::uint64_t seed,
                                     double aru_scale = 0.3) {
  std::mt19937_64 rng(seed);
  KernelStack<double> k(c_out, c_in, 3);
  fill_normal(k.tensor(), rng, 0.3);
  auto p = ArcLayerParams<double>::from_feedforward(k, cfg);
  if (aru_scale > 0) {
    if (cfg.n > 1) fill_uniform(p.embed.tensor(), rng, -aru_scale, aru_scale);
    for (auto* set : {&p.fuse, &p.attend})
      for (auto& m : *set) fill_uniform(m.tensor(), rng, -aru_scale, aru_scale);
  }
  return p;
}

const Aggregation kAggs[] = {Aggregation::spatial, Aggregation::temporal, Aggregation::global,
                             Aggregation::spatial_plus_temporal};

}  // namespace

TEST_CASE("config parsing and validation") {
  CHECK(parse_aggregation("S+T") == Aggregation::spatial_plus_temporal);
  CHECK(parse_aggregation("st") == Aggregation::global);
  CHECK(parse_interaction("multiplicative") == Interaction::multiplicative);
  CHECK_THROWS_AS(parse_aggregation("x"), ConfigError);
  CHECK_THROWS_AS(config(0).validate(), ConfigError);
  CHECK_THROWS_AS(config(3).check_width(8), ConfigError);
  CHECK_NOTHROW(config(4).check_width(8));
}

TEST_CASE("kernel groups partition the feed-forward bank") {
  std::mt19937_64 rng(1);
  KernelStack<double> k(8, 4, 3);
  fill_normal(k.tensor(), rng);
  for (std::size_t n : {1u, 2u, 4u, 8u}) {
    const auto p = ArcLayerParams<double>::from_feedforward(k, config(n));
    CHECK(p.n() == n);
    CHECK(p.group_width() == 8 / n);
    CHECK(p.merged_kernels().tensor() == k.tensor());
    CHECK(p.fuse.size() == n - 1);
    CHECK(p.attend.size() == n - 1);
    for (const auto& m : p.fuse)
      for (double v : m.tensor().span()) CHECK(v == 0.0);
  }
  CHECK_THROWS_AS(ArcLayerParams<double>::from_feedforward(k, config(3)), ConfigError);
}

TEST_CASE("stored parameters match the exact count") {
  for (std::size_t n : {1u, 2u, 4u}) {
    const auto p = random_params(8, 8, config(n), n);
    LayerCostSpec s;
    s.C_in = s.C_out = 8;
    s.n = n;
    s.arc_enabled = true;
    CHECK(p.parameter_count() == params_exact(s).total());
  }
}

TEST_CASE("zero-initialised additive ARU reproduces the plain convolution") {
  std::uint64_t seed = 100;
  for (std::size_t c_in : {2u, 4u, 8u})
    for (std::size_t c_out : {2u, 4u, 8u})
      for (std::size_t n : {1u, 2u, 4u})
        for (std::size_t t : {1u, 2u, 4u})
          for (std::size_t hw : {2u, 4u})
            for (auto ag : kAggs) {
              if (c_out % n) continue;
              const auto cfg = config(n, Interaction::additive, ag);
              const auto p = random_params(c_in, c_out, cfg, ++seed, 0.0);
              const auto x = random_tensor<double>(Shape{c_in, t, hw, hw}, ++seed, 0.0, 2.0);  // post-ReLU input
              CHECK(max_abs_diff(arc_layer_forward(x, p, cfg), feedforward_conv(x, p.merged_kernels())) <= 1e-12);
            }
}

TEST_CASE("zero-initialised updater returns the rectified input") {
  const auto cfg = config(2);
  const auto p = random_params(4, 4, cfg, 1, 0.0);
  const auto pos = random_tensor<double>(Shape{4, 2, 3, 3}, 2, 0.0, 1.0);
  const auto y1 = feedforward_conv(pos, p.kernels[0]);
  CHECK(aru(pos, {y1}, p, 2, cfg) == pos);
  const auto sgn = random_tensor<double>(Shape{4, 2, 3, 3}, 3);
  CHECK(aru(sgn, {y1}, p, 2, cfg) == relu(sgn));
}

TEST_CASE("multiplicative mode is excluded from the zero-init equivalence") {
  // The gate sigmoid(0) = 1/2 halves the state, so groups after the first differ.
  const auto cfg = config(2, Interaction::multiplicative);
  const auto p = random_params(4, 4, cfg, 11, 0.0);
  const auto x = random_tensor<double>(Shape{4, 2, 3, 3}, 12, 0.0, 2.0);
  const auto parts = split_channels(arc_layer_forward(x, p, cfg), 2);
  const auto plain = split_channels(feedforward_conv(x, p.merged_kernels()), 2);
  CHECK(max_abs_diff(parts[0], plain[0]) <= 1e-12);
  CHECK(max_abs_diff(parts[1], plain[1]) > 1e-3);
  CHECK(max_abs_diff(aru(x, {plain[0]}, p, 2, cfg), reference::mul(x, T64(x.shape(), 0.5))) <= 1e-15);
}

TEST_CASE("n = 1 is the plain convolution for any input") {
  const auto p = random_params(4, 6, config(1), 3);
  const auto x = random_tensor<double>(Shape{4, 2, 4, 4}, 4);
  CHECK(max_abs_diff(arc_layer_forward(x, p, config(1)), reference::conv2d<double>(x, p.merged_kernels().tensor())) <= 1e-12);
}

TEST_CASE("signed inputs are rectified from the second group on") {
  // The updater ends in a ReLU, so equivalence needs a non-negative layer input.
  const auto cfg = config(2);
  const auto p = random_params(4, 4, cfg, 5, 0.0);
  const auto x = random_tensor<double>(Shape{4, 2, 4, 4}, 6);
  const auto y = arc_layer_forward(x, p, cfg);
  const auto parts = split_channels(y, 2);
  const auto plain = split_channels(feedforward_conv(x, p.merged_kernels()), 2);
  CHECK(max_abs_diff(parts[0], plain[0]) <= 1e-12);
  CHECK(max_abs_diff(parts[1], reference::conv2d<double>(relu(x), p.kernels[1].tensor())) <= 1e-12);
}

TEST_CASE("evolving states are non-negative, finite and input-shaped") {
  for (auto in : {Interaction::additive, Interaction::multiplicative}) {
    for (auto ag : kAggs) {
      const auto cfg = config(4, in, ag);
      const auto p = random_params(4, 8, cfg, 7, 1.0);
      const auto x = random_tensor<double>(Shape{4, 3, 4, 4}, 8, -2, 2);
      Tape<double> tape(false);
      const auto vars = bind(tape, p, false);
      std::size_t seen = 0;
      StateObserver<double> watch = [&](std::size_t step, const T64& z) {
        ++seen;
        CHECK(step >= 2);
        CHECK(z.shape() == x.shape());
        CHECK(z.all_finite());
        for (double v : z.span()) CHECK(v >= 0.0);
      };
      const Var y = ag::arc_layer(tape, tape.borrow(x, false), vars, cfg, watch);
      CHECK(seen == 3);
      CHECK(tape.shape(y) == Shape{8, 3, 4, 4});
    }
  }
}

TEST_CASE("additive updater matches a hand computation") {
  // One input channel, one output channel per group, one frame of 1x2.
  ArcConfig cfg = config(2, Interaction::additive, Aggregation::global);
  ArcLayerParams<double> p;
  p.kernels = {KernelStack<double>(T64(Shape{1, 1, 1, 1}, 2.0)), KernelStack<double>(T64(Shape{1, 1, 1, 1}, 1.0))};
  p.embed = ChannelMatrix<double>(T64(Shape{1, 1, 1, 1}, 0.5));
  p.fuse = {ChannelMatrix<double>(T64(Shape{1, 1, 1, 1}, -1.0))};
  p.attend = {ChannelMatrix<double>(T64(Shape{1, 1, 1, 1}, 0.25))};
  const T64 x(Shape{1, 1, 1, 2}, std::vector<double>{1.0, 3.0});
  // Y1 = 2x = {2, 6}; Z2 = relu(x + 0.5x - Y1 + 0.25 max(Y1)) = relu({1.5 - 2 + 1.5, 4.5 - 6 + 1.5}) = {1, 0}
  const auto z2 = aru(x, {feedforward_conv(x, p.kernels[0])}, p, 2, cfg);
  CHECK(z2.values() == std::vector<double>{1.0, 0.0});
  const auto y = arc_layer_forward(x, p, cfg);
  CHECK(y.values() == std::vector<double>{2.0, 6.0, 1.0, 0.0});
}

TEST_CASE("multiplicative updater gates by the attention") {
  ArcConfig cfg = config(2, Interaction::multiplicative, Aggregation::global);
  ArcLayerParams<double> p;
  p.kernels = {KernelStack<double>(T64(Shape{1, 1, 1, 1}, 1.0)), KernelStack<double>(T64(Shape{1, 1, 1, 1}, 1.0))};
  p.embed = ChannelMatrix<double>(T64(Shape{1, 1, 1, 1}, 0.0));
  p.fuse = {ChannelMatrix<double>(T64(Shape{1, 1, 1, 1}, 0.0))};
  p.attend = {ChannelMatrix<double>(T64(Shape{1, 1, 1, 1}, 0.0))};
  const T64 x(Shape{1, 1, 1, 2}, std::vector<double>{1.0, 3.0});
  // sigmoid(0) halves the state.
  const auto z2 = aru(x, {x}, p, 2, cfg);
  CHECK(z2.values() == std::vector<double>{0.5, 1.5});
}

TEST_CASE("invalid parameter sets are rejected") {
  auto p = random_params(4, 8, config(2), 9);
  p.embed = ChannelMatrix<double>(3, 3);
  CHECK_THROWS_AS(p.validate(), ShapeError);
  const auto q = random_params(4, 8, config(2), 9);
  CHECK_THROWS_AS(arc_layer_forward(random_tensor<double>(Shape{3, 1, 4, 4}, 1), q, config(2)), ShapeError);
  CHECK_THROWS_AS(arc_layer_forward(random_tensor<double>(Shape{4, 1, 4, 4}, 1), q, config(4)), ConfigError);
}

TEST_CASE("temporal shift hand example") {
  // C = 4, fold 1: channel 0 reads the next frame, channel 1 the previous one, 2 and 3 stay.
  T64 x(Shape{4, 3, 1, 1});
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t t = 0; t < 3; ++t) x(c, t, 0, 0) = 10.0 * c + t;
  const auto y = temporal_shift(x, 4);
  CHECK(y.values() == std::vector<double>{1, 2, 0, 0, 10, 11, 20, 21, 22, 30, 31, 32});
  CHECK(y == reference::temporal_shift(x, 4));
}

TEST_CASE("temporal shift conservation and adjointness") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 2 + rng() % 7, t = 1 + rng() % 5, h = 1 + rng() % 3, w = 1 + rng() % 3;
    const std::size_t div = 2 + rng() % (c - 1);
    const auto x = random_tensor<double>(Shape{c, t, h, w}, rng());
    const auto y = temporal_shift(x, div);
    const std::size_t fold = c / div;
    double lost = 0, sx = 0, sy = 0;
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t ti = 0; ti < t; ++ti)
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j) {
            sx += x(ci, ti, i, j);
            sy += y(ci, ti, i, j);
            if ((ci < fold && ti == 0) || (ci >= fold && ci < 2 * fold && ti == t - 1)) lost += x(ci, ti, i, j);
            if (ci >= 2 * fold) CHECK(y(ci, ti, i, j) == x(ci, ti, i, j));
          }
    CHECK(sy == doctest::Approx(sx - lost).epsilon(1e-12));
    // <shift(x), r> == <x, shift^T(r)>
    const auto r = random_tensor<double>(x.shape(), rng());
    const auto back = kernels::temporal_shift(r, div, -1);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      lhs += y[i] * r[i];
      rhs += x[i] * back[i];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
  CHECK_THROWS_AS(temporal_shift(random_tensor<double>(Shape{2, 2, 1, 1}, 1), 4), ConfigError);
  CHECK_THROWS_AS(temporal_shift(random_tensor<double>(Shape{4, 2, 1, 1}, 1), 1), ConfigError);
}

TEST_CASE("parameter-free updater reduces ARC to a Res2Net block") {
  std::mt19937_64 rng(31);
  for (std::size_t n : {2u, 3u, 4u}) {
    for (std::size_t width : {1u, 2u, 3u}) {
      for (std::size_t t : {1u, 3u}) {
        const std::size_t c = n * width;
        std::vector<KernelStack<double>> ks;
        for (std::size_t i = 0; i < n; ++i) {
          ks.emplace_back(width, width, 3);
          fill_normal(ks.back().tensor(), rng, 0.5);
        }
        const auto x = random_tensor<double>(Shape{c, t, 4, 5}, rng());
        const auto p = embed_res2net_kernels(ks);
        CHECK(max_abs_diff(arc_reduction_mode(x, p, config(n)), res2net_block(x, ks)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("Res2Net block against a direct computation") {
  std::mt19937_64 rng(41);
  std::vector<KernelStack<double>> ks(2, KernelStack<double>(2, 2, 3));
  for (auto& k : ks) fill_normal(k.tensor(), rng);
  const auto x = random_tensor<double>(Shape{4, 2, 3, 3}, 42);
  const auto xs = split_channels(x, 2);
  const auto y1 = reference::conv2d<double>(xs[0], ks[0].tensor());
  const auto y2 = reference::conv2d<double>(reference::add(xs[1], y1), ks[1].tensor());
  CHECK(max_abs_diff(res2net_block(x, ks), reference::concat_channels<double>({y1, y2})) <= 1e-12);
}
