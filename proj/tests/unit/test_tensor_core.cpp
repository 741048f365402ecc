#include <sstream>

#include "arc/kernels.hpp"
#include "arc/ops.hpp"
#include "arc/serialize.hpp"
#include "doctest.h"
#include "reference.hpp"

using namespace arc;
using T64 = Tensor<double>;

namespace {

T64 make(Shape s, std::vector<double> v) { return T64(s, std::move(v)); }

// Random shapes with every extent in [1, 5].
Shape random_shape(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(1, 5);
  return {d(rng), d(rng), d(rng), d(rng)};
}

}  // namespace

TEST_CASE("tensor construction checks length") {
  CHECK_THROWS_AS(T64(Shape{2, 1, 1, 1}, std::vector<double>{1.0}), ShapeError);
  T64 t(Shape{2, 3, 4, 5});
  CHECK(t.size() == 120);
  t(1, 2, 3, 4) = 7;
  CHECK(t[119] == 7);
  CHECK_THROWS_AS(KernelStack<double>(2, 2, 2), ShapeError);  // even kernel
  CHECK_THROWS_AS(ChannelMatrix<double>(T64(Shape{2, 2, 2, 1})), ShapeError);
}

TEST_CASE("conv2d small cases") {
  SUBCASE("zero kernel gives zeros") {
    T64 x(Shape{1, 1, 3, 3}, 1.0);
    KernelStack<double> k(1, 1, 3);
    const auto y = conv2d(x, k);
    CHECK(y.shape() == Shape{1, 1, 3, 3});
    for (double v : y.span()) CHECK(v == 0.0);
  }
  SUBCASE("scalar with bias") {
    T64 x(Shape{1, 1, 1, 1}, 5.0);
    KernelStack<double> k(T64(Shape{1, 1, 1, 1}, 2.0));
    const std::vector<double> bias{1.0};
    CHECK(conv2d(x, k, std::span<const double>(bias))[0] == 11.0);
  }
  SUBCASE("channel mismatch names both shapes") {
    T64 x(Shape{3, 1, 4, 4});
    KernelStack<double> k(2, 2, 3);
    try {
      (void)conv2d(x, k);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("(3,1,4,4)") != std::string::npos);
      CHECK(msg.find("(2,2,3,3)") != std::string::npos);
    }
  }
}

TEST_CASE("conv2d matches the loop oracle") {
  const auto x = random_tensor<double>(Shape{2, 2, 4, 4}, 11);
  const auto k = random_tensor<double>(Shape{3, 2, 3, 3}, 12);
  CHECK(max_abs_diff(kernels::conv2d<double>(x, k, {}, 1), reference::conv2d<double>(x, k)) <= 1e-12);

  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 40; ++trial) {
    Shape xs = random_shape(rng);
    const std::size_t co = 1 + rng() % 5, kk = (rng() % 2) ? 3 : 1, stride = 1 + rng() % 2;
    const auto xi = random_tensor<double>(xs, rng());
    const auto ki = random_tensor<double>(Shape{co, xs.c, kk, kk}, rng());
    const auto bias = random_tensor<double>(Shape{co, 1, 1, 1}, rng());
    CHECK(max_abs_diff(kernels::conv2d<double>(xi, ki, bias.span(), stride),
                       reference::conv2d<double>(xi, ki, bias.span(), stride)) <= 1e-12);
  }
}

TEST_CASE("conv2d is invariant to the thread count") {
  // Large enough to cross the parallel threshold.
  const auto x = random_tensor<double>(Shape{16, 4, 16, 16}, 3);
  const auto k = random_tensor<double>(Shape{16, 16, 3, 3}, 4);
  const auto y = kernels::conv2d<double>(x, k, {}, 1);
  CHECK(max_abs_diff(y, reference::conv2d<double>(x, k)) <= 1e-12);
  CHECK(y == kernels::conv2d<double>(x, k, {}, 1));
}

TEST_CASE("channel_project") {
  const auto x = random_tensor<double>(Shape{3, 1, 2, 2}, 21);
  CHECK(channel_project(ChannelMatrix<double>::identity(3), x) == x);
  const auto zero = channel_project(ChannelMatrix<double>(2, 3), x);
  for (double v : zero.span()) CHECK(v == 0.0);
  const auto m = random_tensor<double>(Shape{2, 3, 1, 1}, 22);
  CHECK(max_abs_diff(channel_project(ChannelMatrix<double>(m), x), reference::channel_project(m, x)) <= 1e-12);
  CHECK_THROWS_AS(kernels::project(m, random_tensor<double>(Shape{4, 1, 2, 2}, 1)), ShapeError);
}

TEST_CASE("relu and sigmoid") {
  const auto r = relu(make({3, 1, 1, 1}, {-1, 0, 2}));
  CHECK(r.values() == std::vector<double>{0, 0, 2});
  const auto x = random_tensor<double>(Shape{3, 2, 3, 3}, 31);
  CHECK(relu(relu(x)) == relu(x));
  CHECK(sigmoid(make({1, 1, 1, 1}, {0}))[0] == 0.5);
  const auto big = sigmoid(make({2, 1, 1, 1}, {-800, 800}));
  CHECK(big[0] == doctest::Approx(0.0));
  CHECK(big[1] == 1.0);
  CHECK(max_abs_diff(sigmoid(x), reference::sigmoid(x)) <= 1e-15);
}

TEST_CASE("max pools") {
  const auto q = make({1, 1, 2, 2}, {1, 3, 2, 0});
  CHECK(pool_spatial_max(q)[0] == 3);
  CHECK(pool_global_max(q)[0] == 3);
  const T64 c(Shape{2, 3, 2, 2}, 7.0);
  for (const auto& p : {pool_spatial_max(c), pool_temporal_max(c), pool_global_max(c)})
    for (double v : p.span()) CHECK(v == 7.0);
  CHECK(pool_spatial_max(c).shape() == Shape{2, 3, 1, 1});
  CHECK(pool_temporal_max(c).shape() == Shape{2, 1, 2, 2});
  CHECK(pool_global_max(c).shape() == Shape{2, 1, 1, 1});

  const auto x = random_tensor<double>(Shape{3, 2, 4, 4}, 41);
  CHECK(pool_spatial_max(x) == reference::pool_spatial_max(x));
  CHECK(pool_temporal_max(x) == reference::pool_temporal_max(x));
  CHECK(pool_global_max(x) == reference::pool_global_max(x));

  SUBCASE("ties resolve to the first index") {
    std::vector<std::uint32_t> idx;
    (void)kernels::pool_max(make({1, 1, 2, 2}, {5, 5, 1, 5}), kernels::PoolAxes::spatial, &idx);
    CHECK(idx == std::vector<std::uint32_t>{0});
  }
  SUBCASE("3x3 stride-2 window pool") {
    const auto y = random_tensor<double>(Shape{2, 2, 5, 6}, 42);
    CHECK(kernels::max_pool2d<double>(y, 3, 2, 1, nullptr) == reference::max_pool3x3_s2(y));
  }
}

TEST_CASE("broadcast_add") {
  const auto a = random_tensor<double>(Shape{2, 3, 1, 1}, 51);
  const auto b = random_tensor<double>(Shape{2, 1, 4, 4}, 52);
  const auto y = broadcast_add(a, b);
  CHECK(y.shape() == Shape{2, 3, 4, 4});
  CHECK(y(1, 2, 3, 1) == a(1, 2, 0, 0) + b(1, 0, 3, 1));
  CHECK(y == reference::broadcast_add(a, b));
  CHECK(broadcast_add(a, T64(Shape{2, 3, 4, 4})) == reference::broadcast_add(a, T64(Shape{2, 3, 4, 4})));
  const auto x = random_tensor<double>(Shape{2, 3, 4, 4}, 53);
  CHECK(broadcast_add(x, T64(Shape{1, 1, 1, 1})) == x);
  CHECK_THROWS_AS(broadcast_add(a, random_tensor<double>(Shape{3, 1, 1, 1}, 1)), ShapeError);

  std::mt19937_64 rng(54);
  for (int trial = 0; trial < 30; ++trial) {
    Shape full = random_shape(rng), sa = full, sb = full;
    for (std::size_t axis = 0; axis < 4; ++axis) {
      std::size_t* pa = axis == 0 ? &sa.c : axis == 1 ? &sa.t : axis == 2 ? &sa.h : &sa.w;
      std::size_t* pb = axis == 0 ? &sb.c : axis == 1 ? &sb.t : axis == 2 ? &sb.h : &sb.w;
      const auto r = rng() % 3;
      if (r == 1) *pa = 1;
      if (r == 2) *pb = 1;
    }
    const auto ra = random_tensor<double>(sa, rng()), rb = random_tensor<double>(sb, rng());
    CHECK(broadcast_add(ra, rb) == reference::broadcast_add(ra, rb));
  }
}

TEST_CASE("concat and split") {
  const auto x = random_tensor<double>(Shape{4, 2, 3, 3}, 61);
  CHECK(concat_channels(split_channels(x, 2)) == x);
  CHECK(concat_channels(std::vector<T64>{x}) == x);
  std::vector<T64> parts;
  for (std::size_t i = 0; i < 4; ++i) parts.push_back(random_tensor<double>(Shape{i + 1, 2, 3, 3}, 62 + i));
  const auto y = concat_channels(parts);
  CHECK(y.shape() == Shape{10, 2, 3, 3});
  CHECK(y == reference::concat_channels(parts));
  CHECK(y(3, 1, 2, 0) == parts[2](0, 1, 2, 0));  // channel 3 is the first channel of part 2
  CHECK_THROWS_AS(concat_channels(std::vector<T64>{x, random_tensor<double>(Shape{1, 2, 3, 2}, 1)}), ShapeError);
  CHECK_THROWS_AS(concat_channels(std::vector<T64>{}), ShapeError);
  CHECK_THROWS_AS(split_channels(x, 3), ConfigError);
}

TEST_CASE("primitives do not mutate their inputs") {
  const auto x = random_tensor<double>(Shape{4, 2, 3, 3}, 71);
  const auto copy = x;
  (void)relu(x);
  (void)sigmoid(x);
  (void)pool_spatial_max(x);
  (void)broadcast_add(x, x);
  (void)conv2d(x, KernelStack<double>(random_tensor<double>(Shape{2, 4, 3, 3}, 72)));
  (void)kernels::temporal_shift(x, 4, 1);
  CHECK(x == copy);
}

TEST_CASE("operations stay finite on finite input") {
  const auto x = random_tensor<double>(Shape{4, 2, 3, 3}, 81, -50, 50);
  CHECK(sigmoid(x).all_finite());
  CHECK(relu(x).all_finite());
  CHECK(conv2d(x, KernelStack<double>(random_tensor<double>(Shape{2, 4, 3, 3}, 82))).all_finite());
}

TEST_CASE("ARCT records") {
  const auto x = random_tensor<float>(Shape{2, 3, 4, 5}, 91);
  std::stringstream ss;
  write_tensor(ss, x);
  CHECK(ss.str().size() == 4 + 4 + 16 + 4 * x.size());
  CHECK(ss.str().substr(0, 4) == "ARCT");
  CHECK(read_tensor<float>(ss) == x);

  SUBCASE("lower rank is right-aligned") {
    std::stringstream r;
    r.write("ARCT", 4);
    write_u32(r, 2);
    write_u32(r, 2);
    write_u32(r, 3);
    const float v[6] = {1, 2, 3, 4, 5, 6};
    r.write(reinterpret_cast<const char*>(v), sizeof v);
    const auto t = read_tensor<float>(r);
    CHECK(t.shape() == Shape{1, 1, 2, 3});
    CHECK(t(0, 0, 1, 2) == 6);
  }
  SUBCASE("bad magic and truncation") {
    std::stringstream bad("XXXX");
    CHECK_THROWS_AS(read_tensor<float>(bad), FormatError);
    std::string s = ss.str();
    std::stringstream cut(s.substr(0, s.size() - 3));
    CHECK_THROWS_AS(read_tensor<float>(cut), FormatError);
  }
}
