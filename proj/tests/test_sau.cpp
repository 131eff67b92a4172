#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "sau/sau.hpp"
#include "test_util.hpp"

using namespace sau;
using sau::testing::randn;

namespace {

SauConfig make_cfg(int c, int cc, int k, int s) {
  SauConfig cfg;
  cfg.channels = c;
  cfg.compressed = cc;
  cfg.k = k;
  cfg.s = s;
  return cfg;
}

KernelField<double> one_hot_center(int n, const SauConfig& cfg, int h, int w) {
  TensorD kw({n, cfg.taps(), h * cfg.s, w * cfg.s});
  const int centre = cfg.taps() / 2;
  for (int b = 0; b < n; ++b)
    for (int i = 0; i < kw.h(); ++i)
      for (int j = 0; j < kw.w(); ++j) kw.at(b, centre, i, j) = 1.0;
  return {kw, cfg.k};
}

KernelField<double> uniform_kernels(int n, const SauConfig& cfg, int h, int w) {
  TensorD kw({n, cfg.taps(), h * cfg.s, w * cfg.s});
  for (auto& v : kw.values()) v = 1.0 / cfg.taps();
  return {kw, cfg.k};
}

}  // namespace

TEST_CASE("zero parameters give uniform kernels") {
  const auto cfg = make_cfg(4, 2, 5, 2);
  const auto params = SauParams<double>::zeros(cfg);
  const auto kf = sakg_forward(randn({1, 4, 3, 3}, 1), params, cfg);
  CHECK(kf.weights.shape() == Shape{1, 25, 6, 6});
  for (const double v : kf.weights.values()) CHECK(v == doctest::Approx(1.0 / 25).epsilon(1e-15));
}

TEST_CASE("kernel field is a per-pixel distribution") {
  const auto cfg = make_cfg(3, 2, 3, 2);
  Rng rng(3);
  const auto params = SauParams<double>::init(cfg, rng);
  const auto kf = sakg_forward(randn({2, 3, 4, 5}, 4, 3.0), params, cfg);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 10; ++j) {
        double total = 0;
        for (int t = 0; t < 9; ++t) {
          CHECK(kf.weights.at(n, t, i, j) >= 0.0);
          total += kf.weights.at(n, t, i, j);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      }
}

TEST_CASE("default configuration doubles resolution") {
  const SauConfig cfg;
  Rng rng(11);
  const auto params = SauParams<float>::init(cfg, rng);
  const auto f = random_normal<float>({2, 64, 8, 8}, rng);
  const auto y = sau_forward(f, params, cfg);
  CHECK(y.shape() == Shape{2, 64, 16, 16});
  CHECK(y.all_finite());
}

TEST_CASE("s = 1 and k = 1 is the identity") {
  const auto cfg = make_cfg(3, 2, 1, 1);
  Rng rng(5);
  const auto params = SauParams<double>::init(cfg, rng);
  const auto f = randn({2, 3, 4, 4}, 6);
  CHECK(sau_forward(f, params, cfg) == f);
}

TEST_CASE("one-hot centre kernels reproduce nearest upsampling exactly") {
  for (const int k : {1, 3, 5}) {
    for (const int s : {1, 2, 3}) {
      const auto cfg = make_cfg(3, 3, k, s);
      const auto f = randn({2, 3, 3, 4}, 7);
      CHECK(safu_forward(f, one_hot_center(2, cfg, 3, 4), cfg) == nearest_upsample(f, s));
    }
  }
}

TEST_CASE("uniform kernels compute the zero-padded box average") {
  const auto cfg = make_cfg(2, 2, 3, 2);
  const auto f = randn({1, 2, 3, 3}, 8);
  const auto y = safu_forward(f, uniform_kernels(1, cfg, 3, 3), cfg);
  const auto up = nearest_upsample(f, 2);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        double acc = 0;
        for (int p = -1; p <= 1; ++p)
          for (int q = -1; q <= 1; ++q) {
            if (i + p < 0 || i + p >= 6 || j + q < 0 || j + q >= 6) continue;
            acc += up.at(0, c, i + p, j + q);
          }
        CHECK(y.at(0, c, i, j) == doctest::Approx(acc / 9).epsilon(1e-14));
      }
}

TEST_CASE("optimized path matches the naive reference") {
  Rng picker(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = picker.uniform_int(1, 16);
    const auto cfg = make_cfg(c, picker.uniform_int(1, c), 2 * picker.uniform_int(0, 2) + 1, picker.uniform_int(1, 2));
    Rng rng(static_cast<std::uint64_t>(trial));
    auto params = SauParams<double>::init(cfg, rng);
    params.compress_bias = random_normal<double>(params.compress_bias.shape(), rng, 0.5);
    params.kernelgen_bias = random_normal<double>(params.kernelgen_bias.shape(), rng, 0.5);
    const auto f = random_normal<double>({picker.uniform_int(1, 2), c, picker.uniform_int(1, 8), picker.uniform_int(1, 8)}, rng);
    const auto fast = sau_forward(f, params, cfg);
    const auto slow = sau_naive(f, params, cfg);
    REQUIRE(fast.shape() == slow.shape());
    CHECK_MESSAGE(max_abs_diff(fast, slow) <= 1e-12, "trial " << trial);
  }
}

TEST_CASE("single precision tracks the naive reference") {
  const auto cfg = make_cfg(8, 4, 5, 2);
  Rng rng(9);
  const auto params = SauParams<float>::init(cfg, rng);
  const auto f = random_normal<float>({2, 8, 6, 5}, rng);
  CHECK(max_abs_diff(sau_forward(f, params, cfg), sau_naive(f, params, cfg)) < 1e-5);
}

TEST_CASE("outputs are convex combinations of inputs and zero padding") {
  const auto cfg = make_cfg(4, 3, 5, 2);
  Rng rng(12);
  const auto params = SauParams<double>::init(cfg, rng);
  const auto f = random_normal<double>({2, 4, 5, 5}, rng, 2.0);
  const auto y = sau_forward(f, params, cfg);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 4; ++c) {
      double lo = 0, hi = 0;
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
          lo = std::min(lo, f.at(n, c, i, j));
          hi = std::max(hi, f.at(n, c, i, j));
        }
      for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) {
          CHECK(y.at(n, c, i, j) >= lo - 1e-12);
          CHECK(y.at(n, c, i, j) <= hi + 1e-12);
        }
    }
}

TEST_CASE("a pixel only influences a bounded output neighbourhood") {
  const auto cfg = make_cfg(3, 2, 3, 2);
  Rng rng(13);
  const auto params = SauParams<double>::init(cfg, rng);
  auto f = random_normal<double>({1, 3, 10, 10}, rng);
  const auto before = sau_forward(f, params, cfg);
  const int i0 = 5, j0 = 4;
  f.at(0, 1, i0, j0) += 3.0;
  const auto after = sau_forward(f, params, cfg);
  // Kernel generation reaches one low-res pixel; the fused sum reaches k/2 high-res pixels.
  const int r = cfg.k / 2;
  const int reach = cfg.kernelgen_k / 2;
  const int lo_i = (i0 - reach) * cfg.s - r, hi_i = (i0 + reach + 1) * cfg.s - 1 + r;
  const int lo_j = (j0 - reach) * cfg.s - r, hi_j = (j0 + reach + 1) * cfg.s - 1 + r;
  int changed_inside = 0;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < 20; ++j) {
        const bool inside = i >= lo_i && i <= hi_i && j >= lo_j && j <= hi_j;
        if (!inside) CHECK(after.at(0, c, i, j) == before.at(0, c, i, j));
        if (inside && after.at(0, c, i, j) != before.at(0, c, i, j)) ++changed_inside;
      }
  CHECK(changed_inside > 0);
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  const auto cfg = make_cfg(3, 2, 3, 2);
  Rng rng(14);
  const auto params = SauParams<double>::init(cfg, rng);
  const auto f = random_normal<double>({2, 3, 3, 4}, rng);
  SauContext<double> ctx;
  const auto y = sau_forward(f, params, cfg, &ctx);
  const auto g = sau_backward(ctx, params, cfg, TensorD(y.shape()));
  for (const TensorD* t : {&g.input, &g.params.compress_weight, &g.params.compress_bias, &g.params.kernelgen_weight,
                           &g.params.kernelgen_bias}) {
    for (const double v : t->values()) CHECK(v == 0.0);
  }
}

TEST_CASE("one-hot centre gradient is the nearest-upsampling adjoint") {
  const auto cfg = make_cfg(2, 2, 3, 2);
  const auto f = randn({1, 2, 3, 3}, 15);
  const auto gy = randn({1, 2, 6, 6}, 16);
  const auto g = safu_backward(f, one_hot_center(1, cfg, 3, 3), cfg, gy);
  CHECK(max_abs_diff(g.input, nearest_upsample_backward(gy, 2)) < 1e-14);
}

TEST_CASE("fused sum equals the explicit unfold formulation") {
  const auto cfg = make_cfg(3, 2, 5, 2);
  const auto f = randn({2, 3, 3, 4}, 17);
  const KernelField<double> kf{channel_softmax(randn({2, 25, 6, 8}, 18)), 5};
  const auto y = safu_forward(f, kf, cfg);
  const auto cols = unfold(nearest_upsample(f, 2), 5);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 8; ++j) {
          double acc = 0;
          for (int t = 0; t < 25; ++t) acc += cols.at(n, c * 25 + t, i, j) * kf.weights.at(n, t, i, j);
          CHECK(y.at(n, c, i, j) == doctest::Approx(acc).epsilon(1e-13));
        }
}

TEST_CASE("configuration and shape errors") {
  CHECK_THROWS_AS(make_cfg(4, 2, 4, 2).validate(), ShapeError);
  CHECK_THROWS_AS(make_cfg(4, 8, 3, 2).validate(), ShapeError);
  CHECK_THROWS_AS(make_cfg(4, 2, 3, 0).validate(), ShapeError);
  const auto cfg = make_cfg(4, 2, 3, 2);
  Rng rng(1);
  const auto params = SauParams<double>::init(cfg, rng);
  CHECK_THROWS_AS(sau_forward(randn({1, 3, 4, 4}, 2), params, cfg), ShapeError);
  CHECK_THROWS_AS(safu_forward(randn({1, 4, 4, 4}, 2), uniform_kernels(1, cfg, 4, 3), cfg), ShapeError);
  CHECK_THROWS_AS(sau_backward(SauContext<double>{}, params, cfg, TensorD({1, 4, 8, 8})), std::logic_error);
}
