#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "sau/gradcheck.hpp"
#include "sau/sau.hpp"
#include "test_util.hpp"

using namespace sau;
using sau::testing::randn;

TEST_CASE("finite_diff on a quadratic") {
  TensorD x({2});
  x[0] = 1;
  x[1] = 2;
  const auto g = finite_diff(
      [](const TensorD& t) {
        double s = 0;
        for (const double v : t.values()) s += v * v;
        return s;
      },
      x);
  CHECK(std::abs(g[0] - 2) < 1e-6);
  CHECK(std::abs(g[1] - 4) < 1e-6);
}

TEST_CASE("finite_diff of a constant is zero") {
  const auto g = finite_diff([](const TensorD&) { return 3.5; }, randn({3, 4}, 1));
  for (const double v : g.values()) CHECK(std::abs(v) < 1e-8);
}

TEST_CASE("finite_diff rejects bad input") {
  CHECK_THROWS_AS(finite_diff([](const TensorD&) { return 0.0; }, randn({2}, 1), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(finite_diff([](const TensorD&) { return NAN; }, randn({2}, 1)), NumericError);
}

TEST_CASE("finite_diff of sum(sau) matches the analytic backward") {
  SauConfig cfg;
  cfg.channels = 2;
  cfg.compressed = 2;
  cfg.k = 3;
  cfg.s = 2;
  Rng rng(21);
  const auto params = SauParams<double>::init(cfg, rng);
  const auto f = randn({1, 2, 3, 3}, 22);
  const auto numeric = finite_diff([&](const TensorD& x) { return sum(sau_forward(x, params, cfg)); }, f);
  SauContext<double> ctx;
  const auto y = sau_forward(f, params, cfg, &ctx);
  TensorD ones(y.shape());
  for (auto& v : ones.values()) v = 1.0;
  const auto analytic = sau_backward(ctx, params, cfg, ones).input;
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(gradcheck_rel_error(analytic[i], numeric[i]) <= 1e-4);
}

TEST_CASE("relative error metric") {
  CHECK(gradcheck_rel_error(1.0, 1.0) == 0.0);
  CHECK(gradcheck_rel_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(gradcheck_rel_error(0.0, 1e-10) == doctest::Approx(1e-2));
}

TEST_CASE("channel softmax at 1x4x2x2 passes") {
  const auto report = check_op("channel_softmax", 7, {}, {1, 4, 2, 2});
  CHECK(report.pass);
  REQUIRE(report.inputs.size() == 1);
  CHECK(report.inputs[0].checked == 16);
}

TEST_CASE("sau at 1x2x3x3 passes") {
  const auto report = check_op("sau", 7, {}, {1, 2, 3, 3});
  CHECK(report.pass);
  CHECK(report.inputs.size() == 5);
}

TEST_CASE("check_op is deterministic given the seed") {
  const auto a = check_op("conv2d", 3);
  const auto b = check_op("conv2d", 3);
  REQUIRE(a.inputs.size() == b.inputs.size());
  for (std::size_t i = 0; i < a.inputs.size(); ++i) CHECK(a.inputs[i].max_rel_err == b.inputs[i].max_rel_err);
}

TEST_CASE("unknown op is rejected") { CHECK_THROWS_AS(check_op("no_such_op", 1), std::out_of_range); }

TEST_CASE("corrupted backward fails") {
  GradRegistry reg;
  reg.add("bad_square", [](Rng& rng, const Shape&) {
    GradProblem p;
    p.names = {"x"};
    p.inputs = {random_normal<double>({1, 2, 3, 3}, rng)};
    p.forward = [](const std::vector<TensorD>& in) { return mul(in[0], in[0]); };
    // Missing the factor of two.
    p.backward = [](const std::vector<TensorD>& in, const TensorD& g) { return std::vector<TensorD>{mul(in[0], g)}; };
    return p;
  });
  const auto report = check_op(reg, "bad_square", 1);
  CHECK_FALSE(report.pass);
  CHECK(report.inputs[0].max_rel_err > 0.3);
}

TEST_CASE("wrong gradient shape is reported") {
  GradRegistry reg;
  reg.add("bad_shape", [](Rng& rng, const Shape&) {
    GradProblem p;
    p.names = {"x"};
    p.inputs = {random_normal<double>({2, 3}, rng)};
    p.forward = [](const std::vector<TensorD>& in) { return in[0]; };
    p.backward = [](const std::vector<TensorD>&, const TensorD&) { return std::vector<TensorD>{TensorD({3, 2})}; };
    return p;
  });
  CHECK_THROWS_AS(check_op(reg, "bad_shape", 1), ShapeError);
}

TEST_CASE("adjoint linearity for conv2d") {
  const auto spec = ConvSpec::square(3, 4, 3, 1, 1, true);
  const auto x = randn({2, 3, 5, 5}, 31);
  const auto w = randn(spec.weight_shape(), 32);
  const auto g1 = randn({2, 4, 5, 5}, 33);
  const auto g2 = randn({2, 4, 5, 5}, 34);
  const auto a = conv2d_backward(x, w, spec, g1);
  const auto b = conv2d_backward(x, w, spec, g2);
  const auto both = conv2d_backward(x, w, spec, add(g1, g2));
  CHECK(max_abs_diff(both.input, add(a.input, b.input)) < 1e-12);
  CHECK(max_abs_diff(both.weight, add(a.weight, b.weight)) < 1e-12);
  CHECK(max_abs_diff(both.bias, add(a.bias, b.bias)) < 1e-12);
}

TEST_CASE("adjoint linearity for safu") {
  SauConfig cfg;
  cfg.channels = 3;
  cfg.compressed = 2;
  cfg.k = 3;
  cfg.s = 2;
  const auto f = randn({1, 3, 4, 4}, 41);
  const KernelField<double> kf{channel_softmax(randn({1, 9, 8, 8}, 42)), 3};
  const auto g1 = randn({1, 3, 8, 8}, 43);
  const auto g2 = randn({1, 3, 8, 8}, 44);
  const auto a = safu_backward(f, kf, cfg, g1);
  const auto b = safu_backward(f, kf, cfg, g2);
  const auto both = safu_backward(f, kf, cfg, add(g1, g2));
  CHECK(max_abs_diff(both.input, add(a.input, b.input)) < 1e-12);
  CHECK(max_abs_diff(both.kernels, add(a.kernels, b.kernels)) < 1e-12);
}

TEST_CASE("full registry sweep passes") {
  const auto& reg = default_registry();
  for (const char* op : {"conv2d", "transpose_conv2d", "instance_norm", "relu", "leaky_relu", "channel_softmax",
                         "pixel_shuffle", "nearest_upsample", "unfold", "bilinear_upsample", "bicubic_upsample",
                         "avg_pool", "linear", "sakg", "safu", "sau"}) {
    CHECK_MESSAGE(reg.contains(op), op);
  }
  for (const auto& name : reg.names()) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto report = check_op(name, seed);
      std::string detail = name + " seed " + std::to_string(seed);
      for (const auto& in : report.inputs) detail += " " + in.input + "=" + std::to_string(in.max_rel_err);
      CHECK_MESSAGE(report.pass, detail);
    }
  }
}
