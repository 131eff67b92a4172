#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "sau/ops.hpp"
#include "test_util.hpp"

using namespace sau;
using sau::testing::randn;

TEST_CASE("conv2d: scalar 1x1 kernel doubles the input") {
  const auto x = randn({1, 1, 3, 3}, 1);
  const TensorD w({1, 1, 1, 1}, std::vector<double>{2.0});
  const auto y = conv2d(x, w, nullptr, ConvSpec::square(1, 1, 1, 1, 0, false));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == 2.0 * x[i]);
}

TEST_CASE("conv2d: identity 3x3 kernel with pad 1 reproduces the input") {
  const auto x = randn({1, 1, 3, 3}, 2);
  TensorD w({1, 1, 3, 3});
  w.at(0, 0, 1, 1) = 1.0;
  const auto y = conv2d(x, w, nullptr, ConvSpec::square(1, 1, 3, 1, 1, false));
  CHECK(y == x);
}

TEST_CASE("conv2d matches the six-loop oracle") {
  const auto x = randn({2, 3, 5, 5}, 3);
  const auto w = randn({4, 3, 3, 3}, 4);
  const auto b = randn({4}, 5);
  for (auto [stride, pad] : {std::pair{1, 1}, std::pair{1, 0}, std::pair{2, 1}, std::pair{2, 0}}) {
    CAPTURE(stride);
    CAPTURE(pad);
    const auto y = conv2d(x, w, &b, ConvSpec::square(3, 4, 3, stride, pad, true));
    const auto ref = sau::testing::conv2d_oracle(x, w, &b, stride, pad);
    CHECK(max_abs_diff(y, ref) <= 1e-12);
  }
}

TEST_CASE("conv2d output extents follow floor((in + 2p - k) / stride) + 1") {
  const auto x = randn({1, 2, 7, 6}, 6);
  const auto spec = ConvSpec::square(2, 3, 4, 2, 1, false);
  const auto y = conv2d(x, randn({3, 2, 4, 4}, 7), nullptr, spec);
  CHECK(y.shape() == Shape{1, 3, (7 + 2 - 4) / 2 + 1, (6 + 2 - 4) / 2 + 1});
}

TEST_CASE("conv2d rejects bad shapes and non-finite input") {
  auto x = randn({1, 2, 4, 4}, 8);
  const auto w = randn({3, 2, 3, 3}, 9);
  CHECK_THROWS_AS(conv2d(x, w, nullptr, ConvSpec::square(3, 3, 3, 1, 1, false)), ShapeError);
  CHECK_THROWS_AS(conv2d(x, randn({3, 2, 5, 5}, 1), nullptr, ConvSpec::square(2, 3, 3, 1, 1, false)), ShapeError);
  CHECK_THROWS_AS(conv2d(x, w, nullptr, ConvSpec::square(2, 3, 3, 1, 1, true)), ShapeError);
  x[3] = std::nan("");
  CHECK_THROWS_AS(conv2d(x, w, nullptr, ConvSpec::square(2, 3, 3, 1, 1, false)), NumericError);
}

TEST_CASE("conv2d is linear in its input") {
  const auto x = randn({2, 3, 5, 5}, 10);
  const auto z = randn({2, 3, 5, 5}, 11);
  const auto w = randn({4, 3, 3, 3}, 12);
  const auto spec = ConvSpec::square(3, 4, 3, 1, 1, false);
  const double a = 1.7, b = -0.4;
  const auto lhs = conv2d(add(scale(x, a), scale(z, b)), w, nullptr, spec);
  const auto rhs = add(scale(conv2d(x, w, nullptr, spec), a), scale(conv2d(z, w, nullptr, spec), b));
  CHECK(max_abs_diff(lhs, rhs) <= 1e-10);
}

TEST_CASE("transpose_conv2d: single pixel scatters the kernel") {
  const TensorD x({1, 1, 1, 1}, std::vector<double>{1.0});
  const TensorD w({1, 1, 2, 2}, 1.0);
  const auto y = transpose_conv2d(x, w, nullptr, ConvSpec::square(1, 1, 2, 2, 0, false));
  CHECK(y == TensorD({1, 1, 2, 2}, 1.0));
}

TEST_CASE("transpose_conv2d: zero input gives the bias") {
  const TensorD x({1, 2, 3, 3});
  const auto w = randn({2, 3, 3, 3}, 13);
  const TensorD b({3}, std::vector<double>{0.5, -1.0, 2.0});
  const auto y = transpose_conv2d(x, w, &b, ConvSpec::square(2, 3, 3, 2, 1, true));
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < y.h(); ++i)
      for (int j = 0; j < y.w(); ++j) CHECK(y.at(0, c, i, j) == b[static_cast<std::size_t>(c)]);
}

TEST_CASE("transpose_conv2d matches the zero-stuffing oracle") {
  const auto x = randn({2, 3, 4, 3}, 14);
  const auto w = randn({3, 2, 3, 3}, 15);
  const auto b = randn({2}, 16);
  for (auto [stride, pad, op] : {std::tuple{1, 1, 0}, std::tuple{2, 1, 0}, std::tuple{2, 0, 0},
                                       std::tuple{2, 1, 1}}) {
    CAPTURE(stride);
    CAPTURE(pad);
    CAPTURE(op);
    ConvSpec spec = ConvSpec::square(3, 2, 3, stride, pad, true);
    spec.output_padding = op;
    const auto y = transpose_conv2d(x, w, &b, spec);
    CHECK(y.shape() == Shape{2, 2, (4 - 1) * stride - 2 * pad + 3 + op, (3 - 1) * stride - 2 * pad + 3 + op});
    CHECK(max_abs_diff(y, sau::testing::transpose_conv_oracle(x, w, &b, stride, pad, op)) <= 1e-12);
  }
}

TEST_CASE("instance_norm edge cases") {
  const TensorD x({1, 2, 3, 3}, 4.0);
  const TensorD ones({2}, 1.0), zeros({2});
  const auto y = instance_norm(x, ones, zeros);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.0);

  const auto r = randn({2, 2, 4, 4}, 17);
  const TensorD beta({2}, std::vector<double>{0.3, -0.7});
  const auto yb = instance_norm(r, zeros, beta);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(yb.at(n, c, i, j) == beta[static_cast<std::size_t>(c)]);
}

TEST_CASE("instance_norm normalizes each slice") {
  // eps/var must stay below 1e-6, so the slices need variance well above 10.
  const auto x = randn({2, 3, 5, 4}, 18, 5.0);
  const auto y = instance_norm(x, TensorD({3}, 1.0), TensorD({3}));
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      double m = 0, v = 0;
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j) m += y.at(n, c, i, j);
      m /= 20;
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j) v += (y.at(n, c, i, j) - m) * (y.at(n, c, i, j) - m);
      v /= 20;
      CHECK(std::abs(m) <= 1e-10);
      CHECK(std::abs(v - 1.0) <= 1e-6);
    }
}

TEST_CASE("pointwise ops") {
  const TensorD x({3}, std::vector<double>{-1, 0, 2});
  CHECK(relu(x) == TensorD({3}, std::vector<double>{0, 0, 2}));
  CHECK(leaky_relu(x, 0.2) == TensorD({3}, std::vector<double>{-0.2, 0, 2}));
  const auto a = randn({2, 3, 2, 2}, 19);
  const auto b = randn({2, 3, 2, 2}, 20);
  CHECK(add(a, TensorD(a.shape())) == a);
  const auto m = mul(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(m[i] == a[i] * b[i]);
  const auto d = sub(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(d[i] == a[i] - b[i]);
  CHECK_THROWS_AS(add(a, randn({2, 3, 2, 1}, 1)), ShapeError);
}

TEST_CASE("channel_softmax") {
  const auto u = channel_softmax(TensorD({1, 4, 2, 3}));
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(u[i] == doctest::Approx(0.25).epsilon(1e-15));

  TensorD x({1, 4, 1, 1});
  x[0] = std::log(2.0);
  const auto y = channel_softmax(x);
  CHECK(y[0] == doctest::Approx(0.4).epsilon(1e-14));
  for (int c = 1; c < 4; ++c) CHECK(y[static_cast<std::size_t>(c)] == doctest::Approx(0.2).epsilon(1e-14));

  const auto r = randn({2, 5, 3, 4}, 21, 4.0);
  const auto p = channel_softmax(r);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) {
        double total = 0;
        int arg_in = 0, arg_out = 0;
        for (int c = 0; c < 5; ++c) {
          CHECK(p.at(n, c, i, j) >= 0.0);
          total += p.at(n, c, i, j);
          if (r.at(n, c, i, j) > r.at(n, arg_in, i, j)) arg_in = c;
          if (p.at(n, c, i, j) > p.at(n, arg_out, i, j)) arg_out = c;
        }
        CHECK(std::abs(total - 1.0) <= 1e-6);
        CHECK(arg_in == arg_out);
      }
}

TEST_CASE("channel_softmax survives large logits") {
  TensorD x({1, 2, 1, 1}, std::vector<double>{1000.0, 999.0});
  const auto y = channel_softmax(x);
  CHECK(y.all_finite());
  CHECK(y[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
}

TEST_CASE("pixel_shuffle convention") {
  const TensorD x({1, 4, 1, 1}, std::vector<double>{1, 2, 3, 4});
  const auto y = pixel_shuffle(x, 2);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  CHECK(y.at(0, 0, 0, 0) == 1);
  CHECK(y.at(0, 0, 0, 1) == 2);
  CHECK(y.at(0, 0, 1, 0) == 3);
  CHECK(y.at(0, 0, 1, 1) == 4);

  const auto r = randn({2, 8, 3, 3}, 22);
  CHECK(pixel_shuffle(r, 1) == r);
  const auto s = pixel_shuffle(r, 2);
  std::multiset<double> a(r.values().begin(), r.values().end()), b(s.values().begin(), s.values().end());
  CHECK(a == b);
  CHECK(pixel_unshuffle(s, 2) == r);
  // explicit index map
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 2; ++c)
      for (int h = 0; h < 3; ++h)
        for (int w = 0; w < 3; ++w)
          for (int dh = 0; dh < 2; ++dh)
            for (int dw = 0; dw < 2; ++dw) CHECK(s.at(n, c, h * 2 + dh, w * 2 + dw) == r.at(n, c * 4 + dh * 2 + dw, h, w));
  CHECK_THROWS_AS(pixel_shuffle(randn({1, 6, 2, 2}, 1), 2), ShapeError);
}

TEST_CASE("nearest_upsample") {
  const TensorD v({1, 1, 1, 1}, std::vector<double>{3.5});
  CHECK(nearest_upsample(v, 2) == TensorD({1, 1, 2, 2}, 3.5));
  const auto r = randn({2, 3, 3, 4}, 23);
  CHECK(nearest_upsample(r, 1) == r);
  const auto y = nearest_upsample(r, 3);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 12; ++j) CHECK(y.at(n, c, i, j) == r.at(n, c, i / 3, j / 3));
}

TEST_CASE("unfold") {
  const TensorD v({1, 1, 1, 1}, std::vector<double>{2.0});
  const auto u = unfold(v, 3);
  REQUIRE(u.shape() == Shape{1, 9, 1, 1});
  for (int t = 0; t < 9; ++t) CHECK(u[static_cast<std::size_t>(t)] == (t == 4 ? 2.0 : 0.0));

  const auto r = randn({1, 2, 4, 4}, 24);
  CHECK(unfold(r, 1) == r);
  const auto g = unfold(r, 3);
  for (int c = 0; c < 2; ++c)
    for (int p = -1; p <= 1; ++p)
      for (int q = -1; q <= 1; ++q)
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) {
            const bool inside = i + p >= 0 && i + p < 4 && j + q >= 0 && j + q < 4;
            const double expect = inside ? r.at(0, c, i + p, j + q) : 0.0;
            CHECK(g.at(0, c * 9 + (p + 1) * 3 + (q + 1), i, j) == expect);
          }
  CHECK_THROWS_AS(unfold(r, 2), ShapeError);
}

TEST_CASE("fold is the adjoint of unfold") {
  const auto x = randn({2, 3, 4, 5}, 25);
  const auto y = randn({2, 27, 4, 5}, 26);
  double lhs = 0, rhs = 0;
  const auto ux = unfold(x, 3);
  const auto fy = fold(y, 3);
  for (std::size_t i = 0; i < y.size(); ++i) lhs += ux[i] * y[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * fy[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

namespace {

double clamp_src(int o, int s, int n) { return std::clamp((o + 0.5) / s - 0.5, 0.0, n - 1.0); }

double keys(double x) {
  const double a = -0.75;
  x = std::abs(x);
  if (x <= 1) return (a + 2) * x * x * x - (a + 3) * x * x + 1;
  if (x < 2) return a * x * x * x - 5 * a * x * x + 8 * a * x - 4 * a;
  return 0;
}

// Direct 2-D evaluation per output pixel.
double bilinear_at(const TensorD& x, int c, int oi, int oj, int s) {
  const double sy = clamp_src(oi, s, x.h()), sx = clamp_src(oj, s, x.w());
  const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
  const int y1 = std::min(y0 + 1, x.h() - 1), x1 = std::min(x0 + 1, x.w() - 1);
  const double ty = sy - y0, tx = sx - x0;
  return (1 - ty) * (1 - tx) * x.at(0, c, y0, x0) + (1 - ty) * tx * x.at(0, c, y0, x1) +
         ty * (1 - tx) * x.at(0, c, y1, x0) + ty * tx * x.at(0, c, y1, x1);
}

double bicubic_at(const TensorD& x, int c, int oi, int oj, int s) {
  const double sy = clamp_src(oi, s, x.h()), sx = clamp_src(oj, s, x.w());
  const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
  double acc = 0;
  for (int a = -1; a <= 2; ++a)
    for (int b = -1; b <= 2; ++b) {
      const int yy = std::clamp(y0 + a, 0, x.h() - 1), xx = std::clamp(x0 + b, 0, x.w() - 1);
      acc += keys(sy - (y0 + a)) * keys(sx - (x0 + b)) * x.at(0, c, yy, xx);
    }
  return acc;
}

}  // namespace

TEST_CASE("bilinear and bicubic upsampling") {
  const TensorD constant({1, 2, 3, 3}, 0.75);
  const auto cl = bilinear_upsample(constant, 2);
  const auto cc = bicubic_upsample(constant, 2);
  for (const double v : cl.values()) CHECK(v == doctest::Approx(0.75).epsilon(1e-15));
  for (const double v : cc.values()) CHECK(v == doctest::Approx(0.75).epsilon(1e-15));

  const auto r = randn({1, 1, 4, 4}, 27);
  CHECK(bilinear_upsample(r, 1) == r);
  CHECK(bicubic_upsample(r, 1) == r);

  const auto bl = bilinear_upsample(r, 2);
  const auto bc = bicubic_upsample(r, 2);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      CHECK(std::abs(bl.at(0, 0, i, j) - bilinear_at(r, 0, i, j, 2)) <= 1e-12);
      CHECK(std::abs(bc.at(0, 0, i, j) - bicubic_at(r, 0, i, j, 2)) <= 1e-12);
    }
}

TEST_CASE("avg_pool and linear") {
  const auto x = randn({1, 2, 4, 4}, 28);
  const auto p = avg_pool(x, 2);
  CHECK(p.at(0, 1, 1, 0) ==
        doctest::Approx((x.at(0, 1, 2, 0) + x.at(0, 1, 2, 1) + x.at(0, 1, 3, 0) + x.at(0, 1, 3, 1)) / 4));

  const TensorD in({1, 2}, std::vector<double>{1, 2});
  const TensorD w({3, 2}, std::vector<double>{1, 0, 0, 1, 1, 1});
  const TensorD b({3}, std::vector<double>{0, 0, 0.5});
  CHECK(linear(in, w, b) == TensorD({1, 3}, std::vector<double>{1, 2, 3.5}));
}

TEST_CASE("concat and split channels are inverse") {
  const auto a = randn({2, 1, 3, 3}, 29);
  const auto b = randn({2, 3, 3, 3}, 30);
  const auto cat = concat_channels<double>({&a, &b});
  CHECK(cat.shape() == Shape{2, 4, 3, 3});
  const auto parts = split_channels(cat, {1, 3});
  CHECK(parts[0] == a);
  CHECK(parts[1] == b);
}
