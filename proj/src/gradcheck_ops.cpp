#include <cmath>

#include "sau/gradcheck.hpp"
#include "sau/ops.hpp"
#include "sau/sau.hpp"

namespace sau {

namespace {

using Inputs = std::vector<TensorD>;

Shape image_shape(Rng& rng, const Shape& hint, int min_hw = 2, int max_c = 4) {
  if (!hint.empty()) return hint;
  return {rng.uniform_int(1, 2), rng.uniform_int(1, max_c), rng.uniform_int(min_hw, 6), rng.uniform_int(min_hw, 6)};
}

// Spatial extents divisible by f, each at most 6.
Shape divisible_shape(Rng& rng, const Shape& hint, int f) {
  if (!hint.empty()) return hint;
  const int max_blocks = 6 / f;
  return {rng.uniform_int(1, 2), rng.uniform_int(1, 3), f * rng.uniform_int(1, max_blocks),
          f * rng.uniform_int(1, max_blocks)};
}

// Keeps every element at least `margin` away from zero so piecewise-linear ops are smooth
// under the finite-difference step.
TensorD away_from_kink(Shape dims, Rng& rng, double margin = 1e-3) {
  TensorD t = random_normal<double>(std::move(dims), rng);
  for (auto& v : t.values()) {
    while (std::abs(v) < margin) v = rng.normal();
  }
  return t;
}

GradProblem unary(const std::string& name, TensorD x, std::function<TensorD(const TensorD&)> fwd,
                  std::function<TensorD(const TensorD&, const TensorD&)> bwd) {
  GradProblem p;
  p.names = {name};
  p.inputs = {std::move(x)};
  p.forward = [fwd](const Inputs& in) { return fwd(in[0]); };
  p.backward = [bwd](const Inputs& in, const TensorD& g) { return Inputs{bwd(in[0], g)}; };
  return p;
}

GradProblem conv_problem(Rng& rng, const Shape& hint, int k, int stride, int pad, bool bias) {
  const Shape xs = image_shape(rng, hint, k);
  const ConvSpec spec{xs[1], rng.uniform_int(1, 4), k, k, stride, pad, bias, 0};
  GradProblem p;
  p.names = {"x", "weight"};
  p.inputs = {random_normal<double>(xs, rng), random_normal<double>(spec.weight_shape(), rng, 0.5)};
  if (bias) {
    p.names.push_back("bias");
    p.inputs.push_back(random_normal<double>({spec.out_channels}, rng));
  }
  p.forward = [spec](const Inputs& in) { return conv2d(in[0], in[1], spec.has_bias ? &in[2] : nullptr, spec); };
  p.backward = [spec](const Inputs& in, const TensorD& g) {
    auto grads = conv2d_backward(in[0], in[1], spec, g);
    Inputs out{std::move(grads.input), std::move(grads.weight)};
    if (spec.has_bias) out.push_back(std::move(grads.bias));
    return out;
  };
  return p;
}

GradProblem tconv_problem(Rng& rng, const Shape& hint, int k, int stride, int pad, int output_padding) {
  const Shape xs = hint.empty() ? Shape{rng.uniform_int(1, 2), rng.uniform_int(1, 3), rng.uniform_int(1, 3),
                                        rng.uniform_int(1, 3)}
                                : hint;
  const ConvSpec spec{xs[1], rng.uniform_int(1, 3), k, k, stride, pad, true, output_padding};
  GradProblem p;
  p.names = {"x", "weight", "bias"};
  p.inputs = {random_normal<double>(xs, rng), random_normal<double>(spec.transpose_weight_shape(), rng, 0.5),
              random_normal<double>({spec.out_channels}, rng)};
  p.forward = [spec](const Inputs& in) { return transpose_conv2d(in[0], in[1], &in[2], spec); };
  p.backward = [spec](const Inputs& in, const TensorD& g) {
    auto grads = transpose_conv2d_backward(in[0], in[1], spec, g);
    return Inputs{std::move(grads.input), std::move(grads.weight), std::move(grads.bias)};
  };
  return p;
}

GradProblem binary(Elementwise op, Rng& rng, const Shape& hint) {
  const Shape xs = image_shape(rng, hint);
  GradProblem p;
  p.names = {"a", "b"};
  p.inputs = {random_normal<double>(xs, rng), random_normal<double>(xs, rng)};
  p.forward = [op](const Inputs& in) { return elementwise(op, in[0], in[1]); };
  p.backward = [op](const Inputs& in, const TensorD& g) {
    auto [ga, gb] = elementwise_backward(op, in[0], in[1], g);
    return Inputs{std::move(ga), std::move(gb)};
  };
  return p;
}

SauConfig small_sau(Rng& rng, int channels) {
  SauConfig cfg;
  cfg.channels = channels;
  cfg.compressed = rng.uniform_int(1, channels);
  cfg.k = rng.uniform_int(0, 1) == 0 ? 1 : 3;
  cfg.s = rng.uniform_int(1, 2);
  cfg.kernelgen_k = 3;
  return cfg;
}

Shape sau_input_shape(Rng& rng, const Shape& hint) {
  if (!hint.empty()) return hint;
  return {rng.uniform_int(1, 2), rng.uniform_int(1, 3), rng.uniform_int(2, 3), rng.uniform_int(2, 3)};
}

// Spec-sized problems use C = C' = 2, k = 3, s = 2 when a shape is pinned.
SauConfig sau_config_for(Rng& rng, const Shape& xs, const Shape& hint) {
  if (hint.empty()) return small_sau(rng, xs[1]);
  SauConfig cfg;
  cfg.channels = xs[1];
  cfg.compressed = xs[1];
  cfg.k = 3;
  cfg.s = 2;
  cfg.kernelgen_k = 3;
  return cfg;
}

SauParams<double> unpack(const Inputs& in, std::size_t first) {
  return SauParams<double>{in[first], in[first + 1], in[first + 2], in[first + 3]};
}

void append_params(GradProblem& p, const SauConfig& cfg, Rng& rng) {
  auto params = SauParams<double>::init(cfg, rng);
  // Nonzero biases so their gradients are exercised away from the symmetric point.
  params.compress_bias = random_normal<double>(params.compress_bias.shape(), rng, 0.3);
  params.kernelgen_bias = random_normal<double>(params.kernelgen_bias.shape(), rng, 0.3);
  p.names.insert(p.names.end(), {"compress_weight", "compress_bias", "kernelgen_weight", "kernelgen_bias"});
  p.inputs.insert(p.inputs.end(), {params.compress_weight, params.compress_bias, params.kernelgen_weight,
                                   params.kernelgen_bias});
}

void append_param_grads(Inputs& out, SauParams<double>&& g) {
  out.push_back(std::move(g.compress_weight));
  out.push_back(std::move(g.compress_bias));
  out.push_back(std::move(g.kernelgen_weight));
  out.push_back(std::move(g.kernelgen_bias));
}

}  // namespace

void register_tensor_ops(GradRegistry& r) {
  r.add("conv2d", [](Rng& rng, const Shape& hint) { return conv_problem(rng, hint, 3, 1, 1, true); });
  r.add("conv2d_strided", [](Rng& rng, const Shape& hint) { return conv_problem(rng, hint, 4, 2, 1, true); });
  r.add("conv2d_1x1", [](Rng& rng, const Shape& hint) { return conv_problem(rng, hint, 1, 1, 0, false); });
  r.add("transpose_conv2d", [](Rng& rng, const Shape& hint) { return tconv_problem(rng, hint, 4, 2, 1, 0); });
  r.add("transpose_conv2d_op", [](Rng& rng, const Shape& hint) { return tconv_problem(rng, hint, 3, 2, 1, 1); });

  r.add("instance_norm", [](Rng& rng, const Shape& hint) {
    const Shape xs = image_shape(rng, hint);
    GradProblem p;
    p.names = {"x", "gamma", "beta"};
    p.inputs = {random_normal<double>(xs, rng, 2.0), random_normal<double>({xs[1]}, rng),
                random_normal<double>({xs[1]}, rng)};
    p.forward = [](const Inputs& in) { return instance_norm(in[0], in[1], in[2]); };
    p.backward = [](const Inputs& in, const TensorD& g) {
      auto grads = instance_norm_backward(in[0], in[1], g);
      return Inputs{std::move(grads.input), std::move(grads.gamma), std::move(grads.beta)};
    };
    return p;
  });

  r.add("relu", [](Rng& rng, const Shape& hint) {
    return unary("x", away_from_kink(image_shape(rng, hint), rng), [](const TensorD& x) { return relu(x); },
                 [](const TensorD& x, const TensorD& g) { return relu_backward(x, g); });
  });
  r.add("leaky_relu", [](Rng& rng, const Shape& hint) {
    return unary(
        "x", away_from_kink(image_shape(rng, hint), rng), [](const TensorD& x) { return leaky_relu(x, 0.2); },
        [](const TensorD& x, const TensorD& g) { return leaky_relu_backward(x, 0.2, g); });
  });

  r.add("add", [](Rng& rng, const Shape& hint) { return binary(Elementwise::add, rng, hint); });
  r.add("sub", [](Rng& rng, const Shape& hint) { return binary(Elementwise::sub, rng, hint); });
  r.add("mul", [](Rng& rng, const Shape& hint) { return binary(Elementwise::mul, rng, hint); });

  r.add("channel_softmax", [](Rng& rng, const Shape& hint) {
    return unary(
        "x", random_normal<double>(image_shape(rng, hint), rng), [](const TensorD& x) { return channel_softmax(x); },
        [](const TensorD& x, const TensorD& g) { return channel_softmax_backward(channel_softmax(x), g); });
  });

  r.add("pixel_shuffle", [](Rng& rng, const Shape& hint) {
    Shape xs = hint;
    if (xs.empty()) xs = {rng.uniform_int(1, 2), 4 * rng.uniform_int(1, 2), rng.uniform_int(1, 3), rng.uniform_int(1, 3)};
    return unary(
        "x", random_normal<double>(xs, rng), [](const TensorD& x) { return pixel_shuffle(x, 2); },
        [](const TensorD&, const TensorD& g) { return pixel_unshuffle(g, 2); });
  });

  r.add("nearest_upsample", [](Rng& rng, const Shape& hint) {
    return unary(
        "x", random_normal<double>(image_shape(rng, hint, 1), rng),
        [](const TensorD& x) { return nearest_upsample(x, 2); },
        [](const TensorD&, const TensorD& g) { return nearest_upsample_backward(g, 2); });
  });

  r.add("unfold", [](Rng& rng, const Shape& hint) {
    return unary(
        "x", random_normal<double>(image_shape(rng, hint, 1, 2), rng), [](const TensorD& x) { return unfold(x, 3); },
        [](const TensorD&, const TensorD& g) { return fold(g, 3); });
  });

  r.add("bilinear_upsample", [](Rng& rng, const Shape& hint) {
    return unary(
        "x", random_normal<double>(image_shape(rng, hint, 1), rng),
        [](const TensorD& x) { return bilinear_upsample(x, 2); },
        [](const TensorD&, const TensorD& g) { return bilinear_upsample_backward(g, 2); });
  });

  r.add("bicubic_upsample", [](Rng& rng, const Shape& hint) {
    return unary(
        "x", random_normal<double>(image_shape(rng, hint, 1), rng),
        [](const TensorD& x) { return bicubic_upsample(x, 2); },
        [](const TensorD&, const TensorD& g) { return bicubic_upsample_backward(g, 2); });
  });

  r.add("avg_pool", [](Rng& rng, const Shape& hint) {
    return unary(
        "x", random_normal<double>(divisible_shape(rng, hint, 2), rng), [](const TensorD& x) { return avg_pool(x, 2); },
        [](const TensorD&, const TensorD& g) { return avg_pool_backward(g, 2); });
  });

  r.add("concat_channels", [](Rng& rng, const Shape& hint) {
    const Shape xs = image_shape(rng, hint);
    Shape ys = xs;
    ys[1] = rng.uniform_int(1, 3);
    GradProblem p;
    p.names = {"a", "b"};
    p.inputs = {random_normal<double>(xs, rng), random_normal<double>(ys, rng)};
    p.forward = [](const Inputs& in) { return concat_channels<double>({&in[0], &in[1]}); };
    p.backward = [](const Inputs& in, const TensorD& g) {
      return split_channels(g, {in[0].dim(1), in[1].dim(1)});
    };
    return p;
  });

  r.add("linear", [](Rng& rng, const Shape& hint) {
    const Shape xs = hint.empty() ? Shape{rng.uniform_int(1, 4), rng.uniform_int(1, 6)} : hint;
    const int outs = rng.uniform_int(1, 5);
    GradProblem p;
    p.names = {"x", "weight", "bias"};
    p.inputs = {random_normal<double>(xs, rng), random_normal<double>({outs, xs[1]}, rng),
                random_normal<double>({outs}, rng)};
    p.forward = [](const Inputs& in) { return linear(in[0], in[1], in[2]); };
    p.backward = [](const Inputs& in, const TensorD& g) {
      auto grads = linear_backward(in[0], in[1], g);
      return Inputs{std::move(grads.input), std::move(grads.weight), std::move(grads.bias)};
    };
    return p;
  });
}

void register_sau_ops(GradRegistry& r) {
  r.add("sakg", [](Rng& rng, const Shape& hint) {
    const Shape xs = sau_input_shape(rng, hint);
    const SauConfig cfg = sau_config_for(rng, xs, hint);
    GradProblem p;
    p.names = {"f"};
    p.inputs = {random_normal<double>(xs, rng)};
    append_params(p, cfg, rng);
    p.forward = [cfg](const Inputs& in) { return sakg_forward(in[0], unpack(in, 1), cfg).weights; };
    p.backward = [cfg](const Inputs& in, const TensorD& g) {
      const auto params = unpack(in, 1);
      TensorD compressed;
      const auto kernels = sakg_forward(in[0], params, cfg, &compressed);
      auto grads = sakg_backward(in[0], compressed, kernels, params, cfg, g);
      Inputs out{std::move(grads.input)};
      append_param_grads(out, std::move(grads.params));
      return out;
    };
    return p;
  });

  r.add("safu", [](Rng& rng, const Shape& hint) {
    const Shape xs = sau_input_shape(rng, hint);
    const SauConfig cfg = sau_config_for(rng, xs, hint);
    const Shape ks{xs[0], cfg.taps(), xs[2] * cfg.s, xs[3] * cfg.s};
    GradProblem p;
    p.names = {"f", "kernels"};
    p.inputs = {random_normal<double>(xs, rng), channel_softmax(random_normal<double>(ks, rng))};
    p.forward = [cfg](const Inputs& in) { return safu_forward(in[0], KernelField<double>{in[1], cfg.k}, cfg); };
    p.backward = [cfg](const Inputs& in, const TensorD& g) {
      auto grads = safu_backward(in[0], KernelField<double>{in[1], cfg.k}, cfg, g);
      return Inputs{std::move(grads.input), std::move(grads.kernels)};
    };
    return p;
  });

  r.add("sau", [](Rng& rng, const Shape& hint) {
    const Shape xs = sau_input_shape(rng, hint);
    const SauConfig cfg = sau_config_for(rng, xs, hint);
    GradProblem p;
    p.names = {"f"};
    p.inputs = {random_normal<double>(xs, rng)};
    append_params(p, cfg, rng);
    p.forward = [cfg](const Inputs& in) { return sau_forward(in[0], unpack(in, 1), cfg); };
    p.backward = [cfg](const Inputs& in, const TensorD& g) {
      const auto params = unpack(in, 1);
      SauContext<double> ctx;
      sau_forward(in[0], params, cfg, &ctx);
      auto grads = sau_backward(ctx, params, cfg, g);
      Inputs out{std::move(grads.input)};
      append_param_grads(out, std::move(grads.params));
      return out;
    };
    return p;
  });
}

}  // namespace sau
