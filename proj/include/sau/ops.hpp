#pragma once

#include <type_traits>
#include <utility>
#include <vector>

#include "sau/tensor.hpp"

namespace sau {

/// Geometry of a 2-D convolution. Output extent is floor((in + 2*pad - k) / stride) + 1.
/// For a transposed convolution the roles flip: out = (in - 1) * stride - 2 * pad + k + output_padding.
struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int padding = 0;
  bool has_bias = true;
  int output_padding = 0;  // transposed convolution only; must be < stride

  static ConvSpec square(int in, int out, int k, int stride = 1, int padding = 0, bool bias = true) {
    return ConvSpec{in, out, k, k, stride, padding, bias, 0};
  }

  int out_h(int in_h) const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  int out_w(int in_w) const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
  int transpose_out_h(int in_h) const { return (in_h - 1) * stride - 2 * padding + kernel_h + output_padding; }
  int transpose_out_w(int in_w) const { return (in_w - 1) * stride - 2 * padding + kernel_w + output_padding; }

  /// Conv weight extents: Cout x Cin x kh x kw.
  Shape weight_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }
  /// Transposed-conv weight extents: Cin x Cout x kh x kw (the adjoint layout of conv2d).
  Shape transpose_weight_shape() const { return {in_channels, out_channels, kernel_h, kernel_w}; }
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;  // empty when the spec has no bias
};

// Convolution -----------------------------------------------------------------

/// Cross-correlation with symmetric zero padding. `bias` may be null when spec.has_bias is false.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias, const ConvSpec& spec);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const ConvSpec& spec,
                             const Tensor<T>& grad_out);

/// Scatter-accumulate (gradient-of-conv2d) convolution. Weight is Cin x Cout x kh x kw.
template <typename T>
Tensor<T> transpose_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias,
                           const ConvSpec& spec);

template <typename T>
ConvGrads<T> transpose_conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const ConvSpec& spec,
                                       const Tensor<T>& grad_out);

// Normalization -----------------------------------------------------------------

constexpr double kInstanceNormEps = 1e-5;

/// Per (n, c) slice: (x - mean) / sqrt(var + eps) * gamma + beta, population variance.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                        double eps = kInstanceNormEps);

template <typename T>
struct InstanceNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
InstanceNormGrads<T> instance_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& grad_out,
                                            double eps = kInstanceNormEps);

// Pointwise ---------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope);
template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, double slope, const Tensor<T>& grad_out);

enum class Elementwise { add, sub, mul };

/// Equal shapes only; there is no broadcasting.
template <typename T>
Tensor<T> elementwise(Elementwise op, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> elementwise_backward(Elementwise op, const Tensor<T>& a, const Tensor<T>& b,
                                                     const Tensor<T>& grad_out);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(Elementwise::add, a, b);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(Elementwise::sub, a, b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(Elementwise::mul, a, b);
}

/// Explicit scalar-times-tensor.
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// In-place accumulation into an existing gradient buffer; `acc` may be empty.
template <typename T>
void accumulate(Tensor<T>& acc, const Tensor<T>& g);

// Channel ops -------------------------------------------------------------------

/// Per-pixel softmax over the channel axis with max subtraction.
template <typename T>
Tensor<T> channel_softmax(const Tensor<T>& x);

/// Takes the softmax output, not the logits.
template <typename T>
Tensor<T> channel_softmax_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

/// out(n, c, h*s + dh, w*s + dw) = in(n, c*s*s + dh*s + dw, h, w).
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int s);

/// Inverse of pixel_shuffle; also its backward.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int s);

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts);

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, const std::vector<int>& sizes);

/// Channel slice [begin, begin + count).
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int begin, int count);

// Spatial resampling ------------------------------------------------------------

/// out(n, c, i, j) = in(n, c, i / s, j / s).
template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& x, int s);

/// Adjoint of nearest_upsample: sums each s x s block.
template <typename T>
Tensor<T> nearest_upsample_backward(const Tensor<T>& grad_out, int s);

/// k x k neighbourhood gather into the channel axis:
/// out(n, c*k*k + (p + k/2)*k + (q + k/2), i, j) = x(n, c, i + p, j + q), zero outside bounds.
template <typename T>
Tensor<T> unfold(const Tensor<T>& x, int k);

/// Adjoint of unfold (scatter-add back onto the image).
template <typename T>
Tensor<T> fold(const Tensor<T>& cols, int k);

// Interpolation uses align-corners=false: source coordinate (i' + 0.5) / s - 0.5 clamped to
// [0, in - 1]; taps that fall outside the image read the nearest edge pixel. Bicubic uses the
// Keys kernel with a = -0.75.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int s);
template <typename T>
Tensor<T> bilinear_upsample_backward(const Tensor<T>& grad_out, int s);

template <typename T>
Tensor<T> bicubic_upsample(const Tensor<T>& x, int s);
template <typename T>
Tensor<T> bicubic_upsample_backward(const Tensor<T>& grad_out, int s);

/// Non-overlapping f x f mean pooling; extents must be divisible by f.
template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, int f);
template <typename T>
Tensor<T> avg_pool_backward(const Tensor<T>& grad_out, int f);

// Dense -------------------------------------------------------------------------

/// y = x W^T + b with x: N x in, W: out x in, b: out.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out);

// Reductions --------------------------------------------------------------------

template <typename T>
double sum(const Tensor<T>& x);

template <typename T>
double mean(const Tensor<T>& x) {
  return sum(x) / static_cast<double>(x.size());
}

}  // namespace sau
