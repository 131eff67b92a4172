#include "sau/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "kernels/gemm.hpp"

namespace sau {

namespace {

using kernels::Im2ColGeometry;

template <typename T>
void check_conv_inputs(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, const ConvSpec& spec,
                       const Shape& expected_w, const char* what) {
  require_rank4(x, what);
  if (spec.stride < 1) throw ShapeError(std::string(what) + ": stride must be >= 1");
  if (spec.padding < 0) throw ShapeError(std::string(what) + ": padding must be >= 0");
  if (x.c() != spec.in_channels) {
    throw ShapeError(std::string(what) + ": input has " + std::to_string(x.c()) + " channels, spec expects " +
                     std::to_string(spec.in_channels));
  }
  if (w.shape() != expected_w) {
    throw ShapeError(std::string(what) + ": weight shape " + to_string(w.shape()) + " does not match spec " +
                     to_string(expected_w));
  }
  if (spec.has_bias) {
    if (bias == nullptr || bias->shape() != Shape{spec.out_channels}) {
      throw ShapeError(std::string(what) + ": bias must have shape [" + std::to_string(spec.out_channels) + "]");
    }
  }
  require_finite(x, what);
}

Im2ColGeometry conv_geometry(const ConvSpec& spec, int channels, int h, int w, int out_h, int out_w) {
  return Im2ColGeometry{channels, h, w, spec.kernel_h, spec.kernel_w, spec.stride, spec.padding, out_h, out_w};
}

bool is_pointwise(const ConvSpec& spec) {
  return spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1 && spec.padding == 0;
}

}  // namespace

// conv2d ------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias, const ConvSpec& spec) {
  check_conv_inputs(x, weight, bias, spec, spec.weight_shape(), "conv2d");
  const int out_h = spec.out_h(x.h());
  const int out_w = spec.out_w(x.w());
  if (out_h < 1 || out_w < 1) throw ShapeError("conv2d: kernel larger than padded input " + to_string(x.shape()));

  const int batch = x.n();
  const int K = spec.in_channels * spec.kernel_h * spec.kernel_w;
  const int P = out_h * out_w;
  Tensor<T> y({batch, spec.out_channels, out_h, out_w});
  const auto geom = conv_geometry(spec, x.c(), x.h(), x.w(), out_h, out_w);
  std::vector<T> col(is_pointwise(spec) ? 0 : static_cast<std::size_t>(K) * P);

  for (int n = 0; n < batch; ++n) {
    const T* img = x.data() + x.offset(n, 0, 0, 0);
    const T* cols = img;
    if (!is_pointwise(spec)) {
      kernels::im2col(geom, img, col.data());
      cols = col.data();
    }
    T* out = y.data() + y.offset(n, 0, 0, 0);
    kernels::gemm_nn(spec.out_channels, P, K, weight.data(), K, cols, P, out, P, false);
    if (spec.has_bias) {
      for (int co = 0; co < spec.out_channels; ++co) {
        const T b = (*bias)[static_cast<std::size_t>(co)];
        T* plane = out + static_cast<std::size_t>(co) * P;
        for (int p = 0; p < P; ++p) plane[p] += b;
      }
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const ConvSpec& spec,
                             const Tensor<T>& grad_out) {
  require_rank4(grad_out, "conv2d_backward");
  const int out_h = spec.out_h(x.h());
  const int out_w = spec.out_w(x.w());
  if (grad_out.shape() != Shape{x.n(), spec.out_channels, out_h, out_w}) {
    throw ShapeError("conv2d_backward: upstream gradient shape " + to_string(grad_out.shape()) + " is inconsistent");
  }
  const int batch = x.n();
  const int K = spec.in_channels * spec.kernel_h * spec.kernel_w;
  const int P = out_h * out_w;
  const auto geom = conv_geometry(spec, x.c(), x.h(), x.w(), out_h, out_w);

  ConvGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), {}};
  if (spec.has_bias) g.bias = Tensor<T>({spec.out_channels});

  std::vector<T> col(static_cast<std::size_t>(K) * P);
  std::vector<T> scratch;
  const bool pointwise = is_pointwise(spec);
  for (int n = 0; n < batch; ++n) {
    const T* gy = grad_out.data() + grad_out.offset(n, 0, 0, 0);
    const T* img = x.data() + x.offset(n, 0, 0, 0);
    const T* cols = img;
    if (!pointwise) {
      kernels::im2col(geom, img, col.data());
      cols = col.data();
    }
    // dW += gy[Cout x P] * cols^T
    kernels::gemm_nt(spec.out_channels, K, P, gy, P, cols, g.weight.data(), K, true, scratch);
    // dcols = W^T * gy
    T* gx = g.input.data() + g.input.offset(n, 0, 0, 0);
    if (pointwise) {
      kernels::gemm_tn(K, P, spec.out_channels, weight.data(), K, gy, P, gx, P, false);
    } else {
      kernels::gemm_tn(K, P, spec.out_channels, weight.data(), K, gy, P, col.data(), P, false);
      kernels::col2im(geom, col.data(), gx, false);
    }
    if (spec.has_bias) {
      for (int co = 0; co < spec.out_channels; ++co) {
        const T* plane = gy + static_cast<std::size_t>(co) * P;
        T acc = 0;
        for (int p = 0; p < P; ++p) acc += plane[p];
        g.bias[static_cast<std::size_t>(co)] += acc;
      }
    }
  }
  return g;
}

// transpose_conv2d ----------------------------------------------------------------

template <typename T>
Tensor<T> transpose_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias,
                           const ConvSpec& spec) {
  check_conv_inputs(x, weight, bias, spec, spec.transpose_weight_shape(), "transpose_conv2d");
  if (spec.output_padding < 0 || spec.output_padding >= spec.stride) {
    throw ShapeError("transpose_conv2d: output_padding must lie in [0, stride)");
  }
  const int out_h = spec.transpose_out_h(x.h());
  const int out_w = spec.transpose_out_w(x.w());
  if (out_h < 1 || out_w < 1) throw ShapeError("transpose_conv2d: empty output for input " + to_string(x.shape()));

  const int batch = x.n();
  const int cin = spec.in_channels;
  const int KO = spec.out_channels * spec.kernel_h * spec.kernel_w;
  const int P = x.h() * x.w();
  // The output image is read by the forward-conv geometry whose positions are the input pixels.
  const auto geom = conv_geometry(spec, spec.out_channels, out_h, out_w, x.h(), x.w());
  Tensor<T> y({batch, spec.out_channels, out_h, out_w});
  std::vector<T> col(static_cast<std::size_t>(KO) * P);
  for (int n = 0; n < batch; ++n) {
    const T* xin = x.data() + x.offset(n, 0, 0, 0);
    kernels::gemm_tn(KO, P, cin, weight.data(), KO, xin, P, col.data(), P, false);
    T* out = y.data() + y.offset(n, 0, 0, 0);
    kernels::col2im(geom, col.data(), out, false);
    if (spec.has_bias) {
      const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
      for (int co = 0; co < spec.out_channels; ++co) {
        const T b = (*bias)[static_cast<std::size_t>(co)];
        T* p = out + co * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] += b;
      }
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> transpose_conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const ConvSpec& spec,
                                       const Tensor<T>& grad_out) {
  const int out_h = spec.transpose_out_h(x.h());
  const int out_w = spec.transpose_out_w(x.w());
  if (grad_out.shape() != Shape{x.n(), spec.out_channels, out_h, out_w}) {
    throw ShapeError("transpose_conv2d_backward: upstream gradient shape " + to_string(grad_out.shape()) +
                     " is inconsistent");
  }
  const int batch = x.n();
  const int cin = spec.in_channels;
  const int KO = spec.out_channels * spec.kernel_h * spec.kernel_w;
  const int P = x.h() * x.w();
  const auto geom = conv_geometry(spec, spec.out_channels, out_h, out_w, x.h(), x.w());

  ConvGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), {}};
  if (spec.has_bias) g.bias = Tensor<T>({spec.out_channels});
  std::vector<T> col(static_cast<std::size_t>(KO) * P);
  std::vector<T> scratch;
  for (int n = 0; n < batch; ++n) {
    const T* gy = grad_out.data() + grad_out.offset(n, 0, 0, 0);
    kernels::im2col(geom, gy, col.data());
    // dx = W[Cin x KO] * col
    kernels::gemm_nn(cin, P, KO, weight.data(), KO, col.data(), P, g.input.data() + g.input.offset(n, 0, 0, 0), P,
                     false);
    // dW += x[Cin x P] * col^T
    kernels::gemm_nt(cin, KO, P, x.data() + x.offset(n, 0, 0, 0), P, col.data(), g.weight.data(), KO, true,
                     scratch);
    if (spec.has_bias) {
      const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
      for (int co = 0; co < spec.out_channels; ++co) {
        const T* p = gy + co * plane;
        T acc = 0;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
        g.bias[static_cast<std::size_t>(co)] += acc;
      }
    }
  }
  return g;
}

// instance_norm -------------------------------------------------------------------

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  require_rank4(x, "instance_norm");
  if (gamma.shape() != Shape{x.c()} || beta.shape() != Shape{x.c()}) {
    throw ShapeError("instance_norm: gamma/beta must have shape [" + std::to_string(x.c()) + "]");
  }
  if (!(eps > 0)) throw ShapeError("instance_norm: eps must be positive");
  Tensor<T> y(x.shape());
  const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
  const int slices = x.n() * x.c();
#pragma omp parallel for schedule(static) if (slices * plane > 16384)
  for (int s = 0; s < slices; ++s) {
    const int c = s % x.c();
    const T* src = x.data() + s * plane;
    T* dst = y.data() + s * plane;
    double m = 0;
    for (std::size_t i = 0; i < plane; ++i) m += src[i];
    m /= static_cast<double>(plane);
    double v = 0;
    for (std::size_t i = 0; i < plane; ++i) v += (src[i] - m) * (src[i] - m);
    v /= static_cast<double>(plane);
    const double inv = 1.0 / std::sqrt(v + eps);
    const double gm = gamma[static_cast<std::size_t>(c)];
    const double bt = beta[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>((src[i] - m) * inv * gm + bt);
  }
  return y;
}

template <typename T>
InstanceNormGrads<T> instance_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& grad_out,
                                            double eps) {
  require_same_shape(x, grad_out, "instance_norm_backward");
  InstanceNormGrads<T> g{Tensor<T>(x.shape()), Tensor<T>({x.c()}), Tensor<T>({x.c()})};
  const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
  const int slices = x.n() * x.c();
  std::vector<double> dgamma(static_cast<std::size_t>(slices)), dbeta(static_cast<std::size_t>(slices));
#pragma omp parallel for schedule(static) if (slices * plane > 16384)
  for (int s = 0; s < slices; ++s) {
    const int c = s % x.c();
    const T* src = x.data() + s * plane;
    const T* gy = grad_out.data() + s * plane;
    T* gx = g.input.data() + s * plane;
    double m = 0;
    for (std::size_t i = 0; i < plane; ++i) m += src[i];
    m /= static_cast<double>(plane);
    double v = 0;
    for (std::size_t i = 0; i < plane; ++i) v += (src[i] - m) * (src[i] - m);
    v /= static_cast<double>(plane);
    const double inv = 1.0 / std::sqrt(v + eps);
    const double gm = gamma[static_cast<std::size_t>(c)];
    double sum_g = 0, sum_gx = 0, dg = 0, db = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double xhat = (src[i] - m) * inv;
      sum_g += gy[i] * gm;
      sum_gx += gy[i] * gm * xhat;
      dg += gy[i] * xhat;
      db += gy[i];
    }
    const double mean_g = sum_g / static_cast<double>(plane);
    const double mean_gx = sum_gx / static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      const double xhat = (src[i] - m) * inv;
      gx[i] = static_cast<T>(inv * (gy[i] * gm - mean_g - xhat * mean_gx));
    }
    dgamma[static_cast<std::size_t>(s)] = dg;
    dbeta[static_cast<std::size_t>(s)] = db;
  }
  for (int s = 0; s < slices; ++s) {
    const auto c = static_cast<std::size_t>(s % x.c());
    g.gamma[c] += static_cast<T>(dgamma[static_cast<std::size_t>(s)]);
    g.beta[c] += static_cast<T>(dbeta[static_cast<std::size_t>(s)]);
  }
  return g;
}

// pointwise -------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  require_same_shape(x, grad_out, "relu_backward");
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > T(0) ? grad_out[i] : T(0);
  return g;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope) {
  Tensor<T> y(x.shape());
  const T a = static_cast<T>(slope);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : a * x[i];
  return y;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, double slope, const Tensor<T>& grad_out) {
  require_same_shape(x, grad_out, "leaky_relu_backward");
  Tensor<T> g(x.shape());
  const T a = static_cast<T>(slope);
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > T(0) ? grad_out[i] : a * grad_out[i];
  return g;
}

template <typename T>
Tensor<T> elementwise(Elementwise op, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "elementwise");
  Tensor<T> y(a.shape());
  switch (op) {
    case Elementwise::add:
      for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
      break;
    case Elementwise::sub:
      for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] - b[i];
      break;
    case Elementwise::mul:
      for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
      break;
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> elementwise_backward(Elementwise op, const Tensor<T>& a, const Tensor<T>& b,
                                                     const Tensor<T>& grad_out) {
  require_same_shape(a, b, "elementwise_backward");
  require_same_shape(a, grad_out, "elementwise_backward");
  switch (op) {
    case Elementwise::add:
      return {grad_out, grad_out};
    case Elementwise::sub:
      return {grad_out, scale(grad_out, T(-1))};
    case Elementwise::mul:
      return {mul(grad_out, b), mul(grad_out, a)};
  }
  return {};
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * factor;
  return y;
}

template <typename T>
void accumulate(Tensor<T>& acc, const Tensor<T>& g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  require_same_shape(acc, g, "accumulate");
  for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
}

// channel ops -----------------------------------------------------------------------

template <typename T>
Tensor<T> channel_softmax(const Tensor<T>& x) {
  require_rank4(x, "channel_softmax");
  Tensor<T> y(x.shape());
  const int C = x.c();
  const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
  const std::size_t cstride = plane;
#pragma omp parallel for schedule(static) if (x.size() > 65536)
  for (int n = 0; n < x.n(); ++n) {
    const T* src = x.data() + x.offset(n, 0, 0, 0);
    T* dst = y.data() + y.offset(n, 0, 0, 0);
    for (std::size_t p = 0; p < plane; ++p) {
      T m = src[p];
      for (int c = 1; c < C; ++c) m = std::max(m, src[c * cstride + p]);
      T total = 0;
      for (int c = 0; c < C; ++c) {
        const T e = std::exp(src[c * cstride + p] - m);
        dst[c * cstride + p] = e;
        total += e;
      }
      const T inv = T(1) / total;
      for (int c = 0; c < C; ++c) dst[c * cstride + p] *= inv;
    }
  }
  return y;
}

template <typename T>
Tensor<T> channel_softmax_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  require_same_shape(y, grad_out, "channel_softmax_backward");
  Tensor<T> g(y.shape());
  const int C = y.c();
  const std::size_t plane = static_cast<std::size_t>(y.h()) * y.w();
  for (int n = 0; n < y.n(); ++n) {
    const std::size_t base = y.offset(n, 0, 0, 0);
    for (std::size_t p = 0; p < plane; ++p) {
      T dot = 0;
      for (int c = 0; c < C; ++c) dot += y[base + c * plane + p] * grad_out[base + c * plane + p];
      for (int c = 0; c < C; ++c) {
        const std::size_t i = base + c * plane + p;
        g[i] = y[i] * (grad_out[i] - dot);
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int s) {
  require_rank4(x, "pixel_shuffle");
  if (s < 1 || x.c() % (s * s) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(x.c()) + " not divisible by s^2 for s=" +
                     std::to_string(s));
  }
  const int C = x.c() / (s * s);
  Tensor<T> y({x.n(), C, x.h() * s, x.w() * s});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < C; ++c)
      for (int dh = 0; dh < s; ++dh)
        for (int dw = 0; dw < s; ++dw) {
          const int src_c = c * s * s + dh * s + dw;
          for (int h = 0; h < x.h(); ++h)
            for (int w = 0; w < x.w(); ++w) y.at(n, c, h * s + dh, w * s + dw) = x.at(n, src_c, h, w);
        }
  return y;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int s) {
  require_rank4(x, "pixel_unshuffle");
  if (s < 1 || x.h() % s != 0 || x.w() % s != 0) {
    throw ShapeError("pixel_unshuffle: extents " + to_string(x.shape()) + " not divisible by s=" + std::to_string(s));
  }
  const int H = x.h() / s;
  const int W = x.w() / s;
  Tensor<T> y({x.n(), x.c() * s * s, H, W});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int dh = 0; dh < s; ++dh)
        for (int dw = 0; dw < s; ++dw) {
          const int dst_c = c * s * s + dh * s + dw;
          for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) y.at(n, dst_c, h, w) = x.at(n, c, h * s + dh, w * s + dw);
        }
  return y;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Tensor<T>& first = *parts.front();
  require_rank4(first, "concat_channels");
  int total = 0;
  for (const auto* p : parts) {
    require_rank4(*p, "concat_channels");
    if (p->n() != first.n() || p->h() != first.h() || p->w() != first.w()) {
      throw ShapeError("concat_channels: mismatched extents " + to_string(p->shape()) + " vs " +
                       to_string(first.shape()));
    }
    total += p->c();
  }
  Tensor<T> y({first.n(), total, first.h(), first.w()});
  const std::size_t plane = static_cast<std::size_t>(first.h()) * first.w();
  for (int n = 0; n < first.n(); ++n) {
    T* dst = y.data() + y.offset(n, 0, 0, 0);
    for (const auto* p : parts) {
      const T* src = p->data() + p->offset(n, 0, 0, 0);
      dst = std::copy(src, src + p->c() * plane, dst);
    }
  }
  return y;
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, const std::vector<int>& sizes) {
  require_rank4(x, "split_channels");
  int total = 0;
  for (const int s : sizes) total += s;
  if (total != x.c()) throw ShapeError("split_channels: sizes do not sum to channel count");
  std::vector<Tensor<T>> out;
  int begin = 0;
  for (const int s : sizes) {
    out.push_back(slice_channels(x, begin, s));
    begin += s;
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int begin, int count) {
  require_rank4(x, "slice_channels");
  if (begin < 0 || count < 1 || begin + count > x.c()) throw ShapeError("slice_channels: range out of bounds");
  Tensor<T> y({x.n(), count, x.h(), x.w()});
  const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
  for (int n = 0; n < x.n(); ++n) {
    const T* src = x.data() + x.offset(n, begin, 0, 0);
    std::copy(src, src + count * plane, y.data() + y.offset(n, 0, 0, 0));
  }
  return y;
}

// resampling ------------------------------------------------------------------------

template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& x, int s) {
  require_rank4(x, "nearest_upsample");
  if (s < 1) throw ShapeError("nearest_upsample: scale must be >= 1");
  const int H = x.h() * s;
  const int W = x.w() * s;
  Tensor<T> y({x.n(), x.c(), H, W});
  const int slices = x.n() * x.c();
#pragma omp parallel for schedule(static) if (y.size() > 65536)
  for (int sl = 0; sl < slices; ++sl) {
    const T* src = x.data() + static_cast<std::size_t>(sl) * x.h() * x.w();
    T* dst = y.data() + static_cast<std::size_t>(sl) * H * W;
    for (int i = 0; i < H; ++i) {
      const T* srow = src + static_cast<std::size_t>(i / s) * x.w();
      T* drow = dst + static_cast<std::size_t>(i) * W;
      for (int j = 0; j < W; ++j) drow[j] = srow[j / s];
    }
  }
  return y;
}

template <typename T>
Tensor<T> nearest_upsample_backward(const Tensor<T>& grad_out, int s) {
  require_rank4(grad_out, "nearest_upsample_backward");
  if (s < 1 || grad_out.h() % s || grad_out.w() % s) {
    throw ShapeError("nearest_upsample_backward: extents not divisible by scale");
  }
  const int h = grad_out.h() / s;
  const int w = grad_out.w() / s;
  Tensor<T> g({grad_out.n(), grad_out.c(), h, w});
  for (int n = 0; n < grad_out.n(); ++n)
    for (int c = 0; c < grad_out.c(); ++c)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          T acc = 0;
          for (int di = 0; di < s; ++di)
            for (int dj = 0; dj < s; ++dj) acc += grad_out.at(n, c, i * s + di, j * s + dj);
          g.at(n, c, i, j) = acc;
        }
  return g;
}

template <typename T>
Tensor<T> unfold(const Tensor<T>& x, int k) {
  require_rank4(x, "unfold");
  if (k < 1 || k % 2 == 0) throw ShapeError("unfold: kernel size must be odd, got " + std::to_string(k));
  const int r = k / 2;
  const int H = x.h();
  const int W = x.w();
  Tensor<T> y({x.n(), x.c() * k * k, H, W});
  const int slices = x.n() * x.c();
#pragma omp parallel for schedule(static) if (y.size() > 65536)
  for (int sl = 0; sl < slices; ++sl) {
    const int n = sl / x.c();
    const int c = sl % x.c();
    for (int p = -r; p <= r; ++p)
      for (int q = -r; q <= r; ++q) {
        const int tap = (p + r) * k + (q + r);
        T* dst = y.data() + y.offset(n, c * k * k + tap, 0, 0);
        for (int i = 0; i < H; ++i) {
          const int si = i + p;
          for (int j = 0; j < W; ++j) {
            const int sj = j + q;
            dst[static_cast<std::size_t>(i) * W + j] =
                (si >= 0 && si < H && sj >= 0 && sj < W) ? x.at(n, c, si, sj) : T(0);
          }
        }
      }
  }
  return y;
}

template <typename T>
Tensor<T> fold(const Tensor<T>& cols, int k) {
  require_rank4(cols, "fold");
  if (k < 1 || k % 2 == 0 || cols.c() % (k * k) != 0) throw ShapeError("fold: invalid kernel size or channels");
  const int r = k / 2;
  const int C = cols.c() / (k * k);
  const int H = cols.h();
  const int W = cols.w();
  Tensor<T> x({cols.n(), C, H, W});
  for (int n = 0; n < cols.n(); ++n)
    for (int c = 0; c < C; ++c)
      for (int p = -r; p <= r; ++p)
        for (int q = -r; q <= r; ++q) {
          const int tap = (p + r) * k + (q + r);
          for (int i = 0; i < H; ++i) {
            const int si = i + p;
            if (si < 0 || si >= H) continue;
            for (int j = 0; j < W; ++j) {
              const int sj = j + q;
              if (sj >= 0 && sj < W) x.at(n, c, si, sj) += cols.at(n, c * k * k + tap, i, j);
            }
          }
        }
  return x;
}

namespace {

struct Taps {
  std::array<int, 4> index{};
  std::array<double, 4> weight{};
  int count = 0;
};

double source_coordinate(int out_index, int s, int in_extent) {
  const double src = (out_index + 0.5) / s - 0.5;
  return std::clamp(src, 0.0, static_cast<double>(in_extent - 1));
}

std::vector<Taps> bilinear_taps(int in_extent, int s) {
  std::vector<Taps> taps(static_cast<std::size_t>(in_extent) * s);
  for (int o = 0; o < in_extent * s; ++o) {
    const double src = source_coordinate(o, s, in_extent);
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in_extent - 1);
    const double t = src - i0;
    auto& tp = taps[static_cast<std::size_t>(o)];
    tp.count = 2;
    tp.index = {i0, i1, 0, 0};
    tp.weight = {1.0 - t, t, 0.0, 0.0};
  }
  return taps;
}

double cubic_weight(double x) {
  constexpr double a = -0.75;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

std::vector<Taps> bicubic_taps(int in_extent, int s) {
  std::vector<Taps> taps(static_cast<std::size_t>(in_extent) * s);
  for (int o = 0; o < in_extent * s; ++o) {
    const double src = source_coordinate(o, s, in_extent);
    const int i0 = static_cast<int>(std::floor(src));
    const double t = src - i0;
    auto& tp = taps[static_cast<std::size_t>(o)];
    tp.count = 4;
    for (int m = 0; m < 4; ++m) {
      tp.index[static_cast<std::size_t>(m)] = std::clamp(i0 - 1 + m, 0, in_extent - 1);
      tp.weight[static_cast<std::size_t>(m)] = cubic_weight(t - (m - 1));
    }
  }
  return taps;
}

/// Separable resampling: rows then columns, each output pixel a fixed tap sum.
template <typename T>
Tensor<T> separable_forward(const Tensor<T>& x, int s, const std::vector<Taps>& th, const std::vector<Taps>& tw) {
  const int H = x.h() * s;
  const int W = x.w() * s;
  Tensor<T> y({x.n(), x.c(), H, W});
  const int slices = x.n() * x.c();
  std::vector<double> tmp(static_cast<std::size_t>(x.h()) * W);
  for (int sl = 0; sl < slices; ++sl) {
    const T* src = x.data() + static_cast<std::size_t>(sl) * x.h() * x.w();
    T* dst = y.data() + static_cast<std::size_t>(sl) * H * W;
    for (int i = 0; i < x.h(); ++i)
      for (int j = 0; j < W; ++j) {
        const auto& tp = tw[static_cast<std::size_t>(j)];
        double acc = 0;
        for (int m = 0; m < tp.count; ++m) acc += tp.weight[m] * src[static_cast<std::size_t>(i) * x.w() + tp.index[m]];
        tmp[static_cast<std::size_t>(i) * W + j] = acc;
      }
    for (int i = 0; i < H; ++i) {
      const auto& tp = th[static_cast<std::size_t>(i)];
      for (int j = 0; j < W; ++j) {
        double acc = 0;
        for (int m = 0; m < tp.count; ++m) acc += tp.weight[m] * tmp[static_cast<std::size_t>(tp.index[m]) * W + j];
        dst[static_cast<std::size_t>(i) * W + j] = static_cast<T>(acc);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> separable_backward(const Tensor<T>& gy, int s, const std::vector<Taps>& th, const std::vector<Taps>& tw) {
  const int h = gy.h() / s;
  const int w = gy.w() / s;
  const int H = gy.h();
  const int W = gy.w();
  Tensor<T> gx({gy.n(), gy.c(), h, w});
  const int slices = gy.n() * gy.c();
  std::vector<double> tmp(static_cast<std::size_t>(h) * W);
  std::vector<double> acc(static_cast<std::size_t>(h) * w);
  for (int sl = 0; sl < slices; ++sl) {
    const T* src = gy.data() + static_cast<std::size_t>(sl) * H * W;
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (int i = 0; i < H; ++i) {
      const auto& tp = th[static_cast<std::size_t>(i)];
      for (int m = 0; m < tp.count; ++m)
        for (int j = 0; j < W; ++j)
          tmp[static_cast<std::size_t>(tp.index[m]) * W + j] += tp.weight[m] * src[static_cast<std::size_t>(i) * W + j];
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < W; ++j) {
        const auto& tp = tw[static_cast<std::size_t>(j)];
        for (int m = 0; m < tp.count; ++m)
          acc[static_cast<std::size_t>(i) * w + tp.index[m]] += tp.weight[m] * tmp[static_cast<std::size_t>(i) * W + j];
      }
    T* dst = gx.data() + static_cast<std::size_t>(sl) * h * w;
    for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<T>(acc[i]);
  }
  return gx;
}

void check_upsample_grad(const Shape& shape, int s, const char* what) {
  if (shape.size() != 4) throw ShapeError(std::string(what) + ": expected rank-4 gradient");
  if (s < 1 || shape[2] % s || shape[3] % s) throw ShapeError(std::string(what) + ": extents not divisible by scale");
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int s) {
  require_rank4(x, "bilinear_upsample");
  if (s < 1) throw ShapeError("bilinear_upsample: scale must be >= 1");
  return separable_forward(x, s, bilinear_taps(x.h(), s), bilinear_taps(x.w(), s));
}

template <typename T>
Tensor<T> bilinear_upsample_backward(const Tensor<T>& grad_out, int s) {
  check_upsample_grad(grad_out.shape(), s, "bilinear_upsample_backward");
  return separable_backward(grad_out, s, bilinear_taps(grad_out.h() / s, s), bilinear_taps(grad_out.w() / s, s));
}

template <typename T>
Tensor<T> bicubic_upsample(const Tensor<T>& x, int s) {
  require_rank4(x, "bicubic_upsample");
  if (s < 1) throw ShapeError("bicubic_upsample: scale must be >= 1");
  return separable_forward(x, s, bicubic_taps(x.h(), s), bicubic_taps(x.w(), s));
}

template <typename T>
Tensor<T> bicubic_upsample_backward(const Tensor<T>& grad_out, int s) {
  check_upsample_grad(grad_out.shape(), s, "bicubic_upsample_backward");
  return separable_backward(grad_out, s, bicubic_taps(grad_out.h() / s, s), bicubic_taps(grad_out.w() / s, s));
}

template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, int f) {
  require_rank4(x, "avg_pool");
  if (f < 1 || x.h() % f || x.w() % f) throw ShapeError("avg_pool: extents not divisible by pool factor");
  const int h = x.h() / f;
  const int w = x.w() / f;
  Tensor<T> y({x.n(), x.c(), h, w});
  const T inv = T(1) / static_cast<T>(f * f);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          T acc = 0;
          for (int di = 0; di < f; ++di)
            for (int dj = 0; dj < f; ++dj) acc += x.at(n, c, i * f + di, j * f + dj);
          y.at(n, c, i, j) = acc * inv;
        }
  return y;
}

template <typename T>
Tensor<T> avg_pool_backward(const Tensor<T>& grad_out, int f) {
  require_rank4(grad_out, "avg_pool_backward");
  const T inv = T(1) / static_cast<T>(f * f);
  return scale(nearest_upsample(grad_out, f), inv);
}

// dense -------------------------------------------------------------------------------

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || weight.dim(1) != x.dim(1) || bias.shape() != Shape{weight.dim(0)}) {
    throw ShapeError("linear: incompatible shapes x=" + to_string(x.shape()) + " W=" + to_string(weight.shape()) +
                     " b=" + to_string(bias.shape()));
  }
  const int N = x.dim(0);
  const int in = x.dim(1);
  const int out = weight.dim(0);
  Tensor<T> y({N, out});
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < out; ++o) {
      T acc = bias[static_cast<std::size_t>(o)];
      for (int i = 0; i < in; ++i) acc += weight[static_cast<std::size_t>(o) * in + i] * x[static_cast<std::size_t>(n) * in + i];
      y[static_cast<std::size_t>(n) * out + o] = acc;
    }
  return y;
}

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out) {
  const int N = x.dim(0);
  const int in = x.dim(1);
  const int out = weight.dim(0);
  if (grad_out.shape() != Shape{N, out}) throw ShapeError("linear_backward: upstream gradient shape mismatch");
  LinearGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), Tensor<T>({out})};
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < out; ++o) {
      const T go = grad_out[static_cast<std::size_t>(n) * out + o];
      g.bias[static_cast<std::size_t>(o)] += go;
      for (int i = 0; i < in; ++i) {
        g.weight[static_cast<std::size_t>(o) * in + i] += go * x[static_cast<std::size_t>(n) * in + i];
        g.input[static_cast<std::size_t>(n) * in + i] += go * weight[static_cast<std::size_t>(o) * in + i];
      }
    }
  return g;
}

template <typename T>
double sum(const Tensor<T>& x) {
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
  return acc;
}

#define SAU_INSTANTIATE_OPS(T)                                                                                  \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, const ConvSpec&);            \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const ConvSpec&, const Tensor<T>&); \
  template Tensor<T> transpose_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, const ConvSpec&);  \
  template ConvGrads<T> transpose_conv2d_backward(const Tensor<T>&, const Tensor<T>&, const ConvSpec&,          \
                                                  const Tensor<T>&);                                            \
  template Tensor<T> instance_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);              \
  template InstanceNormGrads<T> instance_norm_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                                       double);                                                 \
  template Tensor<T> relu(const Tensor<T>&);                                                                    \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> leaky_relu(const Tensor<T>&, double);                                                      \
  template Tensor<T> leaky_relu_backward(const Tensor<T>&, double, const Tensor<T>&);                           \
  template Tensor<T> elementwise(Elementwise, const Tensor<T>&, const Tensor<T>&);                              \
  template std::pair<Tensor<T>, Tensor<T>> elementwise_backward(Elementwise, const Tensor<T>&, const Tensor<T>&, \
                                                                const Tensor<T>&);                              \
  template Tensor<T> scale(const Tensor<T>&, T);                                                                \
  template void accumulate(Tensor<T>&, const Tensor<T>&);                                                       \
  template Tensor<T> channel_softmax(const Tensor<T>&);                                                         \
  template Tensor<T> channel_softmax_backward(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, int);                                                      \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, int);                                                    \
  template Tensor<T> concat_channels(const std::vector<const Tensor<T>*>&);                                     \
  template std::vector<Tensor<T>> split_channels(const Tensor<T>&, const std::vector<int>&);                    \
  template Tensor<T> slice_channels(const Tensor<T>&, int, int);                                                \
  template Tensor<T> nearest_upsample(const Tensor<T>&, int);                                                   \
  template Tensor<T> nearest_upsample_backward(const Tensor<T>&, int);                                          \
  template Tensor<T> unfold(const Tensor<T>&, int);                                                             \
  template Tensor<T> fold(const Tensor<T>&, int);                                                               \
  template Tensor<T> bilinear_upsample(const Tensor<T>&, int);                                                  \
  template Tensor<T> bilinear_upsample_backward(const Tensor<T>&, int);                                         \
  template Tensor<T> bicubic_upsample(const Tensor<T>&, int);                                                   \
  template Tensor<T> bicubic_upsample_backward(const Tensor<T>&, int);                                          \
  template Tensor<T> avg_pool(const Tensor<T>&, int);                                                           \
  template Tensor<T> avg_pool_backward(const Tensor<T>&, int);                                                  \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                              \
  template LinearGrads<T> linear_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template double sum(const Tensor<T>&);

SAU_INSTANTIATE_OPS(float)
SAU_INSTANTIATE_OPS(double)

}  // namespace sau
