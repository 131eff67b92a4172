#include "sau/sau.hpp"

#include <algorithm>
#include <cmath>

namespace sau {

void SauConfig::validate() const {
  if (channels < 1 || compressed < 1) throw ShapeError("SauConfig: channel counts must be >= 1");
  if (compressed > channels) {
    throw ShapeError("SauConfig: compressed channels (" + std::to_string(compressed) + ") exceed input channels (" +
                     std::to_string(channels) + ")");
  }
  if (k < 1 || k % 2 == 0) throw ShapeError("SauConfig: k must be odd, got " + std::to_string(k));
  if (s < 1) throw ShapeError("SauConfig: s must be >= 1");
  if (kernelgen_k < 1 || kernelgen_k % 2 == 0) throw ShapeError("SauConfig: kernelgen_k must be odd");
}

template <typename T>
SauParams<T> SauParams<T>::init(const SauConfig& cfg, Rng& rng) {
  cfg.validate();
  SauParams p = zeros(cfg);
  const double std_c = std::sqrt(2.0 / cfg.channels);
  const double std_k = std::sqrt(2.0 / (cfg.compressed * cfg.kernelgen_k * cfg.kernelgen_k));
  p.compress_weight = random_normal<T>(cfg.compress_spec().weight_shape(), rng, std_c);
  p.kernelgen_weight = random_normal<T>(cfg.kernelgen_spec().weight_shape(), rng, std_k);
  return p;
}

template <typename T>
SauParams<T> SauParams<T>::zeros(const SauConfig& cfg) {
  const auto cs = cfg.compress_spec();
  const auto ks = cfg.kernelgen_spec();
  return SauParams{Tensor<T>(cs.weight_shape()), Tensor<T>({cs.out_channels}), Tensor<T>(ks.weight_shape()),
                   Tensor<T>({ks.out_channels})};
}

template <typename T>
void SauParams<T>::check(const SauConfig& cfg) const {
  cfg.validate();
  const auto cs = cfg.compress_spec();
  const auto ks = cfg.kernelgen_spec();
  if (compress_weight.shape() != cs.weight_shape() || compress_bias.shape() != Shape{cs.out_channels} ||
      kernelgen_weight.shape() != ks.weight_shape() || kernelgen_bias.shape() != Shape{ks.out_channels}) {
    throw ShapeError("SauParams: parameter shapes do not match config");
  }
}

namespace {

template <typename T>
void check_input(const Tensor<T>& f, const SauConfig& cfg, const char* what) {
  require_rank4(f, what);
  if (f.c() != cfg.channels) {
    throw ShapeError(std::string(what) + ": input has " + std::to_string(f.c()) + " channels, config expects " +
                     std::to_string(cfg.channels));
  }
}

template <typename T>
void check_kernels(const Tensor<T>& f, const KernelField<T>& kf, const SauConfig& cfg, const char* what) {
  const Shape expected{f.n(), cfg.taps(), f.h() * cfg.s, f.w() * cfg.s};
  if (kf.k != cfg.k || kf.weights.shape() != expected) {
    throw ShapeError(std::string(what) + ": kernel field " + to_string(kf.weights.shape()) + " does not match " +
                     to_string(expected));
  }
}

}  // namespace

template <typename T>
KernelField<T> sakg_forward(const Tensor<T>& f, const SauParams<T>& params, const SauConfig& cfg,
                            Tensor<T>* compressed_out) {
  check_input(f, cfg, "sakg_forward");
  params.check(cfg);
  const auto ks = cfg.kernelgen_spec();
  Tensor<T> fc = conv2d(f, params.compress_weight, &params.compress_bias, cfg.compress_spec());
  const Tensor<T> fk = conv2d(fc, params.kernelgen_weight, ks.has_bias ? &params.kernelgen_bias : nullptr, ks);
  KernelField<T> out{channel_softmax(pixel_shuffle(fk, cfg.s)), cfg.k};
  if (compressed_out) *compressed_out = std::move(fc);
  return out;
}

template <typename T>
SauGrads<T> sakg_backward(const Tensor<T>& f, const Tensor<T>& compressed, const KernelField<T>& kernels,
                          const SauParams<T>& params, const SauConfig& cfg, const Tensor<T>& grad_kernels) {
  require_same_shape(kernels.weights, grad_kernels, "sakg_backward");
  const auto ks = cfg.kernelgen_spec();
  const Tensor<T> g_fs = channel_softmax_backward(kernels.weights, grad_kernels);
  const Tensor<T> g_fk = pixel_unshuffle(g_fs, cfg.s);
  auto kg = conv2d_backward(compressed, params.kernelgen_weight, ks, g_fk);
  auto cg = conv2d_backward(f, params.compress_weight, cfg.compress_spec(), kg.input);
  SauGrads<T> g;
  g.input = std::move(cg.input);
  g.params.compress_weight = std::move(cg.weight);
  g.params.compress_bias = std::move(cg.bias);
  g.params.kernelgen_weight = std::move(kg.weight);
  g.params.kernelgen_bias = ks.has_bias ? std::move(kg.bias) : Tensor<T>({ks.out_channels});
  return g;
}

template <typename T>
Tensor<T> safu_forward(const Tensor<T>& f, const KernelField<T>& kernels, const SauConfig& cfg) {
  check_input(f, cfg, "safu_forward");
  check_kernels(f, kernels, cfg, "safu_forward");
  const int s = cfg.s;
  const int k = cfg.k;
  const int r = k / 2;
  const int C = f.c();
  const int Hs = f.h() * s;
  const int Ws = f.w() * s;
  const std::size_t plane = static_cast<std::size_t>(Hs) * Ws;
  Tensor<T> out({f.n(), C, Hs, Ws});
  const int planes = f.n() * C;

#pragma omp parallel
  {
    std::vector<T> expanded(plane);
#pragma omp for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
      const int n = pl / C;
      const T* src = f.data() + static_cast<std::size_t>(pl) * f.h() * f.w();
      for (int i = 0; i < Hs; ++i) {
        const T* srow = src + static_cast<std::size_t>(i / s) * f.w();
        T* erow = expanded.data() + static_cast<std::size_t>(i) * Ws;
        for (int j = 0; j < Ws; ++j) erow[j] = srow[j / s];
      }
      T* dst = out.data() + static_cast<std::size_t>(pl) * plane;
      const T* fn = kernels.weights.data() + kernels.weights.offset(n, 0, 0, 0);
      // Taps in unfold order; every output accumulates over taps in the same order.
      for (int p = -r; p <= r; ++p) {
        for (int q = -r; q <= r; ++q) {
          const T* wplane = fn + static_cast<std::size_t>((p + r) * k + (q + r)) * plane;
          const int j_lo = std::max(0, -q);
          const int j_hi = std::min(Ws, Ws - q);
          const int i_lo = std::max(0, -p);
          const int i_hi = std::min(Hs, Hs - p);
          for (int i = i_lo; i < i_hi; ++i) {
            const T* __restrict erow = expanded.data() + static_cast<std::size_t>(i + p) * Ws + q;
            const T* __restrict wrow = wplane + static_cast<std::size_t>(i) * Ws;
            T* __restrict orow = dst + static_cast<std::size_t>(i) * Ws;
            for (int j = j_lo; j < j_hi; ++j) orow[j] += erow[j] * wrow[j];
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
SafuGrads<T> safu_backward(const Tensor<T>& f, const KernelField<T>& kernels, const SauConfig& cfg,
                           const Tensor<T>& grad_out) {
  check_kernels(f, kernels, cfg, "safu_backward");
  const int s = cfg.s;
  const int k = cfg.k;
  const int r = k / 2;
  const int C = f.c();
  const int Hs = f.h() * s;
  const int Ws = f.w() * s;
  if (grad_out.shape() != Shape{f.n(), C, Hs, Ws}) throw ShapeError("safu_backward: upstream gradient shape mismatch");
  const std::size_t plane = static_cast<std::size_t>(Hs) * Ws;
  const Tensor<T> expanded = nearest_upsample(f, s);
  Tensor<T> g_expanded(expanded.shape());
  SafuGrads<T> g{Tensor<T>(), Tensor<T>(kernels.weights.shape())};

  // d(kernels): one thread per (n, tap) plane, channels summed in order.
  const int tap_planes = f.n() * k * k;
#pragma omp parallel for schedule(static)
  for (int tp = 0; tp < tap_planes; ++tp) {
    const int n = tp / (k * k);
    const int t = tp % (k * k);
    const int p = t / k - r;
    const int q = t % k - r;
    T* gw = g.kernels.data() + static_cast<std::size_t>(tp) * plane;
    const int j_lo = std::max(0, -q), j_hi = std::min(Ws, Ws - q);
    const int i_lo = std::max(0, -p), i_hi = std::min(Hs, Hs - p);
    for (int c = 0; c < C; ++c) {
      const T* e = expanded.data() + expanded.offset(n, c, 0, 0);
      const T* gy = grad_out.data() + grad_out.offset(n, c, 0, 0);
      for (int i = i_lo; i < i_hi; ++i) {
        const T* erow = e + static_cast<std::size_t>(i + p) * Ws + q;
        const T* grow = gy + static_cast<std::size_t>(i) * Ws;
        T* wrow = gw + static_cast<std::size_t>(i) * Ws;
        for (int j = j_lo; j < j_hi; ++j) wrow[j] += grow[j] * erow[j];
      }
    }
  }

  // d(expanded): one thread per (n, c) plane, scatter in tap order.
  const int planes = f.n() * C;
#pragma omp parallel for schedule(static)
  for (int pl = 0; pl < planes; ++pl) {
    const int n = pl / C;
    const T* gy = grad_out.data() + static_cast<std::size_t>(pl) * plane;
    T* ge = g_expanded.data() + static_cast<std::size_t>(pl) * plane;
    const T* fn = kernels.weights.data() + kernels.weights.offset(n, 0, 0, 0);
    for (int p = -r; p <= r; ++p)
      for (int q = -r; q <= r; ++q) {
        const T* wplane = fn + static_cast<std::size_t>((p + r) * k + (q + r)) * plane;
        const int j_lo = std::max(0, -q), j_hi = std::min(Ws, Ws - q);
        const int i_lo = std::max(0, -p), i_hi = std::min(Hs, Hs - p);
        for (int i = i_lo; i < i_hi; ++i) {
          T* erow = ge + static_cast<std::size_t>(i + p) * Ws + q;
          const T* grow = gy + static_cast<std::size_t>(i) * Ws;
          const T* wrow = wplane + static_cast<std::size_t>(i) * Ws;
          for (int j = j_lo; j < j_hi; ++j) erow[j] += grow[j] * wrow[j];
        }
      }
  }
  g.input = nearest_upsample_backward(g_expanded, s);
  return g;
}

template <typename T>
Tensor<T> sau_forward(const Tensor<T>& f, const SauParams<T>& params, const SauConfig& cfg, SauContext<T>* ctx) {
  Tensor<T> compressed;
  KernelField<T> kernels = sakg_forward(f, params, cfg, &compressed);
  Tensor<T> out = safu_forward(f, kernels, cfg);
  if (ctx) {
    ctx->input = f;
    ctx->compressed = std::move(compressed);
    ctx->kernels = std::move(kernels);
  }
  return out;
}

template <typename T>
SauGrads<T> sau_backward(const SauContext<T>& ctx, const SauParams<T>& params, const SauConfig& cfg,
                         const Tensor<T>& grad_out) {
  if (!ctx.valid()) throw std::logic_error("sau_backward: no saved forward context");
  SafuGrads<T> fu = safu_backward(ctx.input, ctx.kernels, cfg, grad_out);
  SauGrads<T> g = sakg_backward(ctx.input, ctx.compressed, ctx.kernels, params, cfg, fu.kernels);
  accumulate(g.input, fu.input);
  return g;
}

#define SAU_INSTANTIATE(T)                                                                                         \
  template struct SauParams<T>;                                                                                    \
  template KernelField<T> sakg_forward(const Tensor<T>&, const SauParams<T>&, const SauConfig&, Tensor<T>*);      \
  template SauGrads<T> sakg_backward(const Tensor<T>&, const Tensor<T>&, const KernelField<T>&,                    \
                                     const SauParams<T>&, const SauConfig&, const Tensor<T>&);                     \
  template Tensor<T> safu_forward(const Tensor<T>&, const KernelField<T>&, const SauConfig&);                      \
  template SafuGrads<T> safu_backward(const Tensor<T>&, const KernelField<T>&, const SauConfig&, const Tensor<T>&); \
  template Tensor<T> sau_forward(const Tensor<T>&, const SauParams<T>&, const SauConfig&, SauContext<T>*);        \
  template SauGrads<T> sau_backward(const SauContext<T>&, const SauParams<T>&, const SauConfig&, const Tensor<T>&);

SAU_INSTANTIATE(float)
SAU_INSTANTIATE(double)

}  // namespace sau
