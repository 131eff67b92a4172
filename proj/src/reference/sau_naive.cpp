// Serial reference for semantic-aware upsampling. Everything is evaluated straight from
// the defining index formulas so the optimized path in sau.cpp can be checked against it.

#include <cmath>
#include <vector>

#include "sau/sau.hpp"

namespace sau {

template <typename T>
Tensor<T> safu_naive(const Tensor<T>& f, const KernelField<T>& kernels, const SauConfig& cfg) {
  require_rank4(f, "safu_naive");
  const int s = cfg.s;
  const int k = cfg.k;
  const int r = k / 2;
  const int Hs = f.h() * s;
  const int Ws = f.w() * s;
  if (kernels.weights.shape() != Shape{f.n(), k * k, Hs, Ws}) throw ShapeError("safu_naive: kernel field mismatch");
  Tensor<T> out({f.n(), f.c(), Hs, Ws});
  for (int n = 0; n < f.n(); ++n)
    for (int c = 0; c < f.c(); ++c)
      for (int i = 0; i < Hs; ++i)
        for (int j = 0; j < Ws; ++j) {
          T acc = 0;
          for (int p = -r; p <= r; ++p)
            for (int q = -r; q <= r; ++q) {
              const int y = i + p;
              const int x = j + q;
              if (y < 0 || y >= Hs || x < 0 || x >= Ws) continue;
              acc += f.at(n, c, y / s, x / s) * kernels.weights.at(n, (p + r) * k + (q + r), i, j);
            }
          out.at(n, c, i, j) = acc;
        }
  return out;
}

template <typename T>
Tensor<T> sau_naive(const Tensor<T>& f, const SauParams<T>& params, const SauConfig& cfg) {
  require_rank4(f, "sau_naive");
  params.check(cfg);
  if (f.c() != cfg.channels) throw ShapeError("sau_naive: channel mismatch");
  const int N = f.n();
  const int C = f.c();
  const int H = f.h();
  const int W = f.w();
  const int Cc = cfg.compressed;
  const int s = cfg.s;
  const int k = cfg.k;
  const int r = k / 2;
  const int kg = cfg.kernelgen_k;
  const int pad = kg / 2;
  const int Ck = k * k * s * s;

  // f_c = 1x1 conv
  Tensor<T> fc({N, Cc, H, W});
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < Cc; ++o)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          T acc = params.compress_bias[static_cast<std::size_t>(o)];
          for (int c = 0; c < C; ++c) acc += params.compress_weight.at(o, c, 0, 0) * f.at(n, c, i, j);
          fc.at(n, o, i, j) = acc;
        }

  // f_k = kg x kg conv, zero padded
  Tensor<T> fk({N, Ck, H, W});
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < Ck; ++o)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          T acc = cfg.kernelgen_bias ? params.kernelgen_bias[static_cast<std::size_t>(o)] : T(0);
          for (int c = 0; c < Cc; ++c)
            for (int a = 0; a < kg; ++a)
              for (int b = 0; b < kg; ++b) {
                const int y = i + a - pad;
                const int x = j + b - pad;
                if (y < 0 || y >= H || x < 0 || x >= W) continue;
                acc += params.kernelgen_weight.at(o, c, a, b) * fc.at(n, c, y, x);
              }
          fk.at(n, o, i, j) = acc;
        }

  // Shuffle, softmax and weighted sum, computed per output pixel.
  Tensor<T> out({N, C, H * s, W * s});
  std::vector<T> weights(static_cast<std::size_t>(k * k));
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < H * s; ++i)
      for (int j = 0; j < W * s; ++j) {
        const int src_i = i / s;
        const int src_j = j / s;
        const int sub = (i % s) * s + (j % s);
        T m = fk.at(n, sub, src_i, src_j);
        for (int t = 1; t < k * k; ++t) m = std::max(m, fk.at(n, t * s * s + sub, src_i, src_j));
        T total = 0;
        for (int t = 0; t < k * k; ++t) {
          weights[static_cast<std::size_t>(t)] = std::exp(fk.at(n, t * s * s + sub, src_i, src_j) - m);
          total += weights[static_cast<std::size_t>(t)];
        }
        for (auto& w : weights) w /= total;
        for (int c = 0; c < C; ++c) {
          T acc = 0;
          for (int p = -r; p <= r; ++p)
            for (int q = -r; q <= r; ++q) {
              const int y = i + p;
              const int x = j + q;
              if (y < 0 || y >= H * s || x < 0 || x >= W * s) continue;
              acc += f.at(n, c, y / s, x / s) * weights[static_cast<std::size_t>((p + r) * k + (q + r))];
            }
          out.at(n, c, i, j) = acc;
        }
      }
  return out;
}

template Tensor<float> safu_naive(const Tensor<float>&, const KernelField<float>&, const SauConfig&);
template Tensor<double> safu_naive(const Tensor<double>&, const KernelField<double>&, const SauConfig&);
template Tensor<float> sau_naive(const Tensor<float>&, const SauParams<float>&, const SauConfig&);
template Tensor<double> sau_naive(const Tensor<double>&, const SauParams<double>&, const SauConfig&);

}  // namespace sau
