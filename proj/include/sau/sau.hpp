#pragma once

// Semantic-aware upsampling.
//
// The kernel branch predicts, for every output pixel, a k x k set of weights from the
// features themselves: 1x1 channel compression, a spatial conv to k^2 * s^2 channels,
// pixel shuffle to k^2 x Hs x Ws, then a softmax across the k^2 taps. The feature branch
// nearest-expands the input by s and takes, at every output pixel, the weighted sum of
// its zero-padded k x k neighbourhood under those weights.

#include "sau/ops.hpp"
#include "sau/rng.hpp"
#include "sau/tensor.hpp"

namespace sau {

struct SauConfig {
  int channels = 64;     // C
  int compressed = 64;   // C'
  int k = 5;             // upsampling kernel size (odd)
  int s = 2;             // upsampling scale
  int kernelgen_k = 3;   // spatial extent of the kernel-generation conv, zero padded
  bool kernelgen_bias = true;

  int taps() const { return k * k; }
  void validate() const;

  ConvSpec compress_spec() const { return ConvSpec::square(channels, compressed, 1, 1, 0, true); }
  ConvSpec kernelgen_spec() const {
    return ConvSpec::square(compressed, k * k * s * s, kernelgen_k, 1, kernelgen_k / 2, kernelgen_bias);
  }
};

template <typename T>
struct SauParams {
  Tensor<T> compress_weight;   // C' x C x 1 x 1
  Tensor<T> compress_bias;     // C'
  Tensor<T> kernelgen_weight;  // k^2 s^2 x C' x kg x kg
  Tensor<T> kernelgen_bias;    // k^2 s^2 (unused when cfg.kernelgen_bias is false)

  /// He-style random init; biases zero.
  static SauParams init(const SauConfig& cfg, Rng& rng);
  static SauParams zeros(const SauConfig& cfg);
  void check(const SauConfig& cfg) const;
};

/// N x k^2 x Hs x Ws, nonnegative, each pixel's k^2 weights sum to 1.
template <typename T>
struct KernelField {
  Tensor<T> weights;
  int k = 1;
};

/// Intermediates kept by sau_forward for the backward pass.
template <typename T>
struct SauContext {
  Tensor<T> input;
  Tensor<T> compressed;  // f_c
  KernelField<T> kernels;
  bool valid() const { return !input.empty(); }
};

template <typename T>
struct SauGrads {
  Tensor<T> input;
  SauParams<T> params;
};

template <typename T>
KernelField<T> sakg_forward(const Tensor<T>& f, const SauParams<T>& params, const SauConfig& cfg,
                            Tensor<T>* compressed_out = nullptr);

/// Gradients of the kernel branch given dL/d(kernel field).
template <typename T>
SauGrads<T> sakg_backward(const Tensor<T>& f, const Tensor<T>& compressed, const KernelField<T>& kernels,
                          const SauParams<T>& params, const SauConfig& cfg, const Tensor<T>& grad_kernels);

/// Weighted neighbourhood sum; the unfolded tensor is never materialized.
template <typename T>
Tensor<T> safu_forward(const Tensor<T>& f, const KernelField<T>& kernels, const SauConfig& cfg);

template <typename T>
struct SafuGrads {
  Tensor<T> input;
  Tensor<T> kernels;
};

template <typename T>
SafuGrads<T> safu_backward(const Tensor<T>& f, const KernelField<T>& kernels, const SauConfig& cfg,
                           const Tensor<T>& grad_out);

template <typename T>
Tensor<T> sau_forward(const Tensor<T>& f, const SauParams<T>& params, const SauConfig& cfg,
                      SauContext<T>* ctx = nullptr);

template <typename T>
SauGrads<T> sau_backward(const SauContext<T>& ctx, const SauParams<T>& params, const SauConfig& cfg,
                         const Tensor<T>& grad_out);

/// Reference implementation: direct nested loops, no unfold or shuffle buffers, single threaded.
template <typename T>
Tensor<T> sau_naive(const Tensor<T>& f, const SauParams<T>& params, const SauConfig& cfg);

/// Reference weighted sum for an externally supplied kernel field.
template <typename T>
Tensor<T> safu_naive(const Tensor<T>& f, const KernelField<T>& kernels, const SauConfig& cfg);

}  // namespace sau
