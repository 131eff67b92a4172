#pragma once

// Parameter-free building blocks of the local/global generator and its objectives.
// Masks are N x K x H x W one-hot tensors (K classes); `valid` is N x K with entries in {0, 1}.

#include <vector>

#include "sau/lggan/config.hpp"
#include "sau/tensor.hpp"

namespace sau::lggan {

/// Nearest-neighbour resample of masks to h x w (integer down- or up-sampling factors).
template <typename T>
Tensor<T> align_masks(const Tensor<T>& masks, int h, int w);

/// F_i = M_i * f for every class i (masks broadcast over feature channels).
template <typename T>
std::vector<Tensor<T>> mask_filter(const Tensor<T>& features, const Tensor<T>& masks);

/// Gradient w.r.t. the features: sum_i M_i * grad_i.
template <typename T>
Tensor<T> mask_filter_backward(const Tensor<T>& masks, const std::vector<Tensor<T>>& grads);

/// Elementwise sum of the per-class images.
template <typename T>
Tensor<T> sum_images(const std::vector<Tensor<T>>& images);

template <typename T>
struct ClassifyResult {
  Tensor<T> pooled;  // N x K x C, masked means (zero for void classes)
  Tensor<T> logits;  // N x K x K, row i scores class-i features
  double loss = 0;
};

template <typename T>
struct ClassifyGrads {
  std::vector<Tensor<T>> features;
  Tensor<T> weight;
  Tensor<T> bias;
};

/// Masked average pooling of each F_i over M_i, a shared K-way linear classifier, and
/// cross-entropy against the class index averaged over valid classes, then over the batch.
/// Void classes contribute nothing, not even through their features.
template <typename T>
ClassifyResult<T> classify_classes(const std::vector<Tensor<T>>& features, const Tensor<T>& masks,
                                   const Tensor<T>& valid, const Tensor<T>& weight, const Tensor<T>& bias);

/// Gradients of `scale * loss`.
template <typename T>
ClassifyGrads<T> classify_backward(const std::vector<Tensor<T>>& features, const Tensor<T>& masks,
                                   const Tensor<T>& valid, const Tensor<T>& weight, const ClassifyResult<T>& result,
                                   double scale);

/// fused = global * W[:, 0] + local * W[:, 1] with W an N x 2 x H x W weight map.
template <typename T>
Tensor<T> fuse_images(const Tensor<T>& global, const Tensor<T>& local, const Tensor<T>& weights);

template <typename T>
struct FuseGrads {
  Tensor<T> global;
  Tensor<T> local;
  Tensor<T> weights;
};

template <typename T>
FuseGrads<T> fuse_images_backward(const Tensor<T>& global, const Tensor<T>& local, const Tensor<T>& weights,
                                  const Tensor<T>& grad_out);

/// sum_i mean |real * M_i - out_i|, means over all N x 3 x H x W elements.
template <typename T>
double masked_l1(const Tensor<T>& real, const std::vector<Tensor<T>>& outputs, const Tensor<T>& masks);

/// Gradients of `scale * masked_l1` w.r.t. each output (zero where the residual is zero).
template <typename T>
std::vector<Tensor<T>> masked_l1_backward(const Tensor<T>& real, const std::vector<Tensor<T>>& outputs,
                                          const Tensor<T>& masks, double scale);

/// mean |a - b|
template <typename T>
double mean_abs_error(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
struct GanTerm {
  double loss = 0;
  Tensor<T> grad_real;  // empty for generator terms
  Tensor<T> grad_fake;
};

/// Discriminator objective on patch logits. Logistic: mean softplus(-real) + mean softplus(fake).
/// Hinge: mean relu(1 - real) + mean relu(1 + fake). Gradients are of `scale * loss`.
template <typename T>
GanTerm<T> gan_d_loss(const Tensor<T>& real_logits, const Tensor<T>& fake_logits, GanLossKind kind, double scale = 1.0);

/// Generator objective. Logistic (non-saturating): mean softplus(-fake). Hinge: -mean fake.
template <typename T>
GanTerm<T> gan_g_loss(const Tensor<T>& fake_logits, GanLossKind kind, double scale = 1.0);

}  // namespace sau::lggan
