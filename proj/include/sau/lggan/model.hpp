#pragma once

// Local/global generator with weight-map fusion, and the patch discriminators.
//
// Generator data flow for a batch of layouts (masks N x K x H x W):
//   input -> encoder E -> f (H/s) -> upsampler -> f' (H)
//   f' -> G_g -> I_G
//   F_i = M_i * f' -> per-class stack -> I_l_i -> add or conv fusion -> I_L
//   F_i -> masked pooling -> shared FC -> class logits
//   avg_pool(f', 4) -> G_w -> channel softmax -> W = [W_g, W_l]
//   I_C = I_G * W_g + I_L * W_l
// Parameters are named "G.*"; discriminators are "D.s.*" (semantic) and "D.i.*" (image).

#include <string>
#include <vector>

#include "sau/lggan/config.hpp"
#include "sau/lggan/layers.hpp"
#include "sau/lggan/losses.hpp"
#include "sau/lggan/params.hpp"

namespace sau::lggan {

/// Extent reduction between f' and the G_w input; two stride-2 transposed convs undo it.
constexpr int kWeightMapPool = 4;

template <typename T>
struct GeneratorOutput {
  Tensor<T> features;                     // f
  Tensor<T> upsampled;                    // f'
  Tensor<T> masks;                        // masks aligned to f'
  std::vector<Tensor<T>> class_features;  // F_i
  std::vector<Tensor<T>> class_images;    // I_l_i
  Tensor<T> local;                        // I_L
  Tensor<T> global;                       // I_G
  Tensor<T> weights;                      // W, N x 2 x H x W
  Tensor<T> fused;                        // I_C
  ClassifyResult<T> classes;
};

template <typename T>
struct GeneratorCache {
  std::vector<LayerCache<T>> encoder;
  UpsamplerCache<T> upsampler;
  std::vector<LayerCache<T>> global;
  std::vector<std::vector<LayerCache<T>>> local;
  std::vector<LayerCache<T>> local_fusion;
  std::vector<LayerCache<T>> weight_map;
};

/// Upstream gradients for Generator::backward.
template <typename T>
struct GeneratorUpstream {
  Tensor<T> fused;                      // dL/dI_C (may be empty)
  std::vector<Tensor<T>> class_images;  // dL/dI_l_i (may be empty)
  double ce_weight = 0;                 // scale of the classification loss
};

template <typename T>
class Generator {
 public:
  Generator() = default;
  explicit Generator(const LgganConfig& cfg);

  void init(ParamStore<T>& store, Rng& rng) const;

  /// Encoder input for a batch: the masks, or [conditional image, masks] in cross-view mode.
  Tensor<T> make_input(const Tensor<T>& masks, const Tensor<T>* conditional) const;

  Tensor<T> encode(const ParamStore<T>& store, const Tensor<T>& input, std::vector<LayerCache<T>>* cache) const;
  Tensor<T> upsample(const ParamStore<T>& store, const Tensor<T>& f, UpsamplerCache<T>* cache) const;
  Tensor<T> global_generate(const ParamStore<T>& store, const Tensor<T>& f_up, std::vector<LayerCache<T>>* cache) const;
  /// Per-class images and their fusion (sum or conv over the concatenation).
  Tensor<T> local_generate(const ParamStore<T>& store, const std::vector<Tensor<T>>& class_features,
                           std::vector<Tensor<T>>* class_images, GeneratorCache<T>* cache) const;
  /// Softmax-normalized 2-channel weight map at the resolution of f_up.
  Tensor<T> weight_maps(const ParamStore<T>& store, const Tensor<T>& f_up, std::vector<LayerCache<T>>* cache) const;

  GeneratorOutput<T> forward(const ParamStore<T>& store, const Tensor<T>& masks, const Tensor<T>& valid,
                             const Tensor<T>* conditional, GeneratorCache<T>* cache) const;

  /// Accumulates gradients of every generator parameter into the store.
  void backward(ParamStore<T>& store, const GeneratorOutput<T>& out, const GeneratorCache<T>& cache,
                const Tensor<T>& valid, const GeneratorUpstream<T>& upstream) const;

  const LgganConfig& config() const { return cfg_; }
  const ConvStack<T>& encoder() const { return encoder_; }
  const ConvStack<T>& global_stack() const { return global_; }
  const std::vector<ConvStack<T>>& local_stacks() const { return local_; }
  const ConvStack<T>& local_fusion() const { return fusion_; }
  const ConvStack<T>& weight_stack() const { return weight_; }
  const Upsampler<T>& upsampler() const { return up_; }

 private:
  LgganConfig cfg_;
  ConvStack<T> encoder_;
  Upsampler<T> up_;
  ConvStack<T> global_;
  std::vector<ConvStack<T>> local_;
  ConvStack<T> fusion_;
  ConvStack<T> weight_;
};

template <typename T>
class Discriminator {
 public:
  Discriminator() = default;
  /// Patch discriminator over [image (3 channels), condition (cond_channels)].
  Discriminator(const LgganConfig& cfg, std::string prefix, int cond_channels);

  void init(ParamStore<T>& store, Rng& rng) const { stack_.init(store, rng); }
  Tensor<T> forward(const ParamStore<T>& store, const Tensor<T>& image, const Tensor<T>& condition,
                    std::vector<LayerCache<T>>* cache) const;
  /// Accumulates parameter gradients and returns the gradient w.r.t. the image.
  Tensor<T> backward(ParamStore<T>& store, const std::vector<LayerCache<T>>& cache, const Tensor<T>& grad_logits) const;

  const std::string& prefix() const { return prefix_; }

 private:
  std::string prefix_;
  ConvStack<T> stack_;
};

}  // namespace sau::lggan
