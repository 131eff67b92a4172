#pragma once

#include <string>
#include <vector>

#include "sau/lggan/params.hpp"
#include "sau/ops.hpp"
#include "sau/rng.hpp"
#include "sau/sau.hpp"

namespace sau::lggan {

enum class Act { none, relu, lrelu };
constexpr double kLeakySlope = 0.2;

/// One conv (or transposed conv) optionally followed by instance norm and an activation.
/// Parameters live in the store as <name>.weight, <name>.bias, <name>.gamma, <name>.beta.
struct LayerSpec {
  std::string name;
  ConvSpec conv;
  bool transpose = false;
  bool norm = false;
  Act act = Act::none;
};

template <typename T>
struct LayerCache {
  Tensor<T> input;
  Tensor<T> conv_out;
  Tensor<T> norm_out;  // empty without norm
};

template <typename T>
class ConvStack {
 public:
  ConvStack() = default;
  explicit ConvStack(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {}

  /// He-normal weights, zero biases, unit gamma, zero beta.
  void init(ParamStore<T>& store, Rng& rng) const;

  Tensor<T> forward(const ParamStore<T>& store, const Tensor<T>& x, std::vector<LayerCache<T>>* cache) const;

  /// Accumulates parameter gradients into the store and returns the input gradient.
  Tensor<T> backward(ParamStore<T>& store, const std::vector<LayerCache<T>>& cache, const Tensor<T>& grad_out) const;

  const std::vector<LayerSpec>& layers() const { return layers_; }
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<LayerSpec> layers_;
};

enum class UpsamplerKind { nearest, bilinear, bicubic, deconv, pixelshuffle, sau };

UpsamplerKind parse_upsampler(const std::string& name);
std::string to_string(UpsamplerKind kind);
using sau::to_string;
const std::vector<UpsamplerKind>& all_upsamplers();

template <typename T>
struct UpsamplerCache {
  std::vector<LayerCache<T>> layers;
  SauContext<T> sau;
};

/// Feature upsampler by an integer factor with a swappable implementation. Learned variants
/// keep their parameters under `prefix`.
template <typename T>
class Upsampler {
 public:
  Upsampler() = default;
  Upsampler(UpsamplerKind kind, int channels, int s, const SauConfig& sau_cfg, std::string prefix);

  void init(ParamStore<T>& store, Rng& rng) const;
  Tensor<T> forward(const ParamStore<T>& store, const Tensor<T>& f, UpsamplerCache<T>* cache) const;
  Tensor<T> backward(ParamStore<T>& store, const UpsamplerCache<T>& cache, const Tensor<T>& grad_out) const;

  UpsamplerKind kind() const { return kind_; }
  const SauConfig& sau_config() const { return sau_cfg_; }
  SauParams<T> sau_params(const ParamStore<T>& store) const;

 private:
  UpsamplerKind kind_ = UpsamplerKind::nearest;
  int s_ = 1;
  SauConfig sau_cfg_;
  std::string prefix_;
  ConvStack<T> stack_;
};

}  // namespace sau::lggan
