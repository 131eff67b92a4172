#include "sau/lggan/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace sau::lggan {

template <typename T>
void ConvStack<T>::init(ParamStore<T>& store, Rng& rng) const {
  for (const auto& l : layers_) {
    const ConvSpec& c = l.conv;
    const double fan_in = static_cast<double>(c.in_channels) * c.kernel_h * c.kernel_w;
    const double gain = l.act == Act::none ? 1.0 : 2.0;
    const Shape ws = l.transpose ? c.transpose_weight_shape() : c.weight_shape();
    store.add(l.name + ".weight", random_normal<T>(ws, rng, std::sqrt(gain / fan_in)));
    if (c.has_bias) store.add(l.name + ".bias", Tensor<T>({c.out_channels}));
    if (l.norm) {
      store.add(l.name + ".gamma", Tensor<T>({c.out_channels}, T(1)));
      store.add(l.name + ".beta", Tensor<T>({c.out_channels}));
    }
  }
}

namespace {

template <typename T>
Tensor<T> activate(Act act, const Tensor<T>& x) {
  switch (act) {
    case Act::relu: return relu(x);
    case Act::lrelu: return leaky_relu(x, kLeakySlope);
    case Act::none: break;
  }
  return x;
}

template <typename T>
Tensor<T> activate_backward(Act act, const Tensor<T>& pre, const Tensor<T>& g) {
  switch (act) {
    case Act::relu: return relu_backward(pre, g);
    case Act::lrelu: return leaky_relu_backward(pre, kLeakySlope, g);
    case Act::none: break;
  }
  return g;
}

}  // namespace

template <typename T>
Tensor<T> ConvStack<T>::forward(const ParamStore<T>& store, const Tensor<T>& x,
                                std::vector<LayerCache<T>>* cache) const {
  if (cache) cache->assign(layers_.size(), {});
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const Tensor<T>& w = store.value(l.name + ".weight");
    const Tensor<T>* b = l.conv.has_bias ? &store.value(l.name + ".bias") : nullptr;
    Tensor<T> y = l.transpose ? transpose_conv2d(h, w, b, l.conv) : conv2d(h, w, b, l.conv);
    Tensor<T> pre = y;
    Tensor<T> normed;
    if (l.norm) {
      normed = instance_norm(y, store.value(l.name + ".gamma"), store.value(l.name + ".beta"));
      pre = normed;
    }
    Tensor<T> out = activate(l.act, pre);
    if (cache) {
      auto& c = (*cache)[i];
      c.input = std::move(h);
      c.conv_out = std::move(y);
      c.norm_out = std::move(normed);
    }
    h = std::move(out);
  }
  return h;
}

template <typename T>
Tensor<T> ConvStack<T>::backward(ParamStore<T>& store, const std::vector<LayerCache<T>>& cache,
                                 const Tensor<T>& grad_out) const {
  if (cache.size() != layers_.size()) throw std::logic_error("ConvStack::backward: cache does not match stack");
  Tensor<T> g = grad_out;
  for (std::size_t idx = layers_.size(); idx-- > 0;) {
    const auto& l = layers_[idx];
    const auto& c = cache[idx];
    g = activate_backward(l.act, l.norm ? c.norm_out : c.conv_out, g);
    if (l.norm) {
      auto ng = instance_norm_backward(c.conv_out, store.value(l.name + ".gamma"), g);
      store.accumulate(l.name + ".gamma", ng.gamma);
      store.accumulate(l.name + ".beta", ng.beta);
      g = std::move(ng.input);
    }
    const Tensor<T>& w = store.value(l.name + ".weight");
    auto cg = l.transpose ? transpose_conv2d_backward(c.input, w, l.conv, g) : conv2d_backward(c.input, w, l.conv, g);
    store.accumulate(l.name + ".weight", cg.weight);
    if (l.conv.has_bias) store.accumulate(l.name + ".bias", cg.bias);
    g = std::move(cg.input);
  }
  return g;
}

UpsamplerKind parse_upsampler(const std::string& name) {
  for (const auto k : all_upsamplers()) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown upsampler '" + name +
                              "' (expected nearest, bilinear, bicubic, deconv, pixelshuffle or sau)");
}

std::string to_string(UpsamplerKind kind) {
  switch (kind) {
    case UpsamplerKind::nearest: return "nearest";
    case UpsamplerKind::bilinear: return "bilinear";
    case UpsamplerKind::bicubic: return "bicubic";
    case UpsamplerKind::deconv: return "deconv";
    case UpsamplerKind::pixelshuffle: return "pixelshuffle";
    case UpsamplerKind::sau: return "sau";
  }
  return "?";
}

const std::vector<UpsamplerKind>& all_upsamplers() {
  static const std::vector<UpsamplerKind> kinds{UpsamplerKind::nearest, UpsamplerKind::bilinear,
                                                UpsamplerKind::bicubic, UpsamplerKind::deconv,
                                                UpsamplerKind::pixelshuffle, UpsamplerKind::sau};
  return kinds;
}

template <typename T>
Upsampler<T>::Upsampler(UpsamplerKind kind, int channels, int s, const SauConfig& sau_cfg, std::string prefix)
    : kind_(kind), s_(s), sau_cfg_(sau_cfg), prefix_(std::move(prefix)) {
  if (s < 1) throw ShapeError("Upsampler: scale must be >= 1");
  if (kind == UpsamplerKind::deconv) {
    // (in - 1) * s - 2 + (s + 2) = in * s
    stack_ = ConvStack<T>({{prefix_ + ".deconv", ConvSpec::square(channels, channels, s + 2, s, 1), true}});
  } else if (kind == UpsamplerKind::pixelshuffle) {
    stack_ = ConvStack<T>({{prefix_ + ".expand", ConvSpec::square(channels, channels * s * s, 3, 1, 1)}});
  } else if (kind == UpsamplerKind::sau) {
    sau_cfg_.channels = channels;
    sau_cfg_.s = s;
    sau_cfg_.validate();
  }
}

template <typename T>
void Upsampler<T>::init(ParamStore<T>& store, Rng& rng) const {
  stack_.init(store, rng);
  if (kind_ == UpsamplerKind::sau) {
    const auto p = SauParams<T>::init(sau_cfg_, rng);
    store.add(prefix_ + ".compress.weight", p.compress_weight);
    store.add(prefix_ + ".compress.bias", p.compress_bias);
    store.add(prefix_ + ".kernelgen.weight", p.kernelgen_weight);
    store.add(prefix_ + ".kernelgen.bias", p.kernelgen_bias);
  }
}

template <typename T>
SauParams<T> Upsampler<T>::sau_params(const ParamStore<T>& store) const {
  return SauParams<T>{store.value(prefix_ + ".compress.weight"), store.value(prefix_ + ".compress.bias"),
                      store.value(prefix_ + ".kernelgen.weight"), store.value(prefix_ + ".kernelgen.bias")};
}

template <typename T>
Tensor<T> Upsampler<T>::forward(const ParamStore<T>& store, const Tensor<T>& f, UpsamplerCache<T>* cache) const {
  switch (kind_) {
    case UpsamplerKind::nearest: return nearest_upsample(f, s_);
    case UpsamplerKind::bilinear: return bilinear_upsample(f, s_);
    case UpsamplerKind::bicubic: return bicubic_upsample(f, s_);
    case UpsamplerKind::deconv: return stack_.forward(store, f, cache ? &cache->layers : nullptr);
    case UpsamplerKind::pixelshuffle:
      return pixel_shuffle(stack_.forward(store, f, cache ? &cache->layers : nullptr), s_);
    case UpsamplerKind::sau: return sau_forward(f, sau_params(store), sau_cfg_, cache ? &cache->sau : nullptr);
  }
  throw std::logic_error("Upsampler: bad kind");
}

template <typename T>
Tensor<T> Upsampler<T>::backward(ParamStore<T>& store, const UpsamplerCache<T>& cache,
                                 const Tensor<T>& grad_out) const {
  switch (kind_) {
    case UpsamplerKind::nearest: return nearest_upsample_backward(grad_out, s_);
    case UpsamplerKind::bilinear: return bilinear_upsample_backward(grad_out, s_);
    case UpsamplerKind::bicubic: return bicubic_upsample_backward(grad_out, s_);
    case UpsamplerKind::deconv: return stack_.backward(store, cache.layers, grad_out);
    case UpsamplerKind::pixelshuffle: return stack_.backward(store, cache.layers, pixel_unshuffle(grad_out, s_));
    case UpsamplerKind::sau: {
      auto g = sau_backward(cache.sau, sau_params(store), sau_cfg_, grad_out);
      store.accumulate(prefix_ + ".compress.weight", g.params.compress_weight);
      store.accumulate(prefix_ + ".compress.bias", g.params.compress_bias);
      store.accumulate(prefix_ + ".kernelgen.weight", g.params.kernelgen_weight);
      store.accumulate(prefix_ + ".kernelgen.bias", g.params.kernelgen_bias);
      return std::move(g.input);
    }
  }
  throw std::logic_error("Upsampler: bad kind");
}

template class ConvStack<float>;
template class ConvStack<double>;
template class Upsampler<float>;
template class Upsampler<double>;

}  // namespace sau::lggan
