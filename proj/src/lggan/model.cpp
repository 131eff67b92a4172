#include "sau/lggan/model.hpp"

#include <cmath>
#include <stdexcept>

namespace sau::lggan {

namespace {

int log2_exact(int v) {
  int r = 0;
  while ((1 << r) < v) ++r;
  return r;
}

ConvSpec conv3(int in, int out) { return ConvSpec::square(in, out, 3, 1, 1); }

}  // namespace

template <typename T>
Generator<T>::Generator(const LgganConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int C = cfg_.channels;
  std::vector<LayerSpec> enc{{"G.enc.0", conv3(cfg_.input_channels(), C), false, false, Act::lrelu}};
  for (int j = 1; j <= log2_exact(cfg_.s); ++j) {
    enc.push_back({"G.enc." + std::to_string(j), ConvSpec::square(C, C, 4, 2, 1), false, false, Act::lrelu});
  }
  encoder_ = ConvStack<T>(std::move(enc));
  up_ = Upsampler<T>(cfg_.upsampler, C, cfg_.s, cfg_.sau_config(), "G.up");
  global_ = ConvStack<T>({{"G.global.0", conv3(C, cfg_.global_hidden), false, false, Act::lrelu},
                          {"G.global.1", conv3(cfg_.global_hidden, 3), false, false, Act::none}});
  if (cfg_.use_local) {
    const int h = cfg_.local_hidden;
    for (int i = 0; i < cfg_.n_classes; ++i) {
      const std::string p = "G.local." + std::to_string(i);
      local_.emplace_back(std::vector<LayerSpec>{{p + ".0", conv3(C, h), false, false, Act::lrelu},
                                                 {p + ".1", conv3(h, h), false, false, Act::lrelu},
                                                 {p + ".2", ConvSpec::square(h, 3, 1), false, false, Act::none}});
    }
    if (cfg_.fusion == Fusion::conv) {
      fusion_ = ConvStack<T>({{"G.local.fuse", conv3(3 * cfg_.n_classes, 3), false, false, Act::none}});
    }
  }
  if (cfg_.use_weight_map) {
    // Convs followed by instance norm carry no bias: the norm cancels it.
    auto up2 = [](int in, int out) { return ConvSpec{in, out, 3, 3, 2, 1, false, 1}; };
    weight_ = ConvStack<T>({{"G.gw.0", up2(C, cfg_.gw_hidden1), true, true, Act::relu},
                            {"G.gw.1", up2(cfg_.gw_hidden1, cfg_.gw_hidden2), true, true, Act::relu},
                            {"G.gw.2", ConvSpec::square(cfg_.gw_hidden2, 2, 1, 1, 0, false), false, true, Act::relu}});
  }
}

template <typename T>
void Generator<T>::init(ParamStore<T>& store, Rng& rng) const {
  encoder_.init(store, rng);
  up_.init(store, rng);
  global_.init(store, rng);
  for (const auto& l : local_) l.init(store, rng);
  if (!fusion_.empty()) {
    fusion_.init(store, rng);
    // Start the fusion conv as the plain sum of the class images.
    Tensor<T>& w = store.value("G.local.fuse.weight");
    for (auto& v : w.values()) v = T(0);
    for (int i = 0; i < cfg_.n_classes; ++i)
      for (int o = 0; o < 3; ++o) w.at(o, 3 * i + o, 1, 1) = T(1);
  }
  weight_.init(store, rng);
  if (cfg_.use_classifier) {
    store.add("G.cls.weight", random_normal<T>({cfg_.n_classes, cfg_.channels}, rng, 1.0 / std::sqrt(cfg_.channels)));
    store.add("G.cls.bias", Tensor<T>({cfg_.n_classes}));
  }
}

template <typename T>
Tensor<T> Generator<T>::make_input(const Tensor<T>& masks, const Tensor<T>* conditional) const {
  require_rank4(masks, "Generator");
  if (masks.c() != cfg_.n_classes) {
    throw ShapeError("Generator: layout has " + std::to_string(masks.c()) + " classes, model expects " +
                     std::to_string(cfg_.n_classes));
  }
  if (cfg_.mode == Mode::synthesis) {
    if (conditional) throw std::invalid_argument("Generator: conditional image given in synthesis mode");
    return masks;
  }
  if (!conditional) throw std::invalid_argument("Generator: cross-view mode needs a conditional image");
  return concat_channels<T>({conditional, &masks});
}

template <typename T>
Tensor<T> Generator<T>::encode(const ParamStore<T>& store, const Tensor<T>& input,
                               std::vector<LayerCache<T>>* cache) const {
  require_rank4(input, "encode");
  if (input.c() != cfg_.input_channels()) {
    throw ShapeError("encode: input has " + std::to_string(input.c()) + " channels, " + to_string(cfg_.mode) +
                     " mode expects " + std::to_string(cfg_.input_channels()));
  }
  return encoder_.forward(store, input, cache);
}

template <typename T>
Tensor<T> Generator<T>::upsample(const ParamStore<T>& store, const Tensor<T>& f, UpsamplerCache<T>* cache) const {
  return up_.forward(store, f, cache);
}

template <typename T>
Tensor<T> Generator<T>::global_generate(const ParamStore<T>& store, const Tensor<T>& f_up,
                                        std::vector<LayerCache<T>>* cache) const {
  return global_.forward(store, f_up, cache);
}

template <typename T>
Tensor<T> Generator<T>::local_generate(const ParamStore<T>& store, const std::vector<Tensor<T>>& class_features,
                                       std::vector<Tensor<T>>* class_images, GeneratorCache<T>* cache) const {
  if (class_features.size() != local_.size()) {
    throw ShapeError("local_generate: got " + std::to_string(class_features.size()) + " class features for " +
                     std::to_string(local_.size()) + " classes");
  }
  std::vector<Tensor<T>> images;
  if (cache) cache->local.assign(local_.size(), {});
  for (std::size_t i = 0; i < local_.size(); ++i) {
    images.push_back(local_[i].forward(store, class_features[i], cache ? &cache->local[i] : nullptr));
  }
  Tensor<T> fused;
  if (cfg_.fusion == Fusion::add) {
    fused = sum_images(images);
  } else {
    std::vector<const Tensor<T>*> parts;
    for (const auto& im : images) parts.push_back(&im);
    fused = fusion_.forward(store, concat_channels(parts), cache ? &cache->local_fusion : nullptr);
  }
  if (class_images) *class_images = std::move(images);
  return fused;
}

template <typename T>
Tensor<T> Generator<T>::weight_maps(const ParamStore<T>& store, const Tensor<T>& f_up,
                                    std::vector<LayerCache<T>>* cache) const {
  if (!cfg_.use_weight_map) throw std::logic_error("weight_maps: weight-map generator disabled");
  return channel_softmax(weight_.forward(store, avg_pool(f_up, kWeightMapPool), cache));
}

template <typename T>
GeneratorOutput<T> Generator<T>::forward(const ParamStore<T>& store, const Tensor<T>& masks, const Tensor<T>& valid,
                                         const Tensor<T>* conditional, GeneratorCache<T>* cache) const {
  GeneratorOutput<T> out;
  const Tensor<T> input = make_input(masks, conditional);
  out.features = encode(store, input, cache ? &cache->encoder : nullptr);
  out.upsampled = upsample(store, out.features, cache ? &cache->upsampler : nullptr);
  out.masks = align_masks(masks, out.upsampled.h(), out.upsampled.w());
  out.global = global_generate(store, out.upsampled, cache ? &cache->global : nullptr);
  if (!cfg_.use_local) {
    out.fused = out.global;
    return out;
  }
  out.class_features = mask_filter(out.upsampled, out.masks);
  out.local = local_generate(store, out.class_features, &out.class_images, cache);
  if (cfg_.use_classifier) {
    out.classes = classify_classes(out.class_features, out.masks, valid, store.value("G.cls.weight"),
                                   store.value("G.cls.bias"));
  }
  if (cfg_.use_weight_map) {
    out.weights = weight_maps(store, out.upsampled, cache ? &cache->weight_map : nullptr);
  } else {
    out.weights = Tensor<T>({out.global.n(), 2, out.global.h(), out.global.w()}, T(0.5));
  }
  out.fused = fuse_images(out.global, out.local, out.weights);
  return out;
}

template <typename T>
void Generator<T>::backward(ParamStore<T>& store, const GeneratorOutput<T>& out, const GeneratorCache<T>& cache,
                            const Tensor<T>& valid, const GeneratorUpstream<T>& upstream) const {
  const Tensor<T> d_fused = upstream.fused.empty() ? Tensor<T>(out.fused.shape()) : upstream.fused;
  Tensor<T> d_fup(out.upsampled.shape());
  Tensor<T> d_global;

  if (!cfg_.use_local) {
    d_global = d_fused;
  } else {
    auto fg = fuse_images_backward(out.global, out.local, out.weights, d_fused);
    d_global = std::move(fg.global);
    if (cfg_.use_weight_map) {
      const Tensor<T> d_logits = channel_softmax_backward(out.weights, fg.weights);
      accumulate(d_fup, avg_pool_backward(weight_.backward(store, cache.weight_map, d_logits), kWeightMapPool));
    }

    const std::size_t K = local_.size();
    std::vector<Tensor<T>> d_images;
    if (cfg_.fusion == Fusion::add) {
      d_images.assign(K, fg.local);
    } else {
      const Tensor<T> d_cat = fusion_.backward(store, cache.local_fusion, fg.local);
      d_images = split_channels(d_cat, std::vector<int>(K, 3));
    }
    if (!upstream.class_images.empty()) {
      if (upstream.class_images.size() != K) throw ShapeError("Generator::backward: class image gradient count");
      for (std::size_t i = 0; i < K; ++i) accumulate(d_images[i], upstream.class_images[i]);
    }

    std::vector<Tensor<T>> d_features;
    for (std::size_t i = 0; i < K; ++i) d_features.push_back(local_[i].backward(store, cache.local[i], d_images[i]));

    if (cfg_.use_classifier && upstream.ce_weight != 0) {
      auto cg = classify_backward(out.class_features, out.masks, valid, store.value("G.cls.weight"), out.classes,
                                  upstream.ce_weight);
      store.accumulate("G.cls.weight", cg.weight);
      store.accumulate("G.cls.bias", cg.bias);
      for (std::size_t i = 0; i < K; ++i) accumulate(d_features[i], cg.features[i]);
    }
    accumulate(d_fup, mask_filter_backward(out.masks, d_features));
  }

  accumulate(d_fup, global_.backward(store, cache.global, d_global));
  const Tensor<T> d_f = up_.backward(store, cache.upsampler, d_fup);
  encoder_.backward(store, cache.encoder, d_f);
}

template <typename T>
Discriminator<T>::Discriminator(const LgganConfig& cfg, std::string prefix, int cond_channels)
    : prefix_(std::move(prefix)) {
  const int dc = cfg.disc_channels;
  stack_ = ConvStack<T>({{prefix_ + ".0", ConvSpec::square(3 + cond_channels, dc, 4, 2, 1), false, false, Act::lrelu},
                         {prefix_ + ".1", ConvSpec::square(dc, 2 * dc, 4, 2, 1), false, false, Act::lrelu},
                         {prefix_ + ".2", ConvSpec::square(2 * dc, 1, 3, 1, 1), false, false, Act::none}});
}

template <typename T>
Tensor<T> Discriminator<T>::forward(const ParamStore<T>& store, const Tensor<T>& image, const Tensor<T>& condition,
                                    std::vector<LayerCache<T>>* cache) const {
  if (image.rank() != 4 || image.c() != 3) throw ShapeError(prefix_ + ": image must be N x 3 x H x W");
  return stack_.forward(store, concat_channels<T>({&image, &condition}), cache);
}

template <typename T>
Tensor<T> Discriminator<T>::backward(ParamStore<T>& store, const std::vector<LayerCache<T>>& cache,
                                     const Tensor<T>& grad_logits) const {
  return slice_channels(stack_.backward(store, cache, grad_logits), 0, 3);
}

template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace sau::lggan
