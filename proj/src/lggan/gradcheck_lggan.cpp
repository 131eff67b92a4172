#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "sau/gradcheck.hpp"
#include "sau/lggan/model.hpp"

namespace sau {

namespace {

using Inputs = std::vector<TensorD>;
using lggan::GanLossKind;
using Store = lggan::ParamStore<double>;

struct Layout {
  TensorD masks;  // N x K x H x W one-hot
  TensorD valid;  // N x K
};

Layout random_layout(Rng& rng, int n, int k, int h, int w) {
  Layout l{TensorD({n, k, h, w}), TensorD({n, k})};
  for (int b = 0; b < n; ++b)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const int c = rng.uniform_int(0, k - 1);
        l.masks.at(b, c, i, j) = 1;
        l.valid[static_cast<std::size_t>(b * k + c)] = 1;
      }
  return l;
}

// Smallest config whose every stage is exercised: 4x4 images, f at 2x2, G_w input at 1x1.
lggan::LgganConfig tiny_config(lggan::Fusion fusion = lggan::Fusion::conv,
                               lggan::UpsamplerKind up = lggan::UpsamplerKind::sau) {
  lggan::LgganConfig c;
  c.n_classes = 3;
  c.image_size = 4;
  c.channels = 2;
  c.s = 2;
  c.k = 3;
  c.c_compressed = 2;
  c.upsampler = up;
  c.fusion = fusion;
  c.global_hidden = 2;
  c.local_hidden = 2;
  c.gw_hidden1 = 3;
  c.gw_hidden2 = 2;
  c.disc_channels = 2;
  return c;
}

// Perturbs every parameter so zero-initialised biases and unit norm gains are tested too.
void jitter(Store& store, Rng& rng) {
  for (const auto& name : store.names()) {
    for (auto& v : store.value(name).values()) v += 0.1 * rng.normal();
  }
}

// Wraps a parameterised module as a problem over [x (when differentiable), params...].
struct Module {
  std::function<TensorD(const Store&, const TensorD&)> forward;
  // Accumulates parameter gradients into the store and returns dL/dx.
  std::function<TensorD(Store&, const TensorD&, const TensorD&)> backward;
};

GradProblem module_problem(Store store, const std::string& prefix, TensorD x, bool x_differentiable, Module m,
                           const std::string& exclude = "") {
  auto names = store.names(prefix);
  if (!exclude.empty()) std::erase_if(names, [&](const std::string& n) { return n.rfind(exclude, 0) == 0; });
  const auto base = std::make_shared<const Store>(std::move(store));
  const auto fixed_x = std::make_shared<const TensorD>(x);
  GradProblem p;
  if (x_differentiable) {
    p.names.push_back("x");
    p.inputs.push_back(std::move(x));
  }
  for (const auto& n : names) {
    p.names.push_back(n);
    p.inputs.push_back(base->value(n));
  }
  const std::size_t first = x_differentiable ? 1 : 0;
  auto load = [base, names, first](const Inputs& in) {
    Store s = *base;
    for (std::size_t i = 0; i < names.size(); ++i) s.value(names[i]) = in[first + i];
    s.zero_grad();
    return s;
  };
  auto input = [fixed_x, x_differentiable](const Inputs& in) -> const TensorD& {
    return x_differentiable ? in[0] : *fixed_x;
  };
  p.forward = [m, load, input](const Inputs& in) { return m.forward(load(in), input(in)); };
  p.backward = [m, load, input, names, x_differentiable](const Inputs& in, const TensorD& g) {
    Store s = load(in);
    TensorD dx = m.backward(s, input(in), g);
    Inputs out;
    if (x_differentiable) out.push_back(std::move(dx));
    for (const auto& n : names) out.push_back(s.grad(n));
    return out;
  };
  return p;
}

Module stack_module(const lggan::ConvStack<double>& stack) {
  return {[stack](const Store& s, const TensorD& x) { return stack.forward(s, x, nullptr); },
          [stack](Store& s, const TensorD& x, const TensorD& g) {
            std::vector<lggan::LayerCache<double>> cache;
            stack.forward(s, x, &cache);
            return stack.backward(s, cache, g);
          }};
}

struct TinyGenerator {
  lggan::LgganConfig cfg;
  lggan::Generator<double> gen;
  Store store;
};

TinyGenerator tiny_generator(Rng& rng, lggan::LgganConfig cfg) {
  TinyGenerator t{cfg, lggan::Generator<double>(cfg), {}};
  t.gen.init(t.store, rng);
  jitter(t.store, rng);
  return t;
}

// Smallest |pre-activation| over the activated layers of a stack.
double kink_margin(const lggan::ConvStack<double>& stack, const std::vector<lggan::LayerCache<double>>& cache) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cache.size(); ++i) {
    if (stack.layers()[i].act == lggan::Act::none) continue;
    const auto& pre = cache[i].norm_out.empty() ? cache[i].conv_out : cache[i].norm_out;
    for (const double v : pre.values()) m = std::min(m, std::abs(v));
  }
  return m;
}

double kink_margin(const lggan::Generator<double>& gen, const lggan::GeneratorCache<double>& c) {
  double m = std::min(kink_margin(gen.encoder(), c.encoder), kink_margin(gen.global_stack(), c.global));
  for (std::size_t i = 0; i < c.local.size(); ++i) m = std::min(m, kink_margin(gen.local_stacks()[i], c.local[i]));
  if (!c.weight_map.empty()) m = std::min(m, kink_margin(gen.weight_stack(), c.weight_map));
  return m;
}

// A generator and layout whose activations all sit at least `margin` from their kinks, so
// the finite-difference step never crosses one.
struct SmoothDraw {
  TinyGenerator t;
  Layout layout;
};

SmoothDraw smooth_generator(Rng& rng, const lggan::LgganConfig& cfg, int n, double margin = 1e-3) {
  for (int attempt = 0;; ++attempt) {
    SmoothDraw d{tiny_generator(rng, cfg), random_layout(rng, n, cfg.n_classes, cfg.image_size, cfg.image_size)};
    lggan::GeneratorCache<double> cache;
    d.t.gen.forward(d.t.store, d.layout.masks, d.layout.valid, nullptr, &cache);
    if (kink_margin(d.t.gen, cache) >= margin || attempt == 200) return d;
  }
}

int batch_size(Rng& rng, const Shape& hint) { return hint.empty() ? rng.uniform_int(1, 2) : hint[0]; }

TensorD scalar(double v) { return TensorD({1}, v); }

// Logits kept away from the hinge kinks at +-1.
TensorD hinge_safe_logits(Shape dims, Rng& rng) {
  TensorD t = random_normal<double>(std::move(dims), rng);
  for (auto& v : t.values()) {
    while (std::abs(std::abs(v) - 1.0) < 1e-3) v = rng.normal();
  }
  return t;
}

void register_gan(GradRegistry& r, GanLossKind kind) {
  const std::string suffix = kind == GanLossKind::logistic ? "logistic" : "hinge";
  r.add("gan_d_" + suffix, [kind](Rng& rng, const Shape& hint) {
    const Shape ls = hint.empty() ? Shape{rng.uniform_int(1, 2), 1, rng.uniform_int(1, 6), rng.uniform_int(1, 6)} : hint;
    GradProblem p;
    p.names = {"real", "fake"};
    p.inputs = {hinge_safe_logits(ls, rng), hinge_safe_logits(ls, rng)};
    p.forward = [kind](const Inputs& in) { return scalar(lggan::gan_d_loss(in[0], in[1], kind).loss); };
    p.backward = [kind](const Inputs& in, const TensorD& g) {
      auto t = lggan::gan_d_loss(in[0], in[1], kind, g[0]);
      return Inputs{std::move(t.grad_real), std::move(t.grad_fake)};
    };
    return p;
  });
  r.add("gan_g_" + suffix, [kind](Rng& rng, const Shape& hint) {
    const Shape ls = hint.empty() ? Shape{rng.uniform_int(1, 2), 1, rng.uniform_int(1, 6), rng.uniform_int(1, 6)} : hint;
    GradProblem p;
    p.names = {"fake"};
    p.inputs = {hinge_safe_logits(ls, rng)};
    p.forward = [kind](const Inputs& in) { return scalar(lggan::gan_g_loss(in[0], kind).loss); };
    p.backward = [kind](const Inputs& in, const TensorD& g) {
      return Inputs{lggan::gan_g_loss(in[0], kind, g[0]).grad_fake};
    };
    return p;
  });
}

void register_losses(GradRegistry& r) {
  r.add("mask_filter", [](Rng& rng, const Shape& hint) {
    const Shape fs = hint.empty() ? Shape{rng.uniform_int(1, 2), rng.uniform_int(1, 3), rng.uniform_int(1, 6),
                                          rng.uniform_int(1, 6)}
                                  : hint;
    const int k = rng.uniform_int(1, 4);
    const Layout l = random_layout(rng, fs[0], k, fs[2], fs[3]);
    GradProblem p;
    p.names = {"f"};
    p.inputs = {random_normal<double>(fs, rng)};
    // Stacks the per-class outputs along the channel axis so one tensor carries all of them.
    p.forward = [l](const Inputs& in) {
      const auto parts = lggan::mask_filter(in[0], l.masks);
      std::vector<const TensorD*> ptrs;
      for (const auto& t : parts) ptrs.push_back(&t);
      return concat_channels(ptrs);
    };
    p.backward = [l, k](const Inputs& in, const TensorD& g) {
      return Inputs{lggan::mask_filter_backward(l.masks, split_channels(g, std::vector<int>(k, in[0].c())))};
    };
    return p;
  });

  r.add("classify_classes", [](Rng& rng, const Shape& hint) {
    const Shape fs = hint.empty() ? Shape{rng.uniform_int(1, 2), rng.uniform_int(1, 3), rng.uniform_int(1, 6),
                                          rng.uniform_int(1, 6)}
                                  : hint;
    const int k = rng.uniform_int(2, 4);
    const Layout l = random_layout(rng, fs[0], k, fs[2], fs[3]);
    GradProblem p;
    for (int i = 0; i < k; ++i) {
      p.names.push_back("F" + std::to_string(i));
      p.inputs.push_back(random_normal<double>(fs, rng));
    }
    p.names.insert(p.names.end(), {"weight", "bias"});
    p.inputs.push_back(random_normal<double>({k, fs[1]}, rng));
    p.inputs.push_back(random_normal<double>({k}, rng));
    const auto split = [k](const Inputs& in) { return std::vector<TensorD>(in.begin(), in.begin() + k); };
    p.forward = [l, k, split](const Inputs& in) {
      return scalar(lggan::classify_classes(split(in), l.masks, l.valid, in[k], in[k + 1]).loss);
    };
    p.backward = [l, k, split](const Inputs& in, const TensorD& g) {
      const auto feats = split(in);
      const auto res = lggan::classify_classes(feats, l.masks, l.valid, in[k], in[k + 1]);
      auto grads = lggan::classify_backward(feats, l.masks, l.valid, in[k], res, g[0]);
      Inputs out = std::move(grads.features);
      out.push_back(std::move(grads.weight));
      out.push_back(std::move(grads.bias));
      return out;
    };
    return p;
  });

  r.add("fuse_images", [](Rng& rng, const Shape& hint) {
    const Shape is = hint.empty() ? Shape{rng.uniform_int(1, 2), 3, rng.uniform_int(1, 6), rng.uniform_int(1, 6)} : hint;
    GradProblem p;
    p.names = {"global", "local", "weights"};
    p.inputs = {random_normal<double>(is, rng), random_normal<double>(is, rng),
                channel_softmax(random_normal<double>({is[0], 2, is[2], is[3]}, rng))};
    p.forward = [](const Inputs& in) { return lggan::fuse_images(in[0], in[1], in[2]); };
    p.backward = [](const Inputs& in, const TensorD& g) {
      auto f = lggan::fuse_images_backward(in[0], in[1], in[2], g);
      return Inputs{std::move(f.global), std::move(f.local), std::move(f.weights)};
    };
    return p;
  });

  r.add("masked_l1", [](Rng& rng, const Shape& hint) {
    const Shape is = hint.empty() ? Shape{rng.uniform_int(1, 2), 3, rng.uniform_int(1, 6), rng.uniform_int(1, 6)} : hint;
    const int k = rng.uniform_int(1, 3);
    const Layout l = random_layout(rng, is[0], k, is[2], is[3]);
    const TensorD real = random_normal<double>(is, rng);
    GradProblem p;
    for (int i = 0; i < k; ++i) {
      p.names.push_back("out" + std::to_string(i));
      // Residuals away from zero keep |.| smooth under the finite-difference step.
      TensorD o = random_normal<double>(is, rng);
      const auto filtered = lggan::mask_filter(real, l.masks);
      for (std::size_t e = 0; e < o.size(); ++e) {
        while (std::abs(o[e] - filtered[static_cast<std::size_t>(i)][e]) < 1e-3) o[e] = rng.normal();
      }
      p.inputs.push_back(std::move(o));
    }
    p.forward = [l, real](const Inputs& in) { return scalar(lggan::masked_l1(real, in, l.masks)); };
    p.backward = [l, real](const Inputs& in, const TensorD& g) {
      return lggan::masked_l1_backward(real, in, l.masks, g[0]);
    };
    return p;
  });

  register_gan(r, GanLossKind::logistic);
  register_gan(r, GanLossKind::hinge);
}

void register_modules(GradRegistry& r) {
  r.add("encode", [](Rng& rng, const Shape& hint) {
    auto t = tiny_generator(rng, tiny_config());
    const int n = batch_size(rng, hint);
    TensorD x = random_normal<double>({n, t.cfg.input_channels(), t.cfg.image_size, t.cfg.image_size}, rng);
    return module_problem(std::move(t.store), "G.enc.", std::move(x), true, stack_module(t.gen.encoder()));
  });

  r.add("global_generate", [](Rng& rng, const Shape& hint) {
    auto t = tiny_generator(rng, tiny_config());
    const int n = batch_size(rng, hint);
    TensorD x = random_normal<double>({n, t.cfg.channels, t.cfg.image_size, t.cfg.image_size}, rng);
    return module_problem(std::move(t.store), "G.global.", std::move(x), true, stack_module(t.gen.global_stack()));
  });

  for (const auto fusion : {lggan::Fusion::add, lggan::Fusion::conv}) {
    r.add("local_generate_" + lggan::to_string(fusion), [fusion](Rng& rng, const Shape& hint) {
      auto t = tiny_generator(rng, tiny_config(fusion));
      const int n = batch_size(rng, hint);
      const int k = t.cfg.n_classes;
      const int c = t.cfg.channels;
      const int hw = t.cfg.image_size;
      TensorD x = random_normal<double>({n, k * c, hw, hw}, rng);
      const auto gen = std::make_shared<const lggan::Generator<double>>(t.gen);
      Module m;
      m.forward = [gen, k, c](const Store& s, const TensorD& x) {
        return gen->local_generate(s, split_channels(x, std::vector<int>(k, c)), nullptr, nullptr);
      };
      m.backward = [gen, k, c, fusion](Store& s, const TensorD& x, const TensorD& g) {
        lggan::GeneratorCache<double> cache;
        gen->local_generate(s, split_channels(x, std::vector<int>(k, c)), nullptr, &cache);
        std::vector<TensorD> d_images;
        if (fusion == lggan::Fusion::add) {
          d_images.assign(static_cast<std::size_t>(k), g);
        } else {
          d_images = split_channels(gen->local_fusion().backward(s, cache.local_fusion, g), std::vector<int>(k, 3));
        }
        std::vector<TensorD> dx;
        for (int i = 0; i < k; ++i) {
          const auto iu = static_cast<std::size_t>(i);
          dx.push_back(gen->local_stacks()[iu].backward(s, cache.local[iu], d_images[iu]));
        }
        std::vector<const TensorD*> ptrs;
        for (const auto& d : dx) ptrs.push_back(&d);
        return concat_channels(ptrs);
      };
      return module_problem(std::move(t.store), "G.local.", std::move(x), true, m);
    });
  }

  r.add("weight_maps", [](Rng& rng, const Shape& hint) {
    auto t = tiny_generator(rng, tiny_config());
    const int n = batch_size(rng, hint);
    TensorD x = random_normal<double>({n, t.cfg.channels, t.cfg.image_size, t.cfg.image_size}, rng);
    const auto gen = std::make_shared<const lggan::Generator<double>>(t.gen);
    Module m;
    m.forward = [gen](const Store& s, const TensorD& x) { return gen->weight_maps(s, x, nullptr); };
    m.backward = [gen](Store& s, const TensorD& x, const TensorD& g) {
      std::vector<lggan::LayerCache<double>> cache;
      const TensorD w = gen->weight_maps(s, x, &cache);
      const TensorD d_logits = channel_softmax_backward(w, g);
      return avg_pool_backward(gen->weight_stack().backward(s, cache, d_logits), lggan::kWeightMapPool);
    };
    return module_problem(std::move(t.store), "G.gw.", std::move(x), true, m);
  });

  for (const auto kind : lggan::all_upsamplers()) {
    r.add("upsampler_" + lggan::to_string(kind), [kind](Rng& rng, const Shape& hint) {
      auto t = tiny_generator(rng, tiny_config(lggan::Fusion::conv, kind));
      const int n = batch_size(rng, hint);
      const int fs = t.cfg.feature_size();
      TensorD x = random_normal<double>({n, t.cfg.channels, fs, fs}, rng);
      const auto up = std::make_shared<const lggan::Upsampler<double>>(t.gen.upsampler());
      Module m;
      m.forward = [up](const Store& s, const TensorD& x) { return up->forward(s, x, nullptr); };
      m.backward = [up](Store& s, const TensorD& x, const TensorD& g) {
        lggan::UpsamplerCache<double> cache;
        up->forward(s, x, &cache);
        return up->backward(s, cache, g);
      };
      return module_problem(std::move(t.store), "G.up.", std::move(x), true, m);
    });
  }

  r.add("discriminator", [](Rng& rng, const Shape& hint) {
    const auto cfg = tiny_config();
    const lggan::Discriminator<double> disc(cfg, "D.s", cfg.n_classes);
    Store store;
    disc.init(store, rng);
    jitter(store, rng);
    const int n = batch_size(rng, hint);
    const Layout l = random_layout(rng, n, cfg.n_classes, cfg.image_size, cfg.image_size);
    TensorD x = random_normal<double>({n, 3, cfg.image_size, cfg.image_size}, rng);
    Module m;
    m.forward = [disc, l](const Store& s, const TensorD& x) { return disc.forward(s, x, l.masks, nullptr); };
    m.backward = [disc, l](Store& s, const TensorD& x, const TensorD& g) {
      std::vector<lggan::LayerCache<double>> cache;
      disc.forward(s, x, l.masks, &cache);
      return disc.backward(s, cache, g);
    };
    return module_problem(std::move(store), "D.s.", std::move(x), true, m);
  });
}

// End-to-end generator: the fused image, and the scalar objective of the class images and
// classifier. SAU parameters are certified by upsampler_sau; here their gradients sit near the
// roundoff floor of the whole network, while the encoder still checks routing through the SAU.
void register_generator(GradRegistry& r) {
  r.add("generator", [](Rng& rng, const Shape& hint) {
    auto [t, l] = smooth_generator(rng, tiny_config(), batch_size(rng, hint));
    const int n = l.masks.n();
    const auto gen = std::make_shared<const lggan::Generator<double>>(t.gen);
    Module m;
    m.forward = [gen, l](const Store& s, const TensorD&) {
      return gen->forward(s, l.masks, l.valid, nullptr, nullptr).fused;
    };
    m.backward = [gen, l](Store& s, const TensorD&, const TensorD& g) {
      lggan::GeneratorCache<double> cache;
      const auto out = gen->forward(s, l.masks, l.valid, nullptr, &cache);
      lggan::GeneratorUpstream<double> up;
      up.fused = g;
      gen->backward(s, out, cache, l.valid, up);
      return TensorD();
    };
    return module_problem(std::move(t.store), "G.", l.masks, false, m, "G.up.");
  });

  // The upsampler here is parameter-free: SAU parameters barely move this O(1) scalar, so their
  // entries would sit at the roundoff floor. The fused-image problem above covers them.
  r.add("generator_objective", [](Rng& rng, const Shape& hint) {
    auto [t, l] = smooth_generator(rng, tiny_config(lggan::Fusion::conv, lggan::UpsamplerKind::nearest), batch_size(rng, hint));
    const int n = l.masks.n();
    const TensorD real = random_normal<double>({n, 3, t.cfg.image_size, t.cfg.image_size}, rng);
    const auto gen = std::make_shared<const lggan::Generator<double>>(t.gen);
    constexpr double kL1 = 0.7;
    Module m;
    m.forward = [gen, l, real](const Store& s, const TensorD&) {
      const auto out = gen->forward(s, l.masks, l.valid, nullptr, nullptr);
      return scalar(kL1 * lggan::masked_l1(real, out.class_images, out.masks) + out.classes.loss);
    };
    m.backward = [gen, l, real](Store& s, const TensorD&, const TensorD& g) {
      lggan::GeneratorCache<double> cache;
      const auto out = gen->forward(s, l.masks, l.valid, nullptr, &cache);
      lggan::GeneratorUpstream<double> up;
      up.class_images = lggan::masked_l1_backward(real, out.class_images, out.masks, kL1 * g[0]);
      up.ce_weight = g[0];
      gen->backward(s, out, cache, l.valid, up);
      return TensorD();
    };
    return module_problem(std::move(t.store), "G.", l.masks, false, m);
  });
}

}  // namespace

void register_lggan_ops(GradRegistry& r) {
  register_losses(r);
  register_modules(r);
  register_generator(r);
}

}  // namespace sau
