#include "sau/lggan/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sau::lggan {

namespace {

template <typename T>
void check_masks(const Tensor<T>& x, const Tensor<T>& masks, const char* what) {
  require_rank4(x, what);
  require_rank4(masks, what);
  if (masks.n() != x.n() || masks.h() != x.h() || masks.w() != x.w()) {
    throw ShapeError(std::string(what) + ": masks " + to_string(masks.shape()) + " do not align with " +
                     to_string(x.shape()));
  }
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

template <typename T>
Tensor<T> align_masks(const Tensor<T>& masks, int h, int w) {
  require_rank4(masks, "align_masks");
  if (masks.h() == h && masks.w() == w) return masks;
  const bool down = masks.h() % h == 0 && masks.w() % w == 0;
  const bool up = h % masks.h() == 0 && w % masks.w() == 0;
  if (!down && !up) {
    throw ShapeError("align_masks: " + to_string(masks.shape()) + " cannot be resampled to " + std::to_string(h) +
                     "x" + std::to_string(w) + " by an integer factor");
  }
  Tensor<T> out({masks.n(), masks.c(), h, w});
  for (int n = 0; n < masks.n(); ++n)
    for (int c = 0; c < masks.c(); ++c)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          // Sample the centre of each target cell.
          const int si = down ? i * (masks.h() / h) + (masks.h() / h) / 2 : i / (h / masks.h());
          const int sj = down ? j * (masks.w() / w) + (masks.w() / w) / 2 : j / (w / masks.w());
          out.at(n, c, i, j) = masks.at(n, c, si, sj);
        }
  return out;
}

template <typename T>
std::vector<Tensor<T>> mask_filter(const Tensor<T>& features, const Tensor<T>& masks) {
  check_masks(features, masks, "mask_filter");
  const int C = features.c();
  const std::size_t plane = static_cast<std::size_t>(features.h()) * features.w();
  std::vector<Tensor<T>> out;
  out.reserve(static_cast<std::size_t>(masks.c()));
  for (int k = 0; k < masks.c(); ++k) {
    Tensor<T> f(features.shape());
    for (int n = 0; n < features.n(); ++n) {
      const T* m = masks.data() + masks.offset(n, k, 0, 0);
      for (int c = 0; c < C; ++c) {
        const T* src = features.data() + features.offset(n, c, 0, 0);
        T* dst = f.data() + f.offset(n, c, 0, 0);
        for (std::size_t p = 0; p < plane; ++p) dst[p] = m[p] * src[p];
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

template <typename T>
Tensor<T> mask_filter_backward(const Tensor<T>& masks, const std::vector<Tensor<T>>& grads) {
  if (grads.empty() || static_cast<int>(grads.size()) != masks.c()) {
    throw ShapeError("mask_filter_backward: need one gradient per class");
  }
  Tensor<T> out(grads[0].shape());
  const std::size_t plane = static_cast<std::size_t>(out.h()) * out.w();
  for (std::size_t k = 0; k < grads.size(); ++k) {
    require_same_shape(out, grads[k], "mask_filter_backward");
    check_masks(grads[k], masks, "mask_filter_backward");
    for (int n = 0; n < out.n(); ++n) {
      const T* m = masks.data() + masks.offset(n, static_cast<int>(k), 0, 0);
      for (int c = 0; c < out.c(); ++c) {
        const T* src = grads[k].data() + grads[k].offset(n, c, 0, 0);
        T* dst = out.data() + out.offset(n, c, 0, 0);
        for (std::size_t p = 0; p < plane; ++p) dst[p] += m[p] * src[p];
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> sum_images(const std::vector<Tensor<T>>& images) {
  if (images.empty()) throw ShapeError("sum_images: no inputs");
  Tensor<T> out = images[0];
  for (std::size_t k = 1; k < images.size(); ++k) {
    require_same_shape(out, images[k], "sum_images");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += images[k][i];
  }
  return out;
}

template <typename T>
ClassifyResult<T> classify_classes(const std::vector<Tensor<T>>& features, const Tensor<T>& masks,
                                   const Tensor<T>& valid, const Tensor<T>& weight, const Tensor<T>& bias) {
  const int K = masks.c();
  if (K < 2) throw ShapeError("classify_classes: need at least two classes");
  if (static_cast<int>(features.size()) != K) throw ShapeError("classify_classes: one feature map per class required");
  const int N = masks.n();
  const int C = features[0].c();
  if (valid.shape() != Shape{N, K}) throw ShapeError("classify_classes: valid must be N x K");
  if (weight.shape() != Shape{K, C} || bias.shape() != Shape{K}) {
    throw ShapeError("classify_classes: classifier must be K x C with K biases");
  }
  const std::size_t plane = static_cast<std::size_t>(masks.h()) * masks.w();

  ClassifyResult<T> r;
  r.pooled = Tensor<T>({N, K, C});
  r.logits = Tensor<T>({N, K, K});
  double total = 0;
  for (int n = 0; n < N; ++n) {
    double sample = 0;
    int valid_count = 0;
    for (int i = 0; i < K; ++i) {
      check_masks(features[static_cast<std::size_t>(i)], masks, "classify_classes");
      if (valid[static_cast<std::size_t>(n) * K + i] == T(0)) continue;
      const T* m = masks.data() + masks.offset(n, i, 0, 0);
      std::size_t count = 0;
      for (std::size_t p = 0; p < plane; ++p) count += m[p] != T(0);
      T* pooled = r.pooled.data() + (static_cast<std::size_t>(n) * K + i) * C;
      if (count > 0) {
        for (int c = 0; c < C; ++c) {
          const T* f = features[static_cast<std::size_t>(i)].data() + features[static_cast<std::size_t>(i)].offset(n, c, 0, 0);
          double acc = 0;
          for (std::size_t p = 0; p < plane; ++p) {
            if (m[p] != T(0)) acc += f[p];
          }
          pooled[c] = static_cast<T>(acc / static_cast<double>(count));
        }
      }
      T* row = r.logits.data() + (static_cast<std::size_t>(n) * K + i) * K;
      double mx = -INFINITY;
      for (int j = 0; j < K; ++j) {
        double acc = bias[static_cast<std::size_t>(j)];
        for (int c = 0; c < C; ++c) acc += static_cast<double>(weight[static_cast<std::size_t>(j) * C + c]) * pooled[c];
        row[j] = static_cast<T>(acc);
        mx = std::max(mx, static_cast<double>(row[j]));
      }
      double z = 0;
      for (int j = 0; j < K; ++j) z += std::exp(row[j] - mx);
      sample += mx + std::log(z) - row[i];
      ++valid_count;
    }
    if (valid_count > 0) total += sample / valid_count;
  }
  r.loss = total / N;
  return r;
}

template <typename T>
ClassifyGrads<T> classify_backward(const std::vector<Tensor<T>>& features, const Tensor<T>& masks,
                                   const Tensor<T>& valid, const Tensor<T>& weight, const ClassifyResult<T>& result,
                                   double scale) {
  const int K = masks.c();
  const int N = masks.n();
  const int C = weight.dim(1);
  const std::size_t plane = static_cast<std::size_t>(masks.h()) * masks.w();
  ClassifyGrads<T> g;
  g.weight = Tensor<T>(weight.shape());
  g.bias = Tensor<T>({K});
  for (const auto& f : features) g.features.emplace_back(f.shape());
  std::vector<double> dlogit(static_cast<std::size_t>(K));
  std::vector<double> dpooled(static_cast<std::size_t>(C));
  for (int n = 0; n < N; ++n) {
    int valid_count = 0;
    for (int i = 0; i < K; ++i) valid_count += valid[static_cast<std::size_t>(n) * K + i] != T(0);
    if (valid_count == 0) continue;
    const double coef = scale / (static_cast<double>(valid_count) * N);
    for (int i = 0; i < K; ++i) {
      if (valid[static_cast<std::size_t>(n) * K + i] == T(0)) continue;
      const T* row = result.logits.data() + (static_cast<std::size_t>(n) * K + i) * K;
      const T* pooled = result.pooled.data() + (static_cast<std::size_t>(n) * K + i) * C;
      double mx = -INFINITY;
      for (int j = 0; j < K; ++j) mx = std::max(mx, static_cast<double>(row[j]));
      double z = 0;
      for (int j = 0; j < K; ++j) z += std::exp(row[j] - mx);
      for (int j = 0; j < K; ++j) dlogit[static_cast<std::size_t>(j)] = coef * (std::exp(row[j] - mx) / z - (j == i ? 1.0 : 0.0));
      std::fill(dpooled.begin(), dpooled.end(), 0.0);
      for (int j = 0; j < K; ++j) {
        const double d = dlogit[static_cast<std::size_t>(j)];
        g.bias[static_cast<std::size_t>(j)] += static_cast<T>(d);
        for (int c = 0; c < C; ++c) {
          g.weight[static_cast<std::size_t>(j) * C + c] += static_cast<T>(d * pooled[c]);
          dpooled[static_cast<std::size_t>(c)] += d * weight[static_cast<std::size_t>(j) * C + c];
        }
      }
      const T* m = masks.data() + masks.offset(n, i, 0, 0);
      std::size_t count = 0;
      for (std::size_t p = 0; p < plane; ++p) count += m[p] != T(0);
      if (count == 0) continue;
      Tensor<T>& gf = g.features[static_cast<std::size_t>(i)];
      for (int c = 0; c < C; ++c) {
        const T v = static_cast<T>(dpooled[static_cast<std::size_t>(c)] / static_cast<double>(count));
        T* dst = gf.data() + gf.offset(n, c, 0, 0);
        for (std::size_t p = 0; p < plane; ++p) dst[p] = m[p] != T(0) ? v : T(0);
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> fuse_images(const Tensor<T>& global, const Tensor<T>& local, const Tensor<T>& weights) {
  require_same_shape(global, local, "fuse_images");
  require_rank4(weights, "fuse_images");
  if (weights.n() != global.n() || weights.c() != 2 || weights.h() != global.h() || weights.w() != global.w()) {
    throw ShapeError("fuse_images: weight map " + to_string(weights.shape()) + " does not match images " +
                     to_string(global.shape()));
  }
  Tensor<T> out(global.shape());
  const std::size_t plane = static_cast<std::size_t>(global.h()) * global.w();
  for (int n = 0; n < global.n(); ++n) {
    const T* wg = weights.data() + weights.offset(n, 0, 0, 0);
    const T* wl = weights.data() + weights.offset(n, 1, 0, 0);
    for (int c = 0; c < global.c(); ++c) {
      const std::size_t base = global.offset(n, c, 0, 0);
      for (std::size_t p = 0; p < plane; ++p) out[base + p] = global[base + p] * wg[p] + local[base + p] * wl[p];
    }
  }
  return out;
}

template <typename T>
FuseGrads<T> fuse_images_backward(const Tensor<T>& global, const Tensor<T>& local, const Tensor<T>& weights,
                                  const Tensor<T>& grad_out) {
  require_same_shape(global, grad_out, "fuse_images_backward");
  FuseGrads<T> g{Tensor<T>(global.shape()), Tensor<T>(local.shape()), Tensor<T>(weights.shape())};
  const std::size_t plane = static_cast<std::size_t>(global.h()) * global.w();
  for (int n = 0; n < global.n(); ++n) {
    const T* wg = weights.data() + weights.offset(n, 0, 0, 0);
    const T* wl = weights.data() + weights.offset(n, 1, 0, 0);
    T* dwg = g.weights.data() + g.weights.offset(n, 0, 0, 0);
    T* dwl = g.weights.data() + g.weights.offset(n, 1, 0, 0);
    for (int c = 0; c < global.c(); ++c) {
      const std::size_t base = global.offset(n, c, 0, 0);
      for (std::size_t p = 0; p < plane; ++p) {
        const T go = grad_out[base + p];
        g.global[base + p] = go * wg[p];
        g.local[base + p] = go * wl[p];
        dwg[p] += go * global[base + p];
        dwl[p] += go * local[base + p];
      }
    }
  }
  return g;
}

template <typename T>
double masked_l1(const Tensor<T>& real, const std::vector<Tensor<T>>& outputs, const Tensor<T>& masks) {
  if (static_cast<int>(outputs.size()) != masks.c()) throw ShapeError("masked_l1: one output per class required");
  check_masks(real, masks, "masked_l1");
  const std::size_t plane = static_cast<std::size_t>(real.h()) * real.w();
  double total = 0;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    require_same_shape(real, outputs[k], "masked_l1");
    double acc = 0;
    for (int n = 0; n < real.n(); ++n) {
      const T* m = masks.data() + masks.offset(n, static_cast<int>(k), 0, 0);
      for (int c = 0; c < real.c(); ++c) {
        const std::size_t base = real.offset(n, c, 0, 0);
        for (std::size_t p = 0; p < plane; ++p) acc += std::abs(static_cast<double>(real[base + p] * m[p]) - outputs[k][base + p]);
      }
    }
    total += acc / static_cast<double>(real.size());
  }
  return total;
}

template <typename T>
std::vector<Tensor<T>> masked_l1_backward(const Tensor<T>& real, const std::vector<Tensor<T>>& outputs,
                                          const Tensor<T>& masks, double scale) {
  check_masks(real, masks, "masked_l1_backward");
  const std::size_t plane = static_cast<std::size_t>(real.h()) * real.w();
  const T step = static_cast<T>(scale / static_cast<double>(real.size()));
  std::vector<Tensor<T>> grads;
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    Tensor<T> g(real.shape());
    for (int n = 0; n < real.n(); ++n) {
      const T* m = masks.data() + masks.offset(n, static_cast<int>(k), 0, 0);
      for (int c = 0; c < real.c(); ++c) {
        const std::size_t base = real.offset(n, c, 0, 0);
        for (std::size_t p = 0; p < plane; ++p) {
          const T d = outputs[k][base + p] - real[base + p] * m[p];
          g[base + p] = d > 0 ? step : (d < 0 ? -step : T(0));
        }
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

template <typename T>
double mean_abs_error(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mean_abs_error");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(static_cast<double>(a[i]) - b[i]);
  return acc / static_cast<double>(a.size());
}

template <typename T>
GanTerm<T> gan_d_loss(const Tensor<T>& real_logits, const Tensor<T>& fake_logits, GanLossKind kind, double scale) {
  GanTerm<T> t;
  t.grad_real = Tensor<T>(real_logits.shape());
  t.grad_fake = Tensor<T>(fake_logits.shape());
  const double nr = static_cast<double>(real_logits.size());
  const double nf = static_cast<double>(fake_logits.size());
  double lr = 0, lf = 0;
  for (std::size_t i = 0; i < real_logits.size(); ++i) {
    const double x = real_logits[i];
    if (kind == GanLossKind::logistic) {
      lr += softplus(-x);
      t.grad_real[i] = static_cast<T>(-scale * sigmoid(-x) / nr);
    } else {
      lr += std::max(0.0, 1.0 - x);
      t.grad_real[i] = static_cast<T>(x < 1.0 ? -scale / nr : 0.0);
    }
  }
  for (std::size_t i = 0; i < fake_logits.size(); ++i) {
    const double x = fake_logits[i];
    if (kind == GanLossKind::logistic) {
      lf += softplus(x);
      t.grad_fake[i] = static_cast<T>(scale * sigmoid(x) / nf);
    } else {
      lf += std::max(0.0, 1.0 + x);
      t.grad_fake[i] = static_cast<T>(x > -1.0 ? scale / nf : 0.0);
    }
  }
  t.loss = lr / nr + lf / nf;
  return t;
}

template <typename T>
GanTerm<T> gan_g_loss(const Tensor<T>& fake_logits, GanLossKind kind, double scale) {
  GanTerm<T> t;
  t.grad_fake = Tensor<T>(fake_logits.shape());
  const double nf = static_cast<double>(fake_logits.size());
  double l = 0;
  for (std::size_t i = 0; i < fake_logits.size(); ++i) {
    const double x = fake_logits[i];
    if (kind == GanLossKind::logistic) {
      l += softplus(-x);
      t.grad_fake[i] = static_cast<T>(-scale * sigmoid(-x) / nf);
    } else {
      l -= x;
      t.grad_fake[i] = static_cast<T>(-scale / nf);
    }
  }
  t.loss = l / nf;
  return t;
}

#define SAU_INSTANTIATE_LOSSES(T)                                                                                    \
  template Tensor<T> align_masks(const Tensor<T>&, int, int);                                                        \
  template std::vector<Tensor<T>> mask_filter(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> mask_filter_backward(const Tensor<T>&, const std::vector<Tensor<T>>&);                          \
  template Tensor<T> sum_images(const std::vector<Tensor<T>>&);                                                      \
  template ClassifyResult<T> classify_classes(const std::vector<Tensor<T>>&, const Tensor<T>&, const Tensor<T>&,     \
                                              const Tensor<T>&, const Tensor<T>&);                                   \
  template ClassifyGrads<T> classify_backward(const std::vector<Tensor<T>>&, const Tensor<T>&, const Tensor<T>&,     \
                                              const Tensor<T>&, const ClassifyResult<T>&, double);                   \
  template Tensor<T> fuse_images(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                              \
  template FuseGrads<T> fuse_images_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template double masked_l1(const Tensor<T>&, const std::vector<Tensor<T>>&, const Tensor<T>&);                      \
  template std::vector<Tensor<T>> masked_l1_backward(const Tensor<T>&, const std::vector<Tensor<T>>&,                \
                                                     const Tensor<T>&, double);                                      \
  template double mean_abs_error(const Tensor<T>&, const Tensor<T>&);                                                \
  template GanTerm<T> gan_d_loss(const Tensor<T>&, const Tensor<T>&, GanLossKind, double);                           \
  template GanTerm<T> gan_g_loss(const Tensor<T>&, GanLossKind, double);

SAU_INSTANTIATE_LOSSES(float)
SAU_INSTANTIATE_LOSSES(double)

}  // namespace sau::lggan
