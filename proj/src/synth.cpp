#include "sau/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "sau/stns.hpp"

namespace sau::synth {

namespace {

// 27 colours on a {0.1, 0.5, 0.9}^3 grid; neighbours are 0.4 apart.
std::array<double, 3> grid_color(int idx) {
  constexpr double levels[3] = {0.1, 0.5, 0.9};
  return {levels[idx / 9], levels[(idx / 3) % 3], levels[idx % 3]};
}

constexpr int kGridColors = 27;

Palette make_palette(int n_classes, double amplitude, int offset) {
  if (n_classes < 1 || n_classes > kGridColors) {
    throw std::invalid_argument("palette: n_classes must be in [1, 27]");
  }
  Palette p;
  for (int i = 0; i < n_classes; ++i) {
    // 10 is coprime with 27, so consecutive classes land far apart on the grid.
    p.colors.push_back(grid_color((i * 10 + offset) % kGridColors));
    p.textures.push_back({1.0 + i % 3, 0.7 * i, amplitude});
  }
  return p;
}

double texture_value(const Texture& t, int i, int j, int size, double phase) {
  const double u = (j * std::cos(t.angle) + i * std::sin(t.angle)) / size;
  return t.amplitude * std::sin(2.0 * std::numbers::pi * t.frequency * u + phase);
}

}  // namespace

double Palette::min_distance() const {
  double best = INFINITY;
  for (std::size_t a = 0; a < colors.size(); ++a)
    for (std::size_t b = a + 1; b < colors.size(); ++b) {
      double d = 0;
      for (int c = 0; c < 3; ++c) d += (colors[a][c] - colors[b][c]) * (colors[a][c] - colors[b][c]);
      best = std::min(best, std::sqrt(d));
    }
  return best;
}

int Palette::nearest(const std::array<double, 3>& rgb) const {
  int best = 0;
  double best_d = INFINITY;
  for (int k = 0; k < size(); ++k) {
    double d = 0;
    for (int c = 0; c < 3; ++c) d += (colors[k][c] - rgb[c]) * (colors[k][c] - rgb[c]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

Palette Palette::primary(int n_classes, double amplitude) { return make_palette(n_classes, amplitude, 13); }
Palette Palette::alternate(int n_classes, double amplitude) { return make_palette(n_classes, amplitude, 4); }

void SceneSpec::validate() const {
  if (n_classes < 2 || n_classes > kGridColors) throw std::invalid_argument("scene: n_classes must be in [2, 27]");
  if (image_size < 16) throw std::invalid_argument("scene: image_size must be >= 16");
  if (min_shapes < 0 || max_shapes < min_shapes) throw std::invalid_argument("scene: bad shape count range");
  if (exponent < 0) throw std::invalid_argument("scene: exponent must be >= 0");
  if (amplitude < 0 || amplitude > 0.1) throw std::invalid_argument("scene: amplitude must be in [0, 0.1]");
}

void SceneSpec::apply(const KeyValues& kv) {
  for (const auto& [k, v] : kv) {
    if (k == "image_size") image_size = parse_int(k, v);
    else if (k == "n_classes") n_classes = parse_int(k, v);
    else if (k == "min_shapes") min_shapes = parse_int(k, v);
    else if (k == "max_shapes") max_shapes = parse_int(k, v);
    else if (k == "exponent") exponent = parse_double(k, v);
    else if (k == "amplitude") amplitude = parse_double(k, v);
    else if (k == "seed") seed = std::stoull(v);
    else throw std::invalid_argument("unknown scene key '" + k + "'");
  }
}

KeyValues SceneSpec::to_key_values() const {
  char buf[64];
  KeyValues kv{{"image_size", std::to_string(image_size)}, {"n_classes", std::to_string(n_classes)},
               {"min_shapes", std::to_string(min_shapes)}, {"max_shapes", std::to_string(max_shapes)},
               {"seed", std::to_string(seed)}};
  std::snprintf(buf, sizeof buf, "%.17g", exponent);
  kv["exponent"] = buf;
  std::snprintf(buf, sizeof buf, "%.17g", amplitude);
  kv["amplitude"] = buf;
  return kv;
}

void refresh_valid(Layout& layout) {
  layout.valid.assign(static_cast<std::size_t>(layout.n_classes), 0);
  for (const int l : layout.labels) {
    if (l < 0 || l >= layout.n_classes) throw std::out_of_range("layout label out of range");
    layout.valid[static_cast<std::size_t>(l)] = 1;
  }
}

Layout gen_layout(const SceneSpec& spec, Rng& rng) {
  spec.validate();
  const int S = spec.image_size;
  Layout L{S, spec.n_classes, std::vector<int>(static_cast<std::size_t>(S) * S, 0), {}};

  std::vector<double> cdf;
  double total = 0;
  for (int i = 1; i < spec.n_classes; ++i) {
    total += std::pow(i + 1.0, -spec.exponent);
    cdf.push_back(total);
  }
  const int shapes = rng.uniform_int(spec.min_shapes, spec.max_shapes);
  for (int s = 0; s < shapes; ++s) {
    const double u = rng.uniform() * total;
    const int cls = 1 + static_cast<int>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    const bool ellipse = rng.uniform() < 0.5;
    const double cy = rng.uniform(0, S), cx = rng.uniform(0, S);
    const double hy = rng.uniform(S / 16.0, S / 4.0), hx = rng.uniform(S / 16.0, S / 4.0);
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j) {
        const double dy = (i + 0.5 - cy) / hy, dx = (j + 0.5 - cx) / hx;
        const bool inside = ellipse ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (inside) L.labels[static_cast<std::size_t>(i) * S + j] = std::min(cls, spec.n_classes - 1);
      }
  }
  refresh_valid(L);
  return L;
}

TensorF render_target(const Layout& layout, const Palette& palette, View view) {
  if (palette.size() < layout.n_classes) throw std::invalid_argument("render_target: palette too small");
  const int S = layout.size;
  const double phase = view == View::A ? std::numbers::pi / 2 : 0.0;
  TensorF img({1, 3, S, S});
  for (int i = 0; i < S; ++i)
    for (int j = 0; j < S; ++j) {
      const int cls = layout.at(i, j);
      const double t = texture_value(palette.textures[static_cast<std::size_t>(cls)], i, j, S, phase);
      for (int c = 0; c < 3; ++c) {
        img.at(0, c, i, j) = static_cast<float>(std::clamp(palette.colors[static_cast<std::size_t>(cls)][c] + t, 0.0, 1.0));
      }
    }
  return img;
}

TensorF to_onehot(const Layout& layout) {
  TensorF m({1, layout.n_classes, layout.size, layout.size});
  for (int i = 0; i < layout.size; ++i)
    for (int j = 0; j < layout.size; ++j) m.at(0, layout.at(i, j), i, j) = 1.0f;
  return m;
}

TensorF valid_vector(const Layout& layout) {
  TensorF v({1, layout.n_classes});
  for (int k = 0; k < layout.n_classes; ++k) v[static_cast<std::size_t>(k)] = layout.valid[static_cast<std::size_t>(k)];
  return v;
}

Layout layout_from_tensor(const TensorF& labels, int n_classes) {
  if (labels.rank() != 2 || labels.dim(0) != labels.dim(1)) throw ShapeError("layout tensor must be square H x W");
  Layout L{labels.dim(0), n_classes, {}, {}};
  for (const float v : labels.values()) {
    const int l = static_cast<int>(v);
    if (static_cast<float>(l) != v || l < 0 || l >= n_classes) throw FormatError("layout tensor has an invalid label");
    L.labels.push_back(l);
  }
  refresh_valid(L);
  return L;
}

TensorF layout_to_tensor(const Layout& layout) {
  TensorF t({layout.size, layout.size});
  for (std::size_t i = 0; i < layout.labels.size(); ++i) t[i] = static_cast<float>(layout.labels[i]);
  return t;
}

std::vector<int> classify_pixels(const TensorF& image, const Palette& palette, int n) {
  require_rank4(image, "classify_pixels");
  if (image.c() != 3) throw ShapeError("classify_pixels: expected RGB");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(image.h()) * image.w());
  for (int i = 0; i < image.h(); ++i)
    for (int j = 0; j < image.w(); ++j) {
      out.push_back(palette.nearest({image.at(n, 0, i, j), image.at(n, 1, i, j), image.at(n, 2, i, j)}));
    }
  return out;
}

double palette_accuracy(const TensorF& image, const Layout& layout, const Palette& palette, int n) {
  const auto pred = classify_pixels(image, palette, n);
  if (pred.size() != layout.labels.size()) throw ShapeError("palette_accuracy: image and layout differ in size");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == layout.labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

Sample make_sample(const SceneSpec& spec, std::uint64_t index) {
  Rng rng = Rng(spec.seed).derive(index);
  Sample s;
  s.index = index;
  s.layout = gen_layout(spec, rng);
  s.target = render_target(s.layout, Palette::primary(spec.n_classes, spec.amplitude), View::G);
  s.conditional = render_target(s.layout, Palette::alternate(spec.n_classes, spec.amplitude), View::A);
  return s;
}

DatasetIter::DatasetIter(SceneSpec spec, std::uint64_t count, std::uint64_t start)
    : spec_(std::move(spec)), end_(start + count), position_(start) {
  spec_.validate();
}

bool DatasetIter::next(Sample& out) {
  if (position_ >= end_) return false;
  out = make_sample(spec_, position_++);
  return true;
}

Batch make_batch(const std::vector<Sample>& samples) {
  if (samples.empty()) throw std::invalid_argument("make_batch: empty batch");
  const int B = static_cast<int>(samples.size());
  const int K = samples[0].layout.n_classes;
  const int S = samples[0].layout.size;
  Batch b{TensorF({B, K, S, S}), TensorF({B, K}), TensorF({B, 3, S, S}), TensorF({B, 3, S, S}), {}};
  const std::size_t mplane = static_cast<std::size_t>(K) * S * S;
  const std::size_t iplane = static_cast<std::size_t>(3) * S * S;
  for (int n = 0; n < B; ++n) {
    const auto& s = samples[static_cast<std::size_t>(n)];
    if (s.layout.n_classes != K || s.layout.size != S) throw ShapeError("make_batch: samples differ in shape");
    const TensorF m = to_onehot(s.layout);
    std::copy(m.values().begin(), m.values().end(), b.masks.data() + n * mplane);
    for (int k = 0; k < K; ++k) b.valid[static_cast<std::size_t>(n) * K + k] = s.layout.valid[static_cast<std::size_t>(k)];
    std::copy(s.target.values().begin(), s.target.values().end(), b.target.data() + n * iplane);
    std::copy(s.conditional.values().begin(), s.conditional.values().end(), b.conditional.data() + n * iplane);
    b.layouts.push_back(s.layout);
  }
  return b;
}

namespace {

std::string sample_key(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08llu", static_cast<unsigned long long>(index));
  return buf;
}

}  // namespace

void save_samples(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  TensorArchive ar;
  for (const auto& s : samples) {
    const std::string k = sample_key(s.index);
    ar.emplace(k + "/labels", layout_to_tensor(s.layout));
    ar.emplace(k + "/target", s.target);
    ar.emplace(k + "/conditional", s.conditional);
  }
  save_archive(path, ar);
}

std::vector<Sample> load_samples(const std::filesystem::path& path, int n_classes) {
  const TensorArchive ar = load_archive(path);
  std::vector<Sample> out;
  auto get = [&](const std::string& key) {
    const auto it = ar.find(key);
    if (it == ar.end()) throw FormatError("sample archive is missing '" + key + "'");
    const auto* t = std::get_if<TensorF>(&it->second);
    if (!t) throw FormatError("sample archive entry '" + key + "' is not f32");
    return *t;
  };
  for (const auto& [key, _] : ar) {
    if (key.size() < 7 || key.substr(key.size() - 7) != "/labels") continue;
    const std::string k = key.substr(0, key.size() - 7);
    Sample s;
    s.index = std::stoull(k);
    s.layout = layout_from_tensor(get(k + "/labels"), n_classes);
    s.target = get(k + "/target");
    s.conditional = get(k + "/conditional");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace sau::synth
