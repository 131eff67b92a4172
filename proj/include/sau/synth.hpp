#pragma once

// Procedural paired data: layered rectangles and ellipses over a background class, rendered
// with per-class colours plus a deterministic sinusoidal texture. Class frequencies follow an
// imbalanced prior so that rare classes cover few pixels.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "sau/config.hpp"
#include "sau/rng.hpp"
#include "sau/tensor.hpp"

namespace sau::synth {

struct Texture {
  double frequency = 1;  // cycles across the image
  double angle = 0;      // radians, 0 = varies along x
  double amplitude = 0;
};

struct Palette {
  std::vector<std::array<double, 3>> colors;
  std::vector<Texture> textures;

  int size() const { return static_cast<int>(colors.size()); }
  /// Smallest Euclidean distance between two class colours.
  double min_distance() const;
  /// Index of the colour closest to `rgb`; ties go to the lower index.
  int nearest(const std::array<double, 3>& rgb) const;

  /// Primary (target view) palette.
  static Palette primary(int n_classes, double amplitude);
  /// Second palette used to render the conditional view.
  static Palette alternate(int n_classes, double amplitude);
};

struct SceneSpec {
  int image_size = 32;
  int n_classes = 5;
  int min_shapes = 2;
  int max_shapes = 6;
  double exponent = 1.5;    // shape class i >= 1 drawn with weight (i + 1)^-exponent
  double amplitude = 0.06;  // texture amplitude
  std::uint64_t seed = 1;

  void validate() const;
  void apply(const KeyValues& kv);
  KeyValues to_key_values() const;
};

struct Layout {
  int size = 0;
  int n_classes = 0;
  std::vector<int> labels;  // row-major size x size
  std::vector<std::uint8_t> valid;

  int at(int i, int j) const { return labels[static_cast<std::size_t>(i) * size + j]; }
  bool operator==(const Layout&) const = default;
};

Layout gen_layout(const SceneSpec& spec, Rng& rng);
/// Recomputes `valid` from the labels.
void refresh_valid(Layout& layout);

enum class View { A, G };

/// 1 x 3 x H x W image in [0, 1]. View A uses the alternate palette with its texture phase
/// shifted horizontally by a quarter period.
TensorF render_target(const Layout& layout, const Palette& palette, View view);

/// 1 x K x H x W one-hot masks.
TensorF to_onehot(const Layout& layout);
/// 1 x K indicator of classes present in the layout.
TensorF valid_vector(const Layout& layout);

Layout layout_from_tensor(const TensorF& labels, int n_classes);
TensorF layout_to_tensor(const Layout& layout);

/// Per-pixel nearest-palette class of an N x 3 x H x W image (sample `n`).
std::vector<int> classify_pixels(const TensorF& image, const Palette& palette, int n = 0);
/// Fraction of pixels whose nearest-palette class equals the layout label.
double palette_accuracy(const TensorF& image, const Layout& layout, const Palette& palette, int n = 0);

struct Sample {
  std::uint64_t index = 0;
  Layout layout;
  TensorF target;       // view G
  TensorF conditional;  // view A

  bool operator==(const Sample& o) const {
    return index == o.index && layout == o.layout && target == o.target && conditional == o.conditional;
  }
};

/// Sample `index` of the dataset, drawn from the stream seeded with seed ^ index.
Sample make_sample(const SceneSpec& spec, std::uint64_t index);

/// Deterministic stream of samples [start, start + count).
class DatasetIter {
 public:
  DatasetIter(SceneSpec spec, std::uint64_t count, std::uint64_t start = 0);
  bool next(Sample& out);
  void skip(std::uint64_t n) { position_ += n; }
  std::uint64_t position() const { return position_; }

 private:
  SceneSpec spec_;
  std::uint64_t end_;
  std::uint64_t position_;
};

struct Batch {
  TensorF masks;        // B x K x H x W
  TensorF valid;        // B x K
  TensorF target;       // B x 3 x H x W
  TensorF conditional;  // B x 3 x H x W
  std::vector<Layout> layouts;
};

Batch make_batch(const std::vector<Sample>& samples);

/// One STNA archive holding "<index>/labels", "<index>/target" and "<index>/conditional"
/// for every sample (index zero-padded to 8 digits).
void save_samples(const std::filesystem::path& path, const std::vector<Sample>& samples);
std::vector<Sample> load_samples(const std::filesystem::path& path, int n_classes);

}  // namespace sau::synth
