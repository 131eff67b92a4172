#pragma once

#include <cstdint>
#include <string>

#include "sau/config.hpp"
#include "sau/lggan/layers.hpp"
#include "sau/lggan/params.hpp"
#include "sau/sau.hpp"

namespace sau::lggan {

enum class Mode { synthesis, crossview };
enum class Fusion { add, conv };
enum class GanLossKind { logistic, hinge };

/// Model and training configuration. Every field has a `key=value` spelling (see apply()).
struct LgganConfig {
  Mode mode = Mode::synthesis;
  int n_classes = 5;
  int image_size = 32;
  int channels = 32;      // encoder width C
  int s = 2;              // upsampling factor between f and f'
  int k = 5;              // SAU kernel size
  int c_compressed = 16;  // SAU C'
  int kernelgen_k = 3;
  UpsamplerKind upsampler = UpsamplerKind::sau;
  Fusion fusion = Fusion::conv;

  int global_hidden = 16;
  int local_hidden = 16;
  int gw_hidden1 = 128;
  int gw_hidden2 = 64;
  int disc_channels = 32;

  bool use_local = true;
  bool use_classifier = true;
  bool use_weight_map = true;

  double lambda_l1 = 10.0;
  double lambda_ce = 1.0;
  GanLossKind gan_loss = GanLossKind::logistic;
  AdamConfig adam;
  int batch = 4;
  int steps = 2000;
  std::uint64_t seed = 1;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints

  void validate() const;
  /// Encoder input: one-hot layout, plus the conditional RGB image in cross-view mode.
  int input_channels() const { return n_classes + (mode == Mode::crossview ? 3 : 0); }
  int feature_size() const { return image_size / s; }
  SauConfig sau_config() const;

  /// Set one field from its text form. Throws std::invalid_argument for unknown keys or bad values.
  void apply(const std::string& key, const std::string& value);
  void apply(const KeyValues& kv);
  KeyValues to_key_values() const;
  /// FNV-1a over the canonical key=value text.
  std::uint64_t hash() const;
};

/// Ablation presets: b1 global only; b2 + local (addition); b3 local by convolution;
/// b4 + class-discriminative loss; b5 + weight-map fusion (the full model).
void apply_ablation(LgganConfig& cfg, const std::string& preset);

std::string to_string(Mode m);
std::string to_string(Fusion f);
std::string to_string(GanLossKind g);
using sau::to_string;

}  // namespace sau::lggan
