#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "sau/lggan/config.hpp"
#include "sau/lggan/model.hpp"
#include "sau/synth.hpp"

namespace sau::lggan {

struct LossReport {
  long step = 0;
  double gan_g = 0;
  double gan_d_s = 0;
  double gan_d_i = 0;  // cross-view mode only
  bool has_d_i = false;
  double l1_local = 0;
  double ce_class = 0;
  double total_g = 0;
  double total_d = 0;
  double l1_image = 0;  // mean |I_C - I_real|, monitored only
};

/// f32 training state: generator, discriminators, parameters and optimizer moments.
class Trainer {
 public:
  explicit Trainer(const LgganConfig& cfg);

  /// One discriminator update followed by one generator update.
  LossReport train_step(const synth::Batch& batch);

  GeneratorOutput<float> generate(const TensorF& masks, const TensorF& valid, const TensorF* conditional) const;
  GeneratorOutput<float> generate(const synth::Batch& batch) const;

  const LgganConfig& config() const { return cfg_; }
  const Generator<float>& generator() const { return gen_; }
  ParamStore<float>& params() { return store_; }
  const ParamStore<float>& params() const { return store_; }
  long step() const { return step_; }

  /// Directory with manifest.txt (key=value) and tensors.stna (values and Adam moments).
  void save_checkpoint(const std::filesystem::path& dir) const;
  static Trainer load_checkpoint(const std::filesystem::path& dir);

 private:
  LgganConfig cfg_;
  Generator<float> gen_;
  Discriminator<float> disc_s_;
  Discriminator<float> disc_i_;
  ParamStore<float> store_;
  long step_ = 0;
};

/// Scene spec matching the model's classes, size and seed.
synth::SceneSpec scene_for(const LgganConfig& cfg);

/// Batch for 0-based step t: samples t*B .. t*B + B - 1.
synth::Batch training_batch(const synth::SceneSpec& scene, int batch, long t);

/// First index of the held-out range, disjoint from any training index.
constexpr std::uint64_t kHeldOutStart = 1ULL << 40;

std::string loss_csv_header();
std::string loss_csv_row(const LossReport& r);

/// Runs `steps` training steps starting at trainer.step(); calls `on_step` after each.
std::vector<LossReport> run_training(Trainer& trainer, const synth::SceneSpec& scene, int steps,
                                     const std::function<void(const LossReport&)>& on_step = {});

/// Mean nearest-palette accuracy of fused outputs against `count` held-out layouts.
double heldout_accuracy(const Trainer& trainer, const synth::SceneSpec& scene, int count);

/// Mean of `values` over the window [from, to).
double window_mean(const std::vector<double>& values, std::size_t from, std::size_t to);

}  // namespace sau::lggan
