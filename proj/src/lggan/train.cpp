#include "sau/lggan/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sau::lggan {

Trainer::Trainer(const LgganConfig& cfg) : cfg_(cfg), gen_(cfg) {
  disc_s_ = Discriminator<float>(cfg_, "D.s", cfg_.n_classes);
  if (cfg_.mode == Mode::crossview) disc_i_ = Discriminator<float>(cfg_, "D.i", 3);
  Rng rng(cfg_.seed);
  Rng g_rng = rng.derive(0x6e);
  Rng d_rng = rng.derive(0xd5);
  gen_.init(store_, g_rng);
  disc_s_.init(store_, d_rng);
  if (cfg_.mode == Mode::crossview) disc_i_.init(store_, d_rng);
}

GeneratorOutput<float> Trainer::generate(const TensorF& masks, const TensorF& valid, const TensorF* conditional) const {
  return gen_.forward(store_, masks, valid, conditional, nullptr);
}

GeneratorOutput<float> Trainer::generate(const synth::Batch& batch) const {
  return generate(batch.masks, batch.valid, cfg_.mode == Mode::crossview ? &batch.conditional : nullptr);
}

namespace {

void require_finite_loss(double v, const char* term, long step) {
  if (!std::isfinite(v)) {
    throw NumericError("training diverged: " + std::string(term) + " is " + std::to_string(v) + " at step " +
                       std::to_string(step));
  }
}

}  // namespace

LossReport Trainer::train_step(const synth::Batch& batch) {
  const bool crossview = cfg_.mode == Mode::crossview;
  const TensorF* cond = crossview ? &batch.conditional : nullptr;
  const long t = ++step_;
  LossReport r;
  r.step = t;
  r.has_d_i = crossview;

  GeneratorCache<float> cache;
  const auto out = gen_.forward(store_, batch.masks, batch.valid, cond, &cache);
  r.l1_image = mean_abs_error(out.fused, batch.target);

  // Discriminator phase.
  store_.zero_grad("D.");
  {
    std::vector<LayerCache<float>> c_real, c_fake;
    const auto real = disc_s_.forward(store_, batch.target, batch.masks, &c_real);
    const auto fake = disc_s_.forward(store_, out.fused, batch.masks, &c_fake);
    const auto term = gan_d_loss(real, fake, cfg_.gan_loss);
    r.gan_d_s = term.loss;
    disc_s_.backward(store_, c_real, term.grad_real);
    disc_s_.backward(store_, c_fake, term.grad_fake);
  }
  if (crossview) {
    std::vector<LayerCache<float>> c_real, c_fake;
    const auto real = disc_i_.forward(store_, batch.target, batch.conditional, &c_real);
    const auto fake = disc_i_.forward(store_, out.fused, batch.conditional, &c_fake);
    const auto term = gan_d_loss(real, fake, cfg_.gan_loss);
    r.gan_d_i = term.loss;
    disc_i_.backward(store_, c_real, term.grad_real);
    disc_i_.backward(store_, c_fake, term.grad_fake);
  }
  r.total_d = r.gan_d_s + r.gan_d_i;
  require_finite_loss(r.total_d, "discriminator loss", t);
  adam_step(store_, "D.", cfg_.adam, t);

  // Generator phase.
  store_.zero_grad();
  GeneratorUpstream<float> up;
  {
    std::vector<LayerCache<float>> c_fake;
    const auto fake = disc_s_.forward(store_, out.fused, batch.masks, &c_fake);
    const auto term = gan_g_loss(fake, cfg_.gan_loss);
    r.gan_g = term.loss;
    up.fused = disc_s_.backward(store_, c_fake, term.grad_fake);
  }
  if (crossview) {
    std::vector<LayerCache<float>> c_fake;
    const auto fake = disc_i_.forward(store_, out.fused, batch.conditional, &c_fake);
    const auto term = gan_g_loss(fake, cfg_.gan_loss);
    r.gan_g += term.loss;
    accumulate(up.fused, disc_i_.backward(store_, c_fake, term.grad_fake));
  }
  if (cfg_.use_local) {
    r.l1_local = masked_l1(batch.target, out.class_images, out.masks);
    if (cfg_.lambda_l1 != 0) up.class_images = masked_l1_backward(batch.target, out.class_images, out.masks, cfg_.lambda_l1);
  }
  if (cfg_.use_classifier) {
    r.ce_class = out.classes.loss;
    up.ce_weight = cfg_.lambda_ce;
  }
  r.total_g = r.gan_g + cfg_.lambda_l1 * r.l1_local + cfg_.lambda_ce * r.ce_class;
  require_finite_loss(r.total_g, "generator loss", t);
  gen_.backward(store_, out, cache, batch.valid, up);
  adam_step(store_, "G.", cfg_.adam, t);
  return r;
}

void Trainer::save_checkpoint(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  KeyValues manifest;
  manifest["step"] = std::to_string(step_);
  manifest["config_hash"] = std::to_string(cfg_.hash());
  manifest["mode"] = to_string(cfg_.mode);
  for (const auto& [k, v] : cfg_.to_key_values()) manifest["config." + k] = v;
  std::ofstream(dir / "manifest.txt") << format_key_values(manifest);
  save_archive(dir / "tensors.stna", store_.to_archive(true));
}

Trainer Trainer::load_checkpoint(const std::filesystem::path& dir) {
  const KeyValues manifest = load_key_values(dir / "manifest.txt");
  LgganConfig cfg;
  for (const auto& [k, v] : manifest) {
    if (k.rfind("config.", 0) == 0) cfg.apply(k.substr(7), v);
  }
  const auto hash = manifest.find("config_hash");
  if (hash == manifest.end() || hash->second != std::to_string(cfg.hash())) {
    throw FormatError("checkpoint manifest config hash does not match its config");
  }
  Trainer tr(cfg);
  tr.store_.load_archive(load_archive(dir / "tensors.stna"));
  tr.step_ = std::stol(manifest.at("step"));
  return tr;
}

synth::SceneSpec scene_for(const LgganConfig& cfg) {
  synth::SceneSpec s;
  s.n_classes = cfg.n_classes;
  s.image_size = cfg.image_size;
  s.seed = cfg.seed;
  return s;
}

synth::Batch training_batch(const synth::SceneSpec& scene, int batch, long t) {
  std::vector<synth::Sample> samples;
  const auto first = static_cast<std::uint64_t>(t) * static_cast<std::uint64_t>(batch);
  for (int j = 0; j < batch; ++j) samples.push_back(synth::make_sample(scene, first + static_cast<std::uint64_t>(j)));
  return synth::make_batch(samples);
}

std::string loss_csv_header() {
  return "# schema=1\nstep,gan_g,gan_d_s,gan_d_i,l1_local,ce_class,total_g,total_d,l1_image\n";
}

std::string loss_csv_row(const LossReport& r) {
  char d_i[32] = "";
  if (r.has_d_i) std::snprintf(d_i, sizeof d_i, "%.9g", r.gan_d_i);
  char buf[512];
  std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%s,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.step, r.gan_g, r.gan_d_s, d_i,
                r.l1_local, r.ce_class, r.total_g, r.total_d, r.l1_image);
  return buf;
}

std::vector<LossReport> run_training(Trainer& trainer, const synth::SceneSpec& scene, int steps,
                                     const std::function<void(const LossReport&)>& on_step) {
  std::vector<LossReport> history;
  history.reserve(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const auto batch = training_batch(scene, trainer.config().batch, trainer.step());
    history.push_back(trainer.train_step(batch));
    if (on_step) on_step(history.back());
  }
  return history;
}

double heldout_accuracy(const Trainer& trainer, const synth::SceneSpec& scene, int count) {
  const auto palette = synth::Palette::primary(scene.n_classes, scene.amplitude);
  double acc = 0;
  for (int i = 0; i < count; ++i) {
    const auto sample = synth::make_sample(scene, kHeldOutStart + static_cast<std::uint64_t>(i));
    const auto batch = synth::make_batch({sample});
    const auto out = trainer.generate(batch);
    acc += synth::palette_accuracy(out.fused, sample.layout, palette);
  }
  return count > 0 ? acc / count : 0.0;
}

double window_mean(const std::vector<double>& values, std::size_t from, std::size_t to) {
  if (from >= to || to > values.size()) throw std::out_of_range("window_mean: bad window");
  double acc = 0;
  for (std::size_t i = from; i < to; ++i) acc += values[i];
  return acc / static_cast<double>(to - from);
}

}  // namespace sau::lggan
