#include "sau/lggan/config.hpp"

#include <sstream>
#include <stdexcept>

namespace sau::lggan {

namespace {

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void LgganConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (n_classes < 2) fail("n_classes must be >= 2");
  if (!power_of_two(s)) fail("s must be a power of two");
  if (image_size < 4 || image_size % 4 != 0 || image_size % s != 0) {
    fail("image_size must be a multiple of 4 and of s");
  }
  if (channels < 1 || global_hidden < 1 || local_hidden < 1 || gw_hidden1 < 1 || gw_hidden2 < 1 || disc_channels < 1) {
    fail("layer widths must be >= 1");
  }
  if (batch < 1) fail("batch must be >= 1");
  if (steps < 0) fail("steps must be >= 0");
  if (lambda_l1 < 0 || lambda_ce < 0) fail("loss weights must be >= 0");
  if (!(adam.lr >= 0) || !(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1)) {
    fail("bad optimizer settings");
  }
  if (upsampler == UpsamplerKind::sau) sau_config().validate();
  if (!use_local && (use_classifier || use_weight_map)) fail("classifier and weight map require the local branch");
}

SauConfig LgganConfig::sau_config() const {
  SauConfig c;
  c.channels = channels;
  c.compressed = c_compressed;
  c.k = k;
  c.s = s;
  c.kernelgen_k = kernelgen_k;
  return c;
}

void LgganConfig::apply(const std::string& key, const std::string& v) {
  if (key == "mode") {
    if (v == "synthesis") mode = Mode::synthesis;
    else if (v == "crossview") mode = Mode::crossview;
    else throw std::invalid_argument("mode: expected synthesis or crossview, got '" + v + "'");
  } else if (key == "n_classes") n_classes = parse_int(key, v);
  else if (key == "image_size") image_size = parse_int(key, v);
  else if (key == "channels") channels = parse_int(key, v);
  else if (key == "s") s = parse_int(key, v);
  else if (key == "k") k = parse_int(key, v);
  else if (key == "c_compressed") c_compressed = parse_int(key, v);
  else if (key == "kernelgen_k") kernelgen_k = parse_int(key, v);
  else if (key == "upsampler") upsampler = parse_upsampler(v);
  else if (key == "fusion") {
    if (v == "add") fusion = Fusion::add;
    else if (v == "conv") fusion = Fusion::conv;
    else throw std::invalid_argument("fusion: expected add or conv, got '" + v + "'");
  } else if (key == "global_hidden") global_hidden = parse_int(key, v);
  else if (key == "local_hidden") local_hidden = parse_int(key, v);
  else if (key == "gw_hidden1") gw_hidden1 = parse_int(key, v);
  else if (key == "gw_hidden2") gw_hidden2 = parse_int(key, v);
  else if (key == "disc_channels") disc_channels = parse_int(key, v);
  else if (key == "use_local") use_local = parse_bool(key, v);
  else if (key == "use_classifier") use_classifier = parse_bool(key, v);
  else if (key == "use_weight_map") use_weight_map = parse_bool(key, v);
  else if (key == "lambda_l1") lambda_l1 = parse_double(key, v);
  else if (key == "lambda_ce") lambda_ce = parse_double(key, v);
  else if (key == "gan_loss") {
    if (v == "logistic") gan_loss = GanLossKind::logistic;
    else if (v == "hinge") gan_loss = GanLossKind::hinge;
    else throw std::invalid_argument("gan_loss: expected logistic or hinge, got '" + v + "'");
  } else if (key == "lr") adam.lr = parse_double(key, v);
  else if (key == "beta1") adam.beta1 = parse_double(key, v);
  else if (key == "beta2") adam.beta2 = parse_double(key, v);
  else if (key == "adam_eps") adam.eps = parse_double(key, v);
  else if (key == "batch") batch = parse_int(key, v);
  else if (key == "steps") steps = parse_int(key, v);
  else if (key == "seed") seed = std::stoull(v);
  else if (key == "checkpoint_every") checkpoint_every = parse_int(key, v);
  else if (key == "ablation") apply_ablation(*this, v);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

void LgganConfig::apply(const KeyValues& kv) {
  // Presets first so explicit keys can refine them.
  if (const auto it = kv.find("ablation"); it != kv.end()) apply_ablation(*this, it->second);
  for (const auto& [k, v] : kv) {
    if (k != "ablation") apply(k, v);
  }
}

KeyValues LgganConfig::to_key_values() const {
  return {{"mode", to_string(mode)},
          {"n_classes", std::to_string(n_classes)},
          {"image_size", std::to_string(image_size)},
          {"channels", std::to_string(channels)},
          {"s", std::to_string(s)},
          {"k", std::to_string(k)},
          {"c_compressed", std::to_string(c_compressed)},
          {"kernelgen_k", std::to_string(kernelgen_k)},
          {"upsampler", to_string(upsampler)},
          {"fusion", to_string(fusion)},
          {"global_hidden", std::to_string(global_hidden)},
          {"local_hidden", std::to_string(local_hidden)},
          {"gw_hidden1", std::to_string(gw_hidden1)},
          {"gw_hidden2", std::to_string(gw_hidden2)},
          {"disc_channels", std::to_string(disc_channels)},
          {"use_local", use_local ? "1" : "0"},
          {"use_classifier", use_classifier ? "1" : "0"},
          {"use_weight_map", use_weight_map ? "1" : "0"},
          {"lambda_l1", fmt(lambda_l1)},
          {"lambda_ce", fmt(lambda_ce)},
          {"gan_loss", to_string(gan_loss)},
          {"lr", fmt(adam.lr)},
          {"beta1", fmt(adam.beta1)},
          {"beta2", fmt(adam.beta2)},
          {"adam_eps", fmt(adam.eps)},
          {"batch", std::to_string(batch)},
          {"steps", std::to_string(steps)},
          {"seed", std::to_string(seed)},
          {"checkpoint_every", std::to_string(checkpoint_every)}};
}

std::uint64_t LgganConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : format_key_values(to_key_values())) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void apply_ablation(LgganConfig& cfg, const std::string& preset) {
  if (preset == "b1") {
    cfg.use_local = false;
    cfg.use_classifier = false;
    cfg.use_weight_map = false;
  } else if (preset == "b2" || preset == "b3") {
    cfg.use_local = true;
    cfg.use_classifier = false;
    cfg.use_weight_map = false;
    cfg.fusion = preset == "b2" ? Fusion::add : Fusion::conv;
  } else if (preset == "b4") {
    cfg.use_local = true;
    cfg.use_classifier = true;
    cfg.use_weight_map = false;
    cfg.fusion = Fusion::conv;
  } else if (preset == "b5") {
    cfg.use_local = true;
    cfg.use_classifier = true;
    cfg.use_weight_map = true;
    cfg.fusion = Fusion::conv;
  } else {
    throw std::invalid_argument("ablation: expected b1..b5, got '" + preset + "'");
  }
}

std::string to_string(Mode m) { return m == Mode::synthesis ? "synthesis" : "crossview"; }
std::string to_string(Fusion f) { return f == Fusion::add ? "add" : "conv"; }
std::string to_string(GanLossKind g) { return g == GanLossKind::logistic ? "logistic" : "hinge"; }

}  // namespace sau::lggan
