#include "sau/lggan/params.hpp"

#include <cmath>
#include <stdexcept>

#include "sau/ops.hpp"

namespace sau::lggan {

namespace {

bool has_prefix(const std::string& name, const std::string& prefix) { return name.compare(0, prefix.size(), prefix) == 0; }

}  // namespace

template <typename T>
Tensor<T>& ParamStore<T>::add(const std::string& name, Tensor<T> init) {
  if (contains(name)) throw std::logic_error("ParamStore: duplicate parameter '" + name + "'");
  const Shape shape = init.shape();
  auto& s = slots_[name];
  s.value = std::move(init);
  s.grad = Tensor<T>(shape);
  s.m = Tensor<T>(shape);
  s.v = Tensor<T>(shape);
  return s.value;
}

template <typename T>
ParamSlot<T>& ParamStore<T>::slot(const std::string& name) {
  const auto it = slots_.find(name);
  if (it == slots_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  return it->second;
}

template <typename T>
const ParamSlot<T>& ParamStore<T>::slot(const std::string& name) const {
  const auto it = slots_.find(name);
  if (it == slots_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  return it->second;
}

template <typename T>
void ParamStore<T>::accumulate(const std::string& name, const Tensor<T>& g) {
  auto& s = slot(name);
  require_same_shape(s.grad, g, name.c_str());
  sau::accumulate(s.grad, g);
}

template <typename T>
void ParamStore<T>::zero_grad(const std::string& prefix) {
  for (auto& [name, s] : slots_) {
    if (!has_prefix(name, prefix)) continue;
    for (auto& v : s.grad.values()) v = T(0);
  }
}

template <typename T>
std::vector<std::string> ParamStore<T>::names(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, _] : slots_) {
    if (has_prefix(name, prefix)) out.push_back(name);
  }
  return out;
}

template <typename T>
double ParamStore<T>::grad_norm(const std::string& prefix) const {
  double acc = 0;
  for (const auto& [name, s] : slots_) {
    if (!has_prefix(name, prefix)) continue;
    for (const T v : s.grad.values()) acc += static_cast<double>(v) * v;
  }
  return std::sqrt(acc);
}

template <typename T>
std::size_t ParamStore<T>::parameter_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, s] : slots_) {
    if (has_prefix(name, prefix)) n += s.value.size();
  }
  return n;
}

template <typename T>
TensorArchive ParamStore<T>::to_archive(bool with_moments) const {
  TensorArchive out;
  for (const auto& [name, s] : slots_) {
    out.emplace(name, s.value);
    if (with_moments) {
      out.emplace(name + "#m", s.m);
      out.emplace(name + "#v", s.v);
    }
  }
  return out;
}

template <typename T>
void ParamStore<T>::load_archive(const TensorArchive& archive) {
  auto fetch = [&](const std::string& key, Tensor<T>& dst, bool required) {
    const auto it = archive.find(key);
    if (it == archive.end()) {
      if (required) throw FormatError("checkpoint is missing parameter '" + key + "'");
      return;
    }
    Tensor<T> t = std::visit([](const auto& x) { return tensor_cast<T>(x); }, it->second);
    if (t.shape() != dst.shape()) {
      throw FormatError("checkpoint parameter '" + key + "' has shape " + to_string(t.shape()) + ", model expects " +
                        to_string(dst.shape()));
    }
    dst = std::move(t);
  };
  for (auto& [name, s] : slots_) {
    fetch(name, s.value, true);
    fetch(name + "#m", s.m, false);
    fetch(name + "#v", s.v, false);
  }
}

template <typename T>
void adam_update(ParamSlot<T>& slot, const AdamConfig& cfg, long t) {
  if (t < 1) throw std::invalid_argument("adam_update: step must be >= 1");
  require_same_shape(slot.value, slot.grad, "adam_update");
  require_same_shape(slot.value, slot.m, "adam_update");
  require_same_shape(slot.value, slot.v, "adam_update");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  for (std::size_t i = 0; i < slot.value.size(); ++i) {
    const double g = slot.grad[i];
    const double m = b1 * slot.m[i] + (1.0 - b1) * g;
    const double v = b2 * slot.v[i] + (1.0 - b2) * g * g;
    slot.m[i] = static_cast<T>(m);
    slot.v[i] = static_cast<T>(v);
    const double step = cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
    slot.value[i] = static_cast<T>(slot.value[i] - step);
  }
}

template <typename T>
void adam_step(ParamStore<T>& store, const std::string& prefix, const AdamConfig& cfg, long t) {
  for (auto& [name, s] : store.slots()) {
    if (has_prefix(name, prefix)) adam_update(s, cfg, t);
  }
}

template class ParamStore<float>;
template class ParamStore<double>;
template void adam_update(ParamSlot<float>&, const AdamConfig&, long);
template void adam_update(ParamSlot<double>&, const AdamConfig&, long);
template void adam_step(ParamStore<float>&, const std::string&, const AdamConfig&, long);
template void adam_step(ParamStore<double>&, const std::string&, const AdamConfig&, long);

}  // namespace sau::lggan
