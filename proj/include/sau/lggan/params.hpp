#pragma once

#include <map>
#include <string>
#include <vector>

#include "sau/stns.hpp"
#include "sau/tensor.hpp"

namespace sau::lggan {

/// A trainable tensor with its gradient accumulator and Adam moments, all the same shape.
template <typename T>
struct ParamSlot {
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m;
  Tensor<T> v;
};

/// Named parameters in a fixed (lexicographic) order, so iteration and serialization are
/// deterministic. Names are dotted paths such as "G.enc.0.weight".
template <typename T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> init);
  bool contains(const std::string& name) const { return slots_.count(name) != 0; }

  ParamSlot<T>& slot(const std::string& name);
  const ParamSlot<T>& slot(const std::string& name) const;
  const Tensor<T>& value(const std::string& name) const { return slot(name).value; }
  Tensor<T>& value(const std::string& name) { return slot(name).value; }
  Tensor<T>& grad(const std::string& name) { return slot(name).grad; }
  const Tensor<T>& grad(const std::string& name) const { return slot(name).grad; }

  /// Adds `g` into the gradient of `name`.
  void accumulate(const std::string& name, const Tensor<T>& g);

  void zero_grad(const std::string& prefix = "");
  std::vector<std::string> names(const std::string& prefix = "") const;
  double grad_norm(const std::string& prefix = "") const;
  std::size_t parameter_count(const std::string& prefix = "") const;

  std::map<std::string, ParamSlot<T>>& slots() { return slots_; }
  const std::map<std::string, ParamSlot<T>>& slots() const { return slots_; }

  /// Values (and, optionally, optimizer moments as "<name>#m" / "<name>#v").
  TensorArchive to_archive(bool with_moments) const;
  /// Overwrites values (and moments when present) of existing slots. Every slot must be
  /// present in the archive with a matching shape.
  void load_archive(const TensorArchive& archive);

 private:
  std::map<std::string, ParamSlot<T>> slots_;
};

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update of one slot at 1-based step t.
template <typename T>
void adam_update(ParamSlot<T>& slot, const AdamConfig& cfg, long t);

/// Updates every slot whose name starts with `prefix`.
template <typename T>
void adam_step(ParamStore<T>& store, const std::string& prefix, const AdamConfig& cfg, long t);

}  // namespace sau::lggan
