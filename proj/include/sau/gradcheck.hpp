#pragma once

// Finite-difference certification of hand-written backward passes.
//
// Every registered op is wrapped as a GradProblem: a set of named f64 inputs, a forward
// producing one tensor and a backward mapping an upstream gradient to one gradient per
// input. The checker contracts the output with a fixed random tensor R, so the scalar
// under test is L = sum(out * R) and the analytic gradient is backward(inputs, R).

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sau/rng.hpp"
#include "sau/tensor.hpp"

namespace sau {

using ScalarFn = std::function<double(const TensorD&)>;

/// Central differences with per-element step h_i = step * (1 + |x_i|).
TensorD finite_diff(const ScalarFn& fn, const TensorD& x, double step = 1e-5);

/// |a - g| / max(|a|, |g|, 1e-8)
double gradcheck_rel_error(double analytic, double numeric);

struct GradProblem {
  std::vector<std::string> names;
  std::vector<TensorD> inputs;
  std::function<TensorD(const std::vector<TensorD>&)> forward;
  std::function<std::vector<TensorD>(const std::vector<TensorD>&, const TensorD&)> backward;
};

/// Builds a problem from the generator. `shape_hint`, when non-empty, fixes the extents of
/// the primary input; otherwise extents are drawn at random (each at most 6).
using ProblemFactory = std::function<GradProblem(Rng&, const Shape& shape_hint)>;

struct InputGradError {
  std::string input;
  double max_rel_err = 0;
  double max_abs_err = 0;
  std::size_t checked = 0;
  bool pass = false;
};

struct GradReport {
  std::string op;
  double tolerance = 1e-4;
  std::vector<InputGradError> inputs;
  bool pass = false;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  /// Inputs larger than this are checked on a seeded random subset of elements.
  std::size_t max_elements_per_input = 256;
};

GradReport check_problem(const std::string& op, const GradProblem& problem, Rng& rng,
                         const GradCheckOptions& options = {});

class GradRegistry {
 public:
  void add(const std::string& name, ProblemFactory factory);
  bool contains(const std::string& name) const { return factories_.count(name) != 0; }
  std::vector<std::string> names() const;
  GradProblem make(const std::string& name, Rng& rng, const Shape& shape_hint = {}) const;

 private:
  std::map<std::string, ProblemFactory> factories_;
};

/// Registry of every differentiable op in the library.
const GradRegistry& default_registry();

void register_tensor_ops(GradRegistry& registry);
void register_sau_ops(GradRegistry& registry);
void register_lggan_ops(GradRegistry& registry);

/// Build op `name` from the registry with `seed` and check it. Throws std::out_of_range for
/// unknown ops.
GradReport check_op(const std::string& name, std::uint64_t seed, const GradCheckOptions& options = {},
                    const Shape& shape_hint = {});
GradReport check_op(const GradRegistry& registry, const std::string& name, std::uint64_t seed,
                    const GradCheckOptions& options = {}, const Shape& shape_hint = {});

}  // namespace sau
