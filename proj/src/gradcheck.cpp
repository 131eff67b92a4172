#include "sau/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sau {

TensorD finite_diff(const ScalarFn& fn, const TensorD& x, double step) {
  if (!(step > 0)) throw std::invalid_argument("finite_diff: step must be positive");
  TensorD grad(x.shape());
  TensorD probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = step * (1.0 + std::abs(x[i]));
    probe[i] = x[i] + h;
    const double up = fn(probe);
    probe[i] = x[i] - h;
    const double down = fn(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("finite_diff: non-finite function value");
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double gradcheck_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

namespace {

double contract(const TensorD& out, const TensorD& weights) {
  double acc = 0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * weights[i];
  return acc;
}

std::vector<std::size_t> pick_elements(std::size_t size, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  if (size <= limit) return idx;
  // Partial Fisher-Yates with the counter-based generator.
  for (std::size_t i = 0; i < limit; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_u64() % (size - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradReport check_problem(const std::string& op, const GradProblem& problem, Rng& rng, const GradCheckOptions& options) {
  if (problem.names.size() != problem.inputs.size()) throw std::logic_error("check_problem: names/inputs mismatch");
  GradReport report{op, options.tolerance, {}, true};

  const TensorD out = problem.forward(problem.inputs);
  const TensorD weights = random_normal<double>(out.shape(), rng);
  const std::vector<TensorD> analytic = problem.backward(problem.inputs, weights);
  if (analytic.size() != problem.inputs.size()) throw std::logic_error(op + ": backward returned wrong arity");

  for (std::size_t k = 0; k < problem.inputs.size(); ++k) {
    const TensorD& x = problem.inputs[k];
    if (analytic[k].shape() != x.shape()) {
      throw ShapeError(op + ": gradient for '" + problem.names[k] + "' has shape " + to_string(analytic[k].shape()) +
                       ", input has " + to_string(x.shape()));
    }
    InputGradError err{problem.names[k]};
    std::vector<TensorD> probe = problem.inputs;
    for (const std::size_t i : pick_elements(x.size(), options.max_elements_per_input, rng)) {
      const double h = options.step * (1.0 + std::abs(x[i]));
      probe[k][i] = x[i] + h;
      const double up = contract(problem.forward(probe), weights);
      probe[k][i] = x[i] - h;
      const double down = contract(problem.forward(probe), weights);
      probe[k][i] = x[i];
      if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError(op + ": non-finite output during check");
      const double numeric = (up - down) / (2.0 * h);
      err.max_rel_err = std::max(err.max_rel_err, gradcheck_rel_error(analytic[k][i], numeric));
      err.max_abs_err = std::max(err.max_abs_err, std::abs(analytic[k][i] - numeric));
      ++err.checked;
    }
    err.pass = err.max_rel_err <= options.tolerance;
    report.pass = report.pass && err.pass;
    report.inputs.push_back(std::move(err));
  }
  return report;
}

void GradRegistry::add(const std::string& name, ProblemFactory factory) {
  if (!factories_.emplace(name, std::move(factory)).second) {
    throw std::logic_error("GradRegistry: duplicate op '" + name + "'");
  }
}

std::vector<std::string> GradRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : factories_) out.push_back(name);
  return out;
}

GradProblem GradRegistry::make(const std::string& name, Rng& rng, const Shape& shape_hint) const {
  const auto it = factories_.find(name);
  if (it == factories_.end()) throw std::out_of_range("gradcheck: unregistered op '" + name + "'");
  return it->second(rng, shape_hint);
}

const GradRegistry& default_registry() {
  static const GradRegistry registry = [] {
    GradRegistry r;
    register_tensor_ops(r);
    register_sau_ops(r);
    register_lggan_ops(r);
    return r;
  }();
  return registry;
}

GradReport check_op(const GradRegistry& registry, const std::string& name, std::uint64_t seed,
                    const GradCheckOptions& options, const Shape& shape_hint) {
  Rng rng(seed);
  const GradProblem problem = registry.make(name, rng, shape_hint);
  return check_problem(name, problem, rng, options);
}

GradReport check_op(const std::string& name, std::uint64_t seed, const GradCheckOptions& options,
                    const Shape& shape_hint) {
  return check_op(default_registry(), name, seed, options, shape_hint);
}

}  // namespace sau
