#include "sau/verify.hpp"

#include <chrono>
#include <stdexcept>

namespace sau {

std::vector<OracleCase> run_oracle_cases(int count, std::uint64_t seed) {
  std::vector<OracleCase> out;
  Rng root(seed);
  constexpr int kSizes[3] = {1, 3, 5};
  for (int i = 0; i < count; ++i) {
    Rng rng = root.derive(static_cast<std::uint64_t>(i));
    OracleCase c;
    c.index = i;
    c.shape = {rng.uniform_int(1, 2), rng.uniform_int(1, 16), rng.uniform_int(1, 8), rng.uniform_int(1, 8)};
    c.k = kSizes[rng.uniform_int(0, 2)];
    c.s = rng.uniform_int(1, 2);
    c.compressed = rng.uniform_int(1, c.shape[1]);
    SauConfig cfg;
    cfg.channels = c.shape[1];
    cfg.compressed = c.compressed;
    cfg.k = c.k;
    cfg.s = c.s;
    auto params = SauParams<double>::init(cfg, rng);
    params.compress_bias = random_normal<double>(params.compress_bias.shape(), rng, 0.1);
    params.kernelgen_bias = random_normal<double>(params.kernelgen_bias.shape(), rng, 0.1);
    const TensorD x = random_normal<double>(c.shape, rng);
    c.max_abs_diff = max_abs_diff(sau_forward(x, params, cfg), sau_naive(x, params, cfg));
    out.push_back(c);
  }
  return out;
}

BenchResult bench_sau_forward(const std::string& impl, const Shape& shape, int k, int s, int iters, int warmup,
                              std::uint64_t seed) {
  if (impl != "naive" && impl != "optimized") throw std::invalid_argument("bench: impl must be naive or optimized");
  if (shape.size() != 4) throw std::invalid_argument("bench: shape must be N x C x H x W");
  if (iters < 1 || warmup < 0) throw std::invalid_argument("bench: iters must be >= 1 and warmup >= 0");
  SauConfig cfg;
  cfg.channels = shape[1];
  cfg.compressed = shape[1];
  cfg.k = k;
  cfg.s = s;
  cfg.validate();
  Rng rng(seed);
  const auto params = SauParams<float>::init(cfg, rng);
  const TensorF x = random_normal<float>(shape, rng);
  const bool naive = impl == "naive";
  auto call = [&] { return naive ? sau_naive(x, params, cfg) : sau_forward(x, params, cfg); };
  std::size_t elems = 0;
  for (int i = 0; i < warmup; ++i) elems = call().size();
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i) elems = call().size();
  const double ns = std::chrono::duration<double, std::nano>(std::chrono::steady_clock::now() - t0).count();
  BenchResult r{impl, shape, k, s, iters, ns / iters, 0};
  r.elems_per_s = static_cast<double>(elems) / (r.ns_per_iter * 1e-9);
  return r;
}

}  // namespace sau
