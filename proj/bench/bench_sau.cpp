#include <benchmark/benchmark.h>

#include "sau/sau.hpp"

using namespace sau;

namespace {

struct Setup {
  SauConfig cfg;
  SauParams<float> params;
  TensorF x;
};

Setup make_setup(int channels, int size, int k, int s) {
  SauConfig cfg;
  cfg.channels = channels;
  cfg.compressed = channels;
  cfg.k = k;
  cfg.s = s;
  Rng rng(1);
  auto params = SauParams<float>::init(cfg, rng);
  TensorF x = random_normal<float>({1, channels, size, size}, rng);
  return {cfg, std::move(params), std::move(x)};
}

template <bool Naive>
void BM_sau(benchmark::State& state) {
  const Setup st = make_setup(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)),
                              static_cast<int>(state.range(2)), 2);
  std::size_t elems = 0;
  for (auto _ : state) {
    TensorF y = Naive ? sau_naive(st.x, st.params, st.cfg) : sau_forward(st.x, st.params, st.cfg);
    elems = y.size();
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * elems));
}

void shapes(benchmark::internal::Benchmark* b) {
  for (const int c : {16, 64})
    for (const int k : {3, 5}) b->Args({c, 32, k});
}

}  // namespace

BENCHMARK(BM_sau<true>)->Name("sau_naive")->Apply(shapes)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sau<false>)->Name("sau_optimized")->Apply(shapes)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
