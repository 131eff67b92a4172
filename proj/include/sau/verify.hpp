#pragma once

// Seeded verification drivers shared by the CLI and the acceptance suite.

#include <cstdint>
#include <string>
#include <vector>

#include "sau/sau.hpp"

namespace sau {

struct OracleCase {
  int index = 0;
  Shape shape;
  int k = 1;
  int s = 1;
  int compressed = 1;
  double max_abs_diff = 0;
};

/// `count` random SAU forward cases at f64 (N <= 2, C <= 16, H, W <= 8, k in {1,3,5},
/// s in {1,2}), optimized against the naive reference.
std::vector<OracleCase> run_oracle_cases(int count, std::uint64_t seed);

struct BenchResult {
  std::string impl;
  Shape shape;
  int k = 0;
  int s = 0;
  int iters = 0;
  double ns_per_iter = 0;
  double elems_per_s = 0;  // output elements per second
};

/// Times SAU forward at f32 ("naive" or "optimized") over `iters` calls after `warmup`.
BenchResult bench_sau_forward(const std::string& impl, const Shape& shape, int k, int s, int iters, int warmup,
                              std::uint64_t seed);

}  // namespace sau
