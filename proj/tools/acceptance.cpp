// Acceptance suite: one PASS/FAIL line per criterion, exit 0 only if all pass.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sau/cli.hpp"
#include "sau/gradcheck.hpp"
#include "sau/lggan/train.hpp"
#include "sau/verify.hpp"

using namespace sau;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Data rows of a schema-tagged CSV, split into fields.
std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    rows.push_back(fields);
  }
  return rows;
}

TensorD randn(Shape dims, Rng& rng) { return random_normal<double>(std::move(dims), rng); }

struct RandomMasks {
  TensorD masks;
  TensorD valid;
};

RandomMasks random_masks(Rng& rng, int n, int k, int h, int w, int max_class) {
  RandomMasks m{TensorD({n, k, h, w}), TensorD({n, k})};
  for (int b = 0; b < n; ++b)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const int c = rng.uniform_int(0, max_class);
        m.masks.at(b, c, i, j) = 1;
        m.valid[static_cast<std::size_t>(b * k + c)] = 1;
      }
  return m;
}

// 1. Every registered backward pass within tolerance for seeds 1..3, in bounded time.
Outcome gradcheck_sweep() {
  const auto t0 = Clock::now();
  const auto& reg = default_registry();
  int checked = 0, failed = 0;
  std::string failures;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (const auto& op : reg.names()) {
      ++checked;
      if (!check_op(reg, op, seed).pass) {
        ++failed;
        failures += " " + op + "@" + std::to_string(seed);
      }
    }
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && secs < 120.0, std::to_string(checked - failed) + "/" + std::to_string(checked) +
                                           " op-seed checks pass in " + fmt(secs) + " s" + failures};
}

// 2. Optimized SAU matches the naive reference at f64.
Outcome oracle_equivalence() {
  double worst = 0;
  const auto cases = run_oracle_cases(50, 1);
  for (const auto& c : cases) worst = std::max(worst, c.max_abs_diff);
  return {worst <= 1e-12, std::to_string(cases.size()) + " cases, max |diff| " + fmt(worst)};
}

// 3. Degenerate kernels: one-hot centre is nearest upsampling, s = 1 and k = 1 is the identity.
Outcome degenerate_kernels() {
  Rng rng(3);
  int cases = 0, bad = 0;
  for (int t = 0; t < 50; ++t) {
    SauConfig cfg;
    cfg.channels = rng.uniform_int(1, 8);
    cfg.compressed = rng.uniform_int(1, cfg.channels);
    cfg.k = 2 * rng.uniform_int(0, 3) + 1;
    cfg.s = rng.uniform_int(1, 4);
    const int n = rng.uniform_int(1, 2), h = rng.uniform_int(1, 8), w = rng.uniform_int(1, 8);
    const TensorD f = randn({n, cfg.channels, h, w}, rng);
    TensorD kw({n, cfg.taps(), h * cfg.s, w * cfg.s});
    for (int b = 0; b < n; ++b)
      for (int i = 0; i < kw.h(); ++i)
        for (int j = 0; j < kw.w(); ++j) kw.at(b, cfg.taps() / 2, i, j) = 1.0;
    ++cases;
    bad += !(safu_forward(f, KernelField<double>{kw, cfg.k}, cfg) == nearest_upsample(f, cfg.s));

    SauConfig id = cfg;
    id.k = 1;
    id.s = 1;
    const auto params = SauParams<double>::init(id, rng);
    ++cases;
    bad += !(sau_forward(f, params, id) == f);
  }
  return {bad == 0, std::to_string(cases - bad) + "/" + std::to_string(cases) + " bitwise"};
}

// 4. Predicted kernels are per-pixel distributions.
Outcome kernel_normalization() {
  Rng root(4);
  double worst_sum = 0, min_w = 1;
  for (int t = 0; t < 1000; ++t) {
    Rng rng = root.derive(static_cast<std::uint64_t>(t));
    SauConfig cfg;
    cfg.channels = rng.uniform_int(1, 16);
    cfg.compressed = rng.uniform_int(1, cfg.channels);
    cfg.k = 2 * rng.uniform_int(0, 3) + 1;
    cfg.s = rng.uniform_int(1, 3);
    auto params = SauParams<float>::init(cfg, rng);
    params.kernelgen_bias = random_normal<float>(params.kernelgen_bias.shape(), rng, 0.5);
    const TensorF f = random_normal<float>({1, cfg.channels, rng.uniform_int(1, 8), rng.uniform_int(1, 8)}, rng,
                                           static_cast<float>(rng.uniform(0.1, 10.0)));
    const auto kf = sakg_forward(f, params, cfg);
    const TensorF& w = kf.weights;
    for (int i = 0; i < w.h(); ++i)
      for (int j = 0; j < w.w(); ++j) {
        double total = 0;
        for (int q = 0; q < cfg.taps(); ++q) {
          const double v = w.at(0, q, i, j);
          min_w = std::min(min_w, v);
          total += v;
        }
        worst_sum = std::max(worst_sum, std::abs(total - 1.0));
      }
  }
  return {worst_sum <= 1e-6 && min_w >= 0,
          "1000 fields, max |sum - 1| " + fmt(worst_sum) + ", min weight " + fmt(min_w)};
}

// 5. Weight maps are convex per pixel and the fused image lies between its inputs.
Outcome weight_map_convexity() {
  const lggan::LgganConfig cfg;
  const lggan::Generator<double> gen(cfg);
  double worst_sum = 0, min_w = 1, worst_out = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    Rng rng(5000 + t);
    lggan::ParamStore<double> store;
    gen.init(store, rng);
    const int S = cfg.image_size;
    const TensorD f_up = randn({1, cfg.channels, S, S}, rng);
    const TensorD w = gen.weight_maps(store, f_up, nullptr);
    const TensorD g = randn({1, 3, S, S}, rng), l = randn({1, 3, S, S}, rng);
    const TensorD fused = lggan::fuse_images(g, l, w);
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j) {
        worst_sum = std::max(worst_sum, std::abs(w.at(0, 0, i, j) + w.at(0, 1, i, j) - 1.0));
        min_w = std::min({min_w, w.at(0, 0, i, j), w.at(0, 1, i, j)});
        for (int c = 0; c < 3; ++c) {
          const double lo = std::min(g.at(0, c, i, j), l.at(0, c, i, j));
          const double hi = std::max(g.at(0, c, i, j), l.at(0, c, i, j));
          const double v = fused.at(0, c, i, j);
          worst_out = std::max({worst_out, lo - v, v - hi});
        }
      }
  }
  return {worst_sum <= 1e-6 && min_w >= 0 && worst_out <= 1e-12,
          "100 cases, max |sum - 1| " + fmt(worst_sum) + ", min weight " + fmt(min_w) + ", max excursion " +
              fmt(std::max(worst_out, 0.0))};
}

// 6. Mask filtering partitions the features exactly; void classes do not move the class loss.
Outcome partition_and_void() {
  int partition_ok = 0, void_ok = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    Rng rng(6000 + t);
    const int K = rng.uniform_int(2, 8), N = rng.uniform_int(1, 2);
    const int h = rng.uniform_int(1, 8), w = rng.uniform_int(1, 8), C = rng.uniform_int(1, 6);
    const auto m = random_masks(rng, N, K, h, w, K - 1);
    const TensorD f = randn({N, C, h, w}, rng);
    const auto parts = lggan::mask_filter(f, m.masks);
    bool ok = lggan::sum_images(parts) == f;
    for (int k = 0; k < K && ok; ++k)
      for (std::size_t i = 0; i < f.size(); ++i) {
        const std::size_t n = i / (static_cast<std::size_t>(C) * h * w), pix = i % (static_cast<std::size_t>(h) * w);
        const double mask = m.masks[(n * K + static_cast<std::size_t>(k)) * h * w + pix];
        if (parts[static_cast<std::size_t>(k)][i] != mask * f[i]) ok = false;
      }
    partition_ok += ok;

    // Classes max_class+1 .. K-1 never appear; their features must not matter.
    const int max_class = rng.uniform_int(0, K - 2);
    const auto mv = random_masks(rng, N, K, h, w, max_class);
    std::vector<TensorD> feats;
    for (int k = 0; k < K; ++k) feats.push_back(randn({N, C, h, w}, rng));
    const TensorD cw = randn({K, C}, rng), cb = randn({K}, rng);
    const double base = lggan::classify_classes(feats, mv.masks, mv.valid, cw, cb).loss;
    for (int k = max_class + 1; k < K; ++k) feats[static_cast<std::size_t>(k)] = randn({N, C, h, w}, rng);
    void_ok += lggan::classify_classes(feats, mv.masks, mv.valid, cw, cb).loss == base;
  }
  return {partition_ok == 100 && void_ok == 100, "partition " + std::to_string(partition_ok) +
                                                      "/100 bitwise, void invariance " + std::to_string(void_ok) +
                                                      "/100"};
}

struct TrainRun {
  bool ok = false;
  std::string error;
  fs::path dir;
};

TrainRun cli_train(const fs::path& dir, int steps) {
  fs::remove_all(dir);
  const auto r = run_cli({"train", "--steps", std::to_string(steps), "--seed", "1", "--out", dir.string()});
  return {r.code == 0, r.code == 0 ? "" : "train exited " + std::to_string(r.code) + ": " + r.err, dir};
}

// 7. Default-config training reduces masked L1 and produces palette-faithful images.
Outcome training_converges(const TrainRun& run, double secs) {
  if (!run.ok) return {false, run.error};
  const auto rows = csv_rows(slurp(run.dir / "losses.csv"));
  if (rows.size() < 20) return {false, "only " + std::to_string(rows.size()) + " loss rows"};
  std::vector<double> l1;
  for (const auto& r : rows) l1.push_back(std::stod(r.at(4)));
  const double first = lggan::window_mean(l1, 0, 10);
  const double last = lggan::window_mean(l1, l1.size() - 10, l1.size());
  const lggan::Trainer tr = lggan::Trainer::load_checkpoint(run.dir / "checkpoint");
  const double acc = lggan::heldout_accuracy(tr, lggan::scene_for(tr.config()), 64);
  const bool pass = last <= 0.5 * first && acc >= 0.8 && secs < 1800;
  return {pass, "masked L1 " + fmt(first) + " -> " + fmt(last) + " (ratio " + fmt(last / first) +
                    "), held-out palette accuracy " + fmt(acc) + ", " + fmt(secs) + " s"};
}

// 8. Every upsampler trains in the same harness and reports finite metrics.
Outcome upsampler_sweep(const fs::path& dir, int steps) {
  fs::remove_all(dir);
  const auto r = run_cli({"train", "--steps", std::to_string(steps), "--seed", "1", "--upsamplers", "all", "--out",
                          dir.string()});
  if (r.code != 0) return {false, "train exited " + std::to_string(r.code) + ": " + r.err};
  const auto rows = csv_rows(slurp(dir / "upsampler_comparison.csv"));
  int finite = 0;
  std::string summary;
  for (const auto& row : rows) {
    const double l1 = std::stod(row.at(2));
    finite += std::isfinite(l1);
    summary += " " + row.at(0) + "=" + fmt(l1);
  }
  return {rows.size() == 6 && finite == 6, std::to_string(finite) + "/6 finite rows:" + summary};
}

// 9. The optimized SAU forward outpaces the naive reference.
Outcome bench_speedup() {
  const auto r = run_cli({"bench", "--impl", "naive", "--impl", "optimized", "--shape", "1x64x32x32", "--k", "5",
                          "--s", "2", "--iters", "100", "--warmup", "5"});
  if (r.code != 0) return {false, "bench exited " + std::to_string(r.code)};
  double naive = 0, opt = 0;
  for (const auto& row : csv_rows(r.out)) (row.at(0) == "naive" ? naive : opt) = std::stod(row.at(6));
  const double ratio = naive > 0 ? opt / naive : 0;
  return {ratio >= 3.0, "throughput ratio " + fmt(ratio) + " (naive " + fmt(naive) + ", optimized " + fmt(opt) +
                            " elems/s)"};
}

// 10. Identical seed and config reproduce the loss log byte for byte.
Outcome reproducible(const TrainRun& a, const TrainRun& b) {
  if (!a.ok || !b.ok) return {false, a.ok ? b.error : a.error};
  const std::string x = slurp(a.dir / "losses.csv"), y = slurp(b.dir / "losses.csv");
  return {!x.empty() && x == y, std::to_string(x.size()) + " vs " + std::to_string(y.size()) + " bytes, " +
                                    (x == y ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria", "sau_acceptance"};
  int train_steps = 600;
  int sweep_steps = 40;
  std::string work_dir = (fs::temp_directory_path() / "sau_acceptance").string();
  app.add_option("--train-steps", train_steps, "Steps for the convergence and reproducibility runs")
      ->check(CLI::PositiveNumber);
  app.add_option("--sweep-steps", sweep_steps, "Steps per upsampler in the sweep")->check(CLI::PositiveNumber);
  app.add_option("--work-dir", work_dir, "Scratch directory for training outputs");
  CLI11_PARSE(app, argc, argv);

  try {
    cli::apply_thread_env();
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  const fs::path work = work_dir;
  fs::create_directories(work);

  int failed = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << name << ": " << o.detail << std::endl;
  };

  report(1, "gradcheck", gradcheck_sweep);
  report(2, "oracle-equivalence", oracle_equivalence);
  report(3, "degenerate-kernels", degenerate_kernels);
  report(4, "kernel-normalization", kernel_normalization);
  report(5, "weight-map-convexity", weight_map_convexity);
  report(6, "partition-and-void", partition_and_void);

  TrainRun first, second;
  report(7, "training-convergence", [&] {
    const auto t0 = Clock::now();
    first = cli_train(work / "train_a", train_steps);
    return training_converges(first, seconds_since(t0));
  });
  report(8, "upsampler-sweep", [&] { return upsampler_sweep(work / "sweep", sweep_steps); });
  report(9, "bench-speedup", bench_speedup);
  report(10, "reproducibility", [&] {
    second = cli_train(work / "train_b", train_steps);
    return reproducible(first, second);
  });

  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << std::endl;
  return failed == 0 ? 0 : 1;
}
