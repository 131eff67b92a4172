#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "sau/lggan/train.hpp"
#include "test_util.hpp"

using namespace sau;
using namespace sau::lggan;
using sau::testing::randn;

namespace {

// Small but complete model for fast tests.
LgganConfig small_config() {
  LgganConfig c;
  c.image_size = 16;
  c.channels = 8;
  c.c_compressed = 4;
  c.global_hidden = 8;
  c.local_hidden = 8;
  c.gw_hidden1 = 8;
  c.gw_hidden2 = 8;
  c.disc_channels = 8;
  c.batch = 2;
  return c;
}

struct Masks {
  TensorD masks;
  TensorD valid;
};

Masks random_masks(int n, int k, int h, int w, std::uint64_t seed, int max_class = -1) {
  Rng rng(seed);
  if (max_class < 0) max_class = k - 1;
  Masks m{TensorD({n, k, h, w}), TensorD({n, k})};
  for (int b = 0; b < n; ++b)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const int c = rng.uniform_int(0, max_class);
        m.masks.at(b, c, i, j) = 1;
        m.valid[static_cast<std::size_t>(b * k + c)] = 1;
      }
  return m;
}

struct Model {
  LgganConfig cfg;
  Generator<double> gen;
  ParamStore<double> store;
};

Model make_model(const LgganConfig& cfg, std::uint64_t seed) {
  Model m{cfg, Generator<double>(cfg), {}};
  Rng rng(seed);
  m.gen.init(m.store, rng);
  return m;
}

bool bitwise_equal(const TensorD& a, const TensorD& b) { return a == b; }

}  // namespace

TEST_CASE("encoder halves the layout resolution") {
  LgganConfig cfg = small_config();
  cfg.channels = 12;
  auto m = make_model(cfg, 1);
  const auto masks = random_masks(1, cfg.n_classes, 16, 16, 3);
  const TensorD f = m.gen.encode(m.store, masks.masks, nullptr);
  CHECK(f.shape() == Shape{1, 12, 8, 8});
  CHECK(bitwise_equal(f, m.gen.encode(m.store, masks.masks, nullptr)));
  auto other = make_model(cfg, 2);
  CHECK_FALSE(bitwise_equal(f, other.gen.encode(other.store, masks.masks, nullptr)));
}

TEST_CASE("encoder input depends on the mode") {
  LgganConfig cfg = small_config();
  auto m = make_model(cfg, 1);
  const auto masks = random_masks(1, cfg.n_classes, 16, 16, 3);
  const TensorD cond = randn({1, 3, 16, 16}, 4);
  CHECK_THROWS_AS(m.gen.encode(m.store, cond, nullptr), ShapeError);
  CHECK_THROWS_AS(m.gen.make_input(masks.masks, &cond), std::invalid_argument);

  cfg.mode = Mode::crossview;
  auto x = make_model(cfg, 1);
  const TensorD input = x.gen.make_input(masks.masks, &cond);
  CHECK(input.c() == 3 + cfg.n_classes);
  CHECK(x.gen.encode(x.store, input, nullptr).shape() == Shape{1, cfg.channels, 8, 8});
  CHECK_THROWS_AS(x.gen.make_input(masks.masks, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(x.gen.encode(x.store, masks.masks, nullptr), ShapeError);
}

TEST_CASE("mask filtering partitions the features") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto m = random_masks(2, 4, 5, 6, seed);
    const TensorD f = randn({2, 3, 5, 6}, seed + 1000);
    const auto parts = mask_filter(f, m.masks);
    REQUIRE(parts.size() == 4);
    CHECK(bitwise_equal(sum_images(parts), f));
    // Pointwise oracle.
    for (int k = 0; k < 4; ++k)
      for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c)
          for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 6; ++j) {
              REQUIRE(parts[static_cast<std::size_t>(k)].at(n, c, i, j) == m.masks.at(n, k, i, j) * f.at(n, c, i, j));
            }
  }
}

TEST_CASE("a single class covering the image keeps all features") {
  TensorD masks({1, 3, 4, 4});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) masks.at(0, 0, i, j) = 1;
  const TensorD f = randn({1, 2, 4, 4}, 9);
  const auto parts = mask_filter(f, masks);
  CHECK(bitwise_equal(parts[0], f));
  for (const double v : parts[1].values()) CHECK(v == 0.0);
  for (const double v : parts[2].values()) CHECK(v == 0.0);
}

TEST_CASE("masks are aligned to the feature resolution by nearest resampling") {
  const auto m = random_masks(1, 3, 8, 8, 5);
  const TensorD down = align_masks(m.masks, 4, 4);
  CHECK(down.at(0, 1, 2, 3) == m.masks.at(0, 1, 5, 7));  // centre of each 2x2 cell
  const TensorD up = align_masks(down, 8, 8);
  CHECK(up.at(0, 2, 5, 7) == down.at(0, 2, 2, 3));
  CHECK_THROWS_AS(align_masks(m.masks, 3, 3), ShapeError);
}

TEST_CASE("addition fusion sums the class outputs") {
  LgganConfig cfg = small_config();
  cfg.fusion = Fusion::add;
  auto m = make_model(cfg, 3);
  const auto masks = random_masks(1, cfg.n_classes, 16, 16, 4);
  const TensorD f_up = randn({1, cfg.channels, 16, 16}, 5);
  const auto feats = mask_filter(f_up, masks.masks);
  std::vector<TensorD> images;
  const TensorD sum = m.gen.local_generate(m.store, feats, &images, nullptr);
  TensorD oracle(sum.shape());
  for (const auto& im : images)
    for (std::size_t i = 0; i < oracle.size(); ++i) oracle[i] += im[i];
  CHECK(bitwise_equal(sum, oracle));

  // Silence every branch but class 2: the fused output is that branch alone.
  for (int i = 0; i < cfg.n_classes; ++i) {
    if (i == 2) continue;
    const std::string p = "G.local." + std::to_string(i) + ".2.";
    for (auto& v : m.store.value(p + "weight").values()) v = 0;
    for (auto& v : m.store.value(p + "bias").values()) v = 0;
  }
  const TensorD single = m.gen.local_generate(m.store, feats, &images, nullptr);
  CHECK(bitwise_equal(single, images[2]));
}

TEST_CASE("convolution fusion always yields three channels") {
  for (const int k : {2, 5, 7}) {
    LgganConfig cfg = small_config();
    cfg.n_classes = k;
    auto m = make_model(cfg, 3);
    const auto masks = random_masks(1, k, 16, 16, 4);
    const auto feats = mask_filter(randn({1, cfg.channels, 16, 16}, 5), masks.masks);
    CHECK(m.gen.local_generate(m.store, feats, nullptr, nullptr).shape() == Shape{1, 3, 16, 16});
    CHECK_THROWS_AS(m.gen.local_generate(m.store, {feats[0]}, nullptr, nullptr), ShapeError);
  }
}

TEST_CASE("convolution fusion starts as the plain sum") {
  auto m = make_model(small_config(), 3);
  const auto masks = random_masks(1, 5, 16, 16, 4);
  const auto feats = mask_filter(randn({1, 8, 16, 16}, 5), masks.masks);
  std::vector<TensorD> images;
  const TensorD fused = m.gen.local_generate(m.store, feats, &images, nullptr);
  const TensorD sum = sum_images(images);
  for (int i = 1; i < 15; ++i)
    for (int j = 1; j < 15; ++j) CHECK(fused.at(0, 1, i, j) == doctest::Approx(sum.at(0, 1, i, j)).epsilon(1e-12));
}

TEST_CASE("class cross-entropy analytic values") {
  const int K = 4, C = 4;
  const auto m = random_masks(1, K, 4, 4, 1);
  std::vector<TensorD> feats(K, TensorD({1, C, 4, 4}));
  // Class i features are the unit vector e_i on its own pixels.
  for (int i = 0; i < K; ++i)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x)
        if (m.masks.at(0, i, y, x) == 1) feats[static_cast<std::size_t>(i)].at(0, i, y, x) = 1;

  SUBCASE("uniform logits give ln K per valid class") {
    TensorD all_valid({1, K}, 1.0);
    const auto r = classify_classes(feats, m.masks, all_valid, TensorD({K, C}), TensorD({K}));
    CHECK(r.loss == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  }
  SUBCASE("confident correct logits give zero") {
    TensorD w({K, C});
    for (int i = 0; i < K; ++i) w[static_cast<std::size_t>(i * C + i)] = 1000;
    const auto r = classify_classes(feats, m.masks, m.valid, w, TensorD({K}));
    CHECK(r.loss == 0.0);
  }
  SUBCASE("all classes void gives zero") {
    const auto r = classify_classes(feats, m.masks, TensorD({1, K}), randn({K, C}, 2), randn({K}, 3));
    CHECK(r.loss == 0.0);
    const auto g = classify_backward(feats, m.masks, TensorD({1, K}), randn({K, C}, 2), r, 1.0);
    for (const double v : g.weight.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("void classes do not affect the classification loss") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const int K = 5;
    // Classes 3 and 4 never appear.
    const auto m = random_masks(2, K, 4, 4, seed, 2);
    std::vector<TensorD> feats;
    for (int i = 0; i < K; ++i) feats.push_back(randn({2, 3, 4, 4}, seed * 10 + static_cast<std::uint64_t>(i)));
    const TensorD w = randn({K, 3}, seed + 77), b = randn({K}, seed + 78);
    const double base = classify_classes(feats, m.masks, m.valid, w, b).loss;
    feats[3] = randn({2, 3, 4, 4}, seed + 999);
    feats[4] = randn({2, 3, 4, 4}, seed + 998);
    REQUIRE(classify_classes(feats, m.masks, m.valid, w, b).loss == base);
  }
}

TEST_CASE("global generator with zero weights emits its bias") {
  auto m = make_model(small_config(), 1);
  for (const auto& n : m.store.names("G.global.")) {
    for (auto& v : m.store.value(n).values()) v = 0;
  }
  TensorD& b = m.store.value("G.global.1.bias");
  b[0] = 0.25, b[1] = -0.5, b[2] = 0.75;
  const TensorD out = m.gen.global_generate(m.store, randn({1, 8, 16, 16}, 2), nullptr);
  CHECK(out.shape() == Shape{1, 3, 16, 16});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j) REQUIRE(out.at(0, c, i, j) == b[static_cast<std::size_t>(c)]);
}

TEST_CASE("fusion degenerate weight maps") {
  const TensorD g = randn({1, 3, 4, 4}, 1), l = randn({1, 3, 4, 4}, 2);
  TensorD w({1, 2, 4, 4});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) w.at(0, 0, i, j) = 1;
  CHECK(bitwise_equal(fuse_images(g, l, w), g));
  const TensorD half({1, 2, 4, 4}, 0.5);
  const TensorD mean = fuse_images(g, l, half);
  for (std::size_t i = 0; i < mean.size(); ++i) CHECK(mean[i] == doctest::Approx((g[i] + l[i]) / 2).epsilon(1e-15));
  CHECK_THROWS_AS(fuse_images(g, l, TensorD({1, 2, 3, 4})), ShapeError);
}

TEST_CASE("weight maps are per-pixel convex and the fused image is bounded") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto m = make_model(small_config(), seed);
    const TensorD f_up = randn({1, 8, 16, 16}, seed + 50);
    const TensorD w = m.gen.weight_maps(m.store, f_up, nullptr);
    REQUIRE(w.shape() == Shape{1, 2, 16, 16});
    const TensorD g = randn({1, 3, 16, 16}, seed + 51), l = randn({1, 3, 16, 16}, seed + 52);
    const TensorD fused = fuse_images(g, l, w);
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j) {
        REQUIRE(std::abs(w.at(0, 0, i, j) + w.at(0, 1, i, j) - 1.0) <= 1e-6);
        REQUIRE(w.at(0, 0, i, j) >= 0);
        REQUIRE(w.at(0, 1, i, j) >= 0);
        for (int c = 0; c < 3; ++c) {
          const double lo = std::min(g.at(0, c, i, j), l.at(0, c, i, j));
          const double hi = std::max(g.at(0, c, i, j), l.at(0, c, i, j));
          REQUIRE(fused.at(0, c, i, j) >= lo - 1e-12);
          REQUIRE(fused.at(0, c, i, j) <= hi + 1e-12);
        }
      }
  }
}

TEST_CASE("masked L1 values") {
  const auto m = random_masks(2, 3, 4, 4, 8);
  const TensorD real = randn({2, 3, 4, 4}, 9);
  const auto exact = mask_filter(real, m.masks);
  CHECK(masked_l1(real, exact, m.masks) == 0.0);

  TensorD one({2, 1, 4, 4}, 1.0);
  TensorD shifted = real;
  for (auto& v : shifted.values()) v += 0.3;
  CHECK(masked_l1(real, std::vector<TensorD>{shifted}, one) == doctest::Approx(0.3).epsilon(1e-14));

  std::vector<TensorD> outs{randn({2, 3, 4, 4}, 10), randn({2, 3, 4, 4}, 11), randn({2, 3, 4, 4}, 12)};
  double oracle = 0;
  for (int k = 0; k < 3; ++k) {
    double acc = 0;
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j)
            acc += std::abs(real.at(n, c, i, j) * m.masks.at(n, k, i, j) - outs[static_cast<std::size_t>(k)].at(n, c, i, j));
    oracle += acc / 96.0;
  }
  CHECK(masked_l1(real, outs, m.masks) == doctest::Approx(oracle).epsilon(1e-13));
}

TEST_CASE("GAN loss analytic values") {
  const TensorD zero({2, 1, 3, 3});
  CHECK(gan_d_loss(zero, zero, GanLossKind::logistic).loss == doctest::Approx(2 * std::numbers::ln2).epsilon(1e-14));
  CHECK(gan_g_loss(zero, GanLossKind::logistic).loss == doctest::Approx(std::numbers::ln2).epsilon(1e-14));
  const TensorD big({2, 1, 3, 3}, 60.0), small({2, 1, 3, 3}, -60.0);
  CHECK(gan_d_loss(big, small, GanLossKind::logistic).loss < 1e-20);
  CHECK(gan_d_loss(zero, zero, GanLossKind::hinge).loss == doctest::Approx(2.0));
  CHECK(gan_g_loss(zero, GanLossKind::hinge).loss == doctest::Approx(0.0));
  CHECK(gan_d_loss(TensorD({1, 1, 2, 2}, 2.0), TensorD({1, 1, 2, 2}, -2.0), GanLossKind::hinge).loss == 0.0);
  // Large logits stay finite.
  CHECK(std::isfinite(gan_d_loss(small, big, GanLossKind::logistic).loss));
}

TEST_CASE("Adam update") {
  AdamConfig cfg;
  SUBCASE("zero gradient from fresh state leaves values unchanged") {
    ParamSlot<double> s{randn({5}, 1), TensorD({5}), TensorD({5}), TensorD({5})};
    const TensorD before = s.value;
    adam_update(s, cfg, 1);
    CHECK(bitwise_equal(s.value, before));
  }
  SUBCASE("constant gradient moves by lr per step") {
    ParamSlot<double> s{TensorD({2}), TensorD({2}), TensorD({2}), TensorD({2})};
    s.grad[0] = 3.0;
    s.grad[1] = -0.01;
    for (long t = 1; t <= 200; ++t) {
      const TensorD before = s.value;
      adam_update(s, cfg, t);
      CHECK(before[0] - s.value[0] == doctest::Approx(cfg.lr).epsilon(1e-6));
      CHECK(s.value[1] - before[1] == doctest::Approx(cfg.lr).epsilon(1e-4));
    }
  }
  SUBCASE("matches a scalar reference") {
    ParamSlot<double> s{randn({7}, 2), TensorD({7}), TensorD({7}), TensorD({7})};
    std::vector<double> x(s.value.values().begin(), s.value.values().end()), m(7, 0), v(7, 0);
    for (long t = 1; t <= 25; ++t) {
      s.grad = randn({7}, 100 + static_cast<std::uint64_t>(t));
      adam_update(s, cfg, t);
      for (std::size_t i = 0; i < 7; ++i) {
        const double g = s.grad[i];
        m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g * g;
        const double mh = m[i] / (1 - std::pow(cfg.beta1, t));
        const double vh = v[i] / (1 - std::pow(cfg.beta2, t));
        x[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
        REQUIRE(std::abs(x[i] - s.value[i]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("every generator slot receives gradient, void branches none") {
  const LgganConfig cfg = small_config();
  auto m = make_model(cfg, 4);
  // Class 4 is absent.
  const auto masks = random_masks(2, cfg.n_classes, 16, 16, 6, 3);
  GeneratorCache<double> cache;
  const auto out = m.gen.forward(m.store, masks.masks, masks.valid, nullptr, &cache);
  GeneratorUpstream<double> up;
  up.fused = randn(out.fused.shape(), 7);
  up.class_images = masked_l1_backward(randn(out.fused.shape(), 8), out.class_images, out.masks, 10.0);
  up.ce_weight = 1.0;
  m.store.zero_grad();
  m.gen.backward(m.store, out, cache, masks.valid, up);
  for (const auto& name : m.store.names("G.")) {
    INFO(name);
    const bool void_branch = name.rfind("G.local.4.", 0) == 0;
    double norm = 0;
    for (const double g : m.store.grad(name).values()) norm += g * g;
    if (void_branch) {
      // The final projection bias still sees the fusion gradient; everything fed by F_4 = 0 does not.
      if (name.find(".0.weight") != std::string::npos) CHECK(norm == 0.0);
    } else {
      CHECK(norm > 0.0);
    }
  }
}

TEST_CASE("ablation switches") {
  const auto masks = random_masks(1, 5, 16, 16, 1);
  SUBCASE("without the local branch the output is the global image") {
    LgganConfig cfg = small_config();
    apply_ablation(cfg, "b1");
    auto m = make_model(cfg, 2);
    const auto out = m.gen.forward(m.store, masks.masks, masks.valid, nullptr, nullptr);
    CHECK(bitwise_equal(out.fused, out.global));
    CHECK_FALSE(m.store.contains("G.cls.weight"));
  }
  SUBCASE("without weight maps branches are averaged") {
    LgganConfig cfg = small_config();
    apply_ablation(cfg, "b4");
    auto m = make_model(cfg, 2);
    const auto out = m.gen.forward(m.store, masks.masks, masks.valid, nullptr, nullptr);
    for (std::size_t i = 0; i < out.fused.size(); ++i) {
      REQUIRE(out.fused[i] == doctest::Approx((out.global[i] + out.local[i]) / 2).epsilon(1e-14));
    }
    CHECK(m.store.names("G.gw.").empty());
  }
  SUBCASE("b2 uses addition fusion") {
    LgganConfig cfg = small_config();
    apply_ablation(cfg, "b2");
    CHECK(cfg.fusion == Fusion::add);
    CHECK_FALSE(cfg.use_classifier);
  }
  LgganConfig cfg;
  CHECK_THROWS_AS(apply_ablation(cfg, "b9"), std::invalid_argument);
}

TEST_CASE("config parsing") {
  LgganConfig cfg;
  cfg.apply(parse_key_values("ablation=b3\nfusion=add\nupsampler=bicubic\nlr=0.001\nmode=crossview\nseed=9\n"));
  CHECK(cfg.fusion == Fusion::add);  // explicit key refines the preset
  CHECK_FALSE(cfg.use_classifier);
  CHECK(cfg.upsampler == UpsamplerKind::bicubic);
  CHECK(cfg.adam.lr == 0.001);
  CHECK(cfg.mode == Mode::crossview);
  CHECK(cfg.input_channels() == 8);

  LgganConfig again;
  again.apply(cfg.to_key_values());
  CHECK(again.hash() == cfg.hash());
  CHECK(again.to_key_values() == cfg.to_key_values());
  CHECK(LgganConfig{}.hash() != cfg.hash());

  CHECK_THROWS_AS(cfg.apply("nope", "1"), std::invalid_argument);
  CHECK_THROWS_AS(cfg.apply("fusion", "mul"), std::invalid_argument);
  CHECK_THROWS_AS(cfg.apply("upsampler", "lanczos"), std::invalid_argument);
  CHECK_THROWS_AS(cfg.apply("n_classes", "x"), std::invalid_argument);
  LgganConfig bad;
  bad.image_size = 18;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  for (const auto kind : all_upsamplers()) CHECK(parse_upsampler(to_string(kind)) == kind);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  LgganConfig cfg = small_config();
  cfg.adam.lr = 0;
  Trainer tr(cfg);
  const auto before = tr.params().to_archive(false);
  const auto batch = training_batch(scene_for(cfg), cfg.batch, 0);
  const auto r1 = tr.train_step(batch);
  const auto r2 = tr.train_step(batch);
  CHECK(tr.params().to_archive(false) == before);
  CHECK(r1.total_g == r2.total_g);
  CHECK(r1.total_d == r2.total_d);
}

TEST_CASE("training is deterministic and resumes bitwise from a checkpoint") {
  const LgganConfig cfg = small_config();
  const auto scene = scene_for(cfg);
  Trainer a(cfg), b(cfg);
  const auto ha = run_training(a, scene, 3);
  const auto hb = run_training(b, scene, 3);
  for (std::size_t i = 0; i < ha.size(); ++i) CHECK(loss_csv_row(ha[i]) == loss_csv_row(hb[i]));

  const auto dir = std::filesystem::temp_directory_path() / "sau_test_lggan_ckpt";
  std::filesystem::remove_all(dir);
  a.save_checkpoint(dir);
  Trainer c = Trainer::load_checkpoint(dir);
  CHECK(c.step() == 3);
  const auto next_a = run_training(a, scene, 2);
  const auto next_c = run_training(c, scene, 2);
  for (std::size_t i = 0; i < next_a.size(); ++i) CHECK(loss_csv_row(next_a[i]) == loss_csv_row(next_c[i]));
  CHECK(a.params().to_archive(true) == c.params().to_archive(true));

  // A manifest whose config no longer matches its hash is rejected.
  {
    auto kv = load_key_values(dir / "manifest.txt");
    kv["config.lr"] = "0.5";
    std::ofstream(dir / "manifest.txt") << format_key_values(kv);
  }
  CHECK_THROWS_AS(Trainer::load_checkpoint(dir), FormatError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("cross-view training reports the image discriminator") {
  LgganConfig cfg = small_config();
  cfg.mode = Mode::crossview;
  Trainer tr(cfg);
  const auto r = tr.train_step(training_batch(scene_for(cfg), cfg.batch, 0));
  CHECK(r.has_d_i);
  CHECK(r.gan_d_i > 0);
  CHECK(tr.params().contains("D.i.0.weight"));
  CHECK(loss_csv_row(r).find(",,") == std::string::npos);
}

TEST_CASE("loss CSV format") {
  CHECK(loss_csv_header().rfind("# schema=1\n", 0) == 0);
  LossReport r;
  r.step = 3;
  r.gan_g = 0.5;
  CHECK(loss_csv_row(r) == "3,0.5,0,,0,0,0,0,0\n");
}

TEST_CASE("every ablation trains below its initial reconstruction error") {
  for (const char* preset : {"b1", "b2", "b3", "b4", "b5"}) {
    LgganConfig cfg = small_config();
    apply_ablation(cfg, preset);
    cfg.adam.lr = 1e-3;
    Trainer tr(cfg);
    const auto hist = run_training(tr, scene_for(cfg), 40);
    // Without the local branch there is no class-wise L1, so the image-level error is used.
    auto metric = [&](const LossReport& r) { return cfg.use_local ? r.l1_local : r.l1_image; };
    double last = 0;
    for (std::size_t i = hist.size() - 5; i < hist.size(); ++i) last += metric(hist[i]) / 5;
    INFO(preset << " initial " << metric(hist.front()) << " final " << last);
    CHECK(last < metric(hist.front()));
  }
}
