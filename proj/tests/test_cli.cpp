#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "sau/cli.hpp"
#include "sau/ppm.hpp"
#include "sau/stns.hpp"

using namespace sau;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("sau_test_cli_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("usage errors exit with 2, help with 0") {
  CHECK(run_cli({}).code == cli::kExitUsage);
  CHECK(run_cli({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run_cli({"bench", "--no-such-flag"}).code == cli::kExitUsage);
  CHECK(run_cli({"bench", "--impl", "fast"}).code == cli::kExitUsage);
  CHECK(run_cli({"bench", "--shape", "1x2x3"}).code == cli::kExitUsage);
  CHECK(run_cli({"gradcheck", "--op", "no_such_op"}).code == cli::kExitUsage);
  CHECK(run_cli({"train", "--out", "/tmp/x", "--set", "bogus_key=1"}).code == cli::kExitUsage);
  const Result h = run_cli({"--help"});
  CHECK(h.code == cli::kExitOk);
  CHECK(h.out.find("gradcheck") != std::string::npos);
}

TEST_CASE("gradcheck on a subset passes and reports CSV") {
  const Result r = run_cli({"gradcheck", "--op", "sau", "--op", "conv2d", "--seed", "7"});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.rfind("# schema=1\nop,input,max_rel_err,max_abs_err,pass\n", 0) == 0);
  CHECK(r.out.find("sau,") != std::string::npos);
  CHECK(r.out.find(",0\n") == std::string::npos);
}

TEST_CASE("oracle-check passes and writes one row per case") {
  const Result r = run_cli({"oracle-check", "--cases", "5", "--seed", "3"});
  CHECK(r.code == cli::kExitOk);
  CHECK(count_lines(r.out) == 2 + 5);
}

TEST_CASE("bench writes a row per implementation") {
  const Result r = run_cli({"bench", "--impl", "naive", "--impl", "optimized", "--shape", "1x4x6x6", "--k", "3",
                            "--s", "2", "--iters", "2", "--warmup", "1"});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(r.out.find("\nnaive,1x4x6x6,3,2,2,") != std::string::npos);
  CHECK(r.out.find("\noptimized,1x4x6x6,3,2,2,") != std::string::npos);
}

TEST_CASE("make-data, tiny train, infer and export-ppm round trip") {
  const auto dir = fresh_dir("pipeline");
  {
    std::ofstream(dir / "scene.txt") << "image_size=16\nn_classes=3\n";
  }
  const Result md = run_cli({"make-data", "--spec", (dir / "scene.txt").string(), "--count", "5", "--shard-size",
                             "2", "--out", (dir / "data").string()});
  REQUIRE(md.code == cli::kExitOk);
  CHECK(std::filesystem::exists(dir / "data" / "spec.txt"));
  CHECK(std::filesystem::exists(dir / "data" / "samples_00002.stna"));
  CHECK_FALSE(std::filesystem::exists(dir / "data" / "samples_00003.stna"));

  const std::vector<std::string> train_args = {
      "train",          "--set", "image_size=16",   "--set", "n_classes=3", "--set", "channels=4",
      "--set",          "c_compressed=2", "--set", "gw_hidden1=4", "--set", "gw_hidden2=4",
      "--set",          "disc_channels=4", "--set", "batch=2", "--steps", "3", "--checkpoint-every", "2",
      "--eval",         "2", "--out"};
  auto args = train_args;
  args.push_back((dir / "run").string());
  const Result tr = run_cli(args);
  REQUIRE(tr.code == cli::kExitOk);
  CHECK(tr.out.rfind("# schema=1\nupsampler,steps,final_masked_l1,wall_seconds,heldout_accuracy\nsau,3,", 0) == 0);
  CHECK(count_lines(slurp(dir / "run" / "losses.csv")) == 2 + 3);
  CHECK(std::filesystem::exists(dir / "run" / "checkpoints" / "step_000002" / "manifest.txt"));

  // Same run again must be byte-identical.
  auto args2 = train_args;
  args2.push_back((dir / "run2").string());
  REQUIRE(run_cli(args2).code == cli::kExitOk);
  CHECK(slurp(dir / "run" / "losses.csv") == slurp(dir / "run2" / "losses.csv"));

  const Result inf = run_cli({"infer", "--checkpoint", (dir / "run" / "checkpoint").string(), "--layout",
                              (dir / "data" / "samples_00001.stna").string(), "--index", "3", "--out",
                              (dir / "out.ppm").string()});
  REQUIRE(inf.code == cli::kExitOk);
  const std::string ppm = slurp(dir / "out.ppm");
  CHECK(ppm.rfind("P6\n16 16\n255\n", 0) == 0);
  CHECK(ppm.size() == std::string("P6\n16 16\n255\n").size() + 3 * 256);

  {
    std::ofstream grid(dir / "grid.txt");
    for (int i = 0; i < 16; ++i) {
      for (int j = 0; j < 16; ++j) grid << (i < 8 ? (j < 8 ? 0 : 1) : 2) << (j < 15 ? " " : "\n");
    }
  }
  CHECK(run_cli({"infer", "--checkpoint", (dir / "run" / "checkpoint").string(), "--layout",
                 (dir / "grid.txt").string(), "--out", (dir / "grid.ppm").string()})
            .code == cli::kExitOk);
  {
    std::ofstream(dir / "bad.txt") << "0 7\n1 1\n";
  }
  CHECK(run_cli({"infer", "--checkpoint", (dir / "run" / "checkpoint").string(), "--layout",
                 (dir / "bad.txt").string(), "--out", (dir / "bad.ppm").string()})
            .code == cli::kExitUsage);

  const Result ex = run_cli({"export-ppm", "--archive", (dir / "data" / "samples_00000.stna").string(), "--key",
                             "00000001/target", "--out", (dir / "t.ppm").string()});
  REQUIRE(ex.code == cli::kExitOk);
  const TensorF back = read_ppm(dir / "t.ppm");
  const auto ar = load_archive(dir / "data" / "samples_00000.stna");
  const TensorF orig = std::get<TensorF>(ar.at("00000001/target"));
  REQUIRE(back.shape() == orig.shape());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == quantize_unit(orig[i]) / 255.0f);
  CHECK(run_cli({"export-ppm", "--archive", (dir / "data" / "samples_00000.stna").string(), "--key", "missing",
                 "--out", (dir / "m.ppm").string()})
            .code == cli::kExitUsage);
}

TEST_CASE("export_ppm quantizes the extremes and round-trips bytes") {
  const auto dir = fresh_dir("ppm");
  TensorF zero({1, 3, 2, 3});
  export_ppm(zero, dir / "z.ppm");
  const std::string z = slurp(dir / "z.ppm");
  CHECK(z == "P6\n3 2\n255\n" + std::string(18, '\x00'));
  TensorF one({1, 3, 2, 3});
  for (auto& v : one.values()) v = 1.0f;
  export_ppm(one, dir / "o.ppm");
  CHECK(slurp(dir / "o.ppm") == "P6\n3 2\n255\n" + std::string(18, '\xff'));
  CHECK(quantize_unit(-3.0) == 0);
  CHECK(quantize_unit(7.0) == 255);
  CHECK(quantize_unit(0.5) == 128);

  TensorF ramp({1, 3, 4, 5});
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<float>(i % 256) / 255.0f;
  export_ppm(ramp, dir / "r.ppm");
  CHECK(read_ppm(dir / "r.ppm") == ramp);
  {
    std::ofstream(dir / "bad.ppm") << "P3\n1 1\n255\n0 0 0\n";
  }
  CHECK_THROWS_AS(read_ppm(dir / "bad.ppm"), FormatError);
}
