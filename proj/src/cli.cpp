#include "sau/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "sau/gradcheck.hpp"
#include "sau/lggan/train.hpp"
#include "sau/ppm.hpp"
#include "sau/stns.hpp"
#include "sau/verify.hpp"

namespace sau::cli {

namespace {

// Input or configuration problems, reported with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

Shape parse_shape(const std::string& text) {
  Shape s;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) s.push_back(parse_int("shape", part));
  if (s.size() != 4) throw UsageError("--shape must be NxCxHxW, got '" + text + "'");
  return s;
}

void print_resolved(std::ostream& err, const std::string& command, const KeyValues& kv) {
  err << "[" << command << "] resolved config:\n";
  for (const auto& [k, v] : kv) err << "  " << k << "=" << v << "\n";
}

// ---------------------------------------------------------------------------------------------
// gradcheck

struct GradcheckOpts {
  std::vector<std::string> ops;
  std::uint64_t seed = 1;
  double tol = 1e-4;
  std::string out;
};

int cmd_gradcheck(const GradcheckOpts& o, std::ostream& out, std::ostream& err) {
  print_resolved(err, "gradcheck", {{"seed", std::to_string(o.seed)}, {"tol", fmt_g(o.tol)},
                                    {"ops", o.ops.empty() ? "all" : std::to_string(o.ops.size())}});
  const auto& reg = default_registry();
  std::vector<std::string> ops = o.ops.empty() ? reg.names() : o.ops;
  for (const auto& op : ops) {
    if (!reg.contains(op)) throw UsageError("unknown op '" + op + "'");
  }
  GradCheckOptions opts;
  opts.tolerance = o.tol;
  std::ostringstream csv;
  csv << "# schema=1\nop,input,max_rel_err,max_abs_err,pass\n";
  int failed = 0;
  for (const auto& op : ops) {
    const GradReport r = check_op(reg, op, o.seed, opts);
    for (const auto& in : r.inputs) {
      csv << op << "," << in.input << "," << fmt_g(in.max_rel_err) << "," << fmt_g(in.max_abs_err) << ","
          << (in.pass ? 1 : 0) << "\n";
    }
    if (!r.pass) {
      ++failed;
      err << "gradcheck: " << op << " FAILED\n";
    }
  }
  if (o.out.empty()) {
    out << csv.str();
  } else {
    std::ofstream(o.out) << csv.str();
  }
  err << "gradcheck: " << ops.size() - static_cast<std::size_t>(failed) << "/" << ops.size() << " ops pass\n";
  return failed == 0 ? kExitOk : kExitFail;
}

// ---------------------------------------------------------------------------------------------
// oracle-check

int cmd_oracle(int cases, std::uint64_t seed, double tol, std::ostream& out, std::ostream& err) {
  print_resolved(err, "oracle-check", {{"cases", std::to_string(cases)}, {"seed", std::to_string(seed)},
                                       {"tol", fmt_g(tol)}});
  out << "# schema=1\ncase,shape,k,s,compressed,max_abs_diff,pass\n";
  int failed = 0;
  double worst = 0;
  for (const auto& c : run_oracle_cases(cases, seed)) {
    const bool pass = c.max_abs_diff <= tol;
    failed += !pass;
    worst = std::max(worst, c.max_abs_diff);
    out << c.index << "," << shape_text(c.shape) << "," << c.k << "," << c.s << "," << c.compressed << ","
        << fmt_g(c.max_abs_diff) << "," << (pass ? 1 : 0) << "\n";
  }
  err << "oracle-check: " << cases - failed << "/" << cases << " cases within " << tol << " (worst " << worst
      << ")\n";
  return failed == 0 ? kExitOk : kExitFail;
}

// ---------------------------------------------------------------------------------------------
// bench

struct BenchOpts {
  std::vector<std::string> impls;
  std::vector<std::string> shapes;
  int k = 5;
  int s = 2;
  int iters = 100;
  int warmup = 10;
  std::uint64_t seed = 1;
};

int cmd_bench(const BenchOpts& o, std::ostream& out, std::ostream& err) {
  std::vector<std::string> impls = o.impls.empty() ? std::vector<std::string>{"naive", "optimized"} : o.impls;
  std::vector<std::string> shapes = o.shapes.empty() ? std::vector<std::string>{"1x64x32x32"} : o.shapes;
  print_resolved(err, "bench", {{"k", std::to_string(o.k)}, {"s", std::to_string(o.s)},
                                {"iters", std::to_string(o.iters)}, {"warmup", std::to_string(o.warmup)},
                                {"seed", std::to_string(o.seed)}, {"threads", std::to_string(omp_get_max_threads())}});
  out << "# schema=1\nimpl,shape,k,s,iters,wall_ns_per_iter,throughput_elems_per_s\n";
  for (const auto& shape : shapes) {
    const Shape dims = parse_shape(shape);
    for (const auto& impl : impls) {
      const BenchResult r = bench_sau_forward(impl, dims, o.k, o.s, o.iters, o.warmup, o.seed);
      out << r.impl << "," << shape_text(r.shape) << "," << r.k << "," << r.s << "," << r.iters << ","
          << fmt_g(r.ns_per_iter) << "," << fmt_g(r.elems_per_s) << "\n";
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------
// make-data

struct MakeDataOpts {
  std::string spec;
  std::uint64_t count = 0;
  std::uint64_t start = 0;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::uint64_t shard = 256;
};

int cmd_make_data(const MakeDataOpts& o, std::ostream& out, std::ostream& err) {
  synth::SceneSpec spec;
  if (!o.spec.empty()) spec.apply(load_key_values(o.spec));
  if (o.seed) spec.seed = *o.seed;
  spec.validate();
  KeyValues resolved = spec.to_key_values();
  resolved["count"] = std::to_string(o.count);
  resolved["start"] = std::to_string(o.start);
  print_resolved(err, "make-data", resolved);

  std::filesystem::create_directories(o.out);
  std::ofstream(std::filesystem::path(o.out) / "spec.txt") << format_key_values(spec.to_key_values());
  synth::DatasetIter it(spec, o.count, o.start);
  std::vector<synth::Sample> shard;
  int shard_index = 0;
  out << "# schema=1\nfile,first_index,count\n";
  auto flush = [&] {
    if (shard.empty()) return;
    char name[32];
    std::snprintf(name, sizeof name, "samples_%05d.stna", shard_index++);
    synth::save_samples(std::filesystem::path(o.out) / name, shard);
    out << name << "," << shard.front().index << "," << shard.size() << "\n";
    shard.clear();
  };
  synth::Sample s;
  while (it.next(s)) {
    shard.push_back(s);
    if (shard.size() >= o.shard) flush();
  }
  flush();
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string config;
  std::vector<std::string> sets;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  std::optional<int> checkpoint_every;
  std::string out;
  std::string upsamplers;
  std::string resume;
  int eval = 0;
};

struct TrainSummary {
  std::string upsampler;
  long steps = 0;
  double final_l1 = 0;
  double wall_s = 0;
  double accuracy = -1;
};

lggan::LgganConfig resolve_config(const TrainOpts& o) {
  lggan::LgganConfig cfg;
  KeyValues kv;
  if (!o.config.empty()) kv = load_key_values(o.config);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  cfg.apply(kv);
  if (o.steps) cfg.steps = *o.steps;
  if (o.seed) cfg.seed = *o.seed;
  if (o.checkpoint_every) cfg.checkpoint_every = *o.checkpoint_every;
  cfg.validate();
  return cfg;
}

// Mean masked L1 over the last (up to) 10 steps; image-level L1 when there is no local branch.
double final_l1(const std::vector<lggan::LossReport>& hist, bool local) {
  if (hist.empty()) return 0;
  const std::size_t from = hist.size() > 10 ? hist.size() - 10 : 0;
  std::vector<double> v;
  for (const auto& r : hist) v.push_back(local ? r.l1_local : r.l1_image);
  return lggan::window_mean(v, from, v.size());
}

TrainSummary train_one(const lggan::LgganConfig& cfg, const std::filesystem::path& dir, const std::string& resume,
                       int eval, std::ostream& err) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "config.txt") << format_key_values(cfg.to_key_values());
  lggan::Trainer tr = resume.empty() ? lggan::Trainer(cfg) : lggan::Trainer::load_checkpoint(resume);
  if (!resume.empty() && tr.config().hash() != cfg.hash()) {
    err << "train: resuming with the checkpoint's own config\n";
  }
  const auto scene = lggan::scene_for(tr.config());
  std::ofstream csv(dir / "losses.csv");
  if (!csv) throw UsageError("cannot write " + (dir / "losses.csv").string());
  csv << lggan::loss_csv_header();

  const int remaining = std::max(0, cfg.steps - static_cast<int>(tr.step()));
  const auto t0 = std::chrono::steady_clock::now();
  const int every = tr.config().checkpoint_every;
  const auto hist = lggan::run_training(tr, scene, remaining, [&](const lggan::LossReport& r) {
    csv << lggan::loss_csv_row(r);
    if (every > 0 && r.step % every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%06ld", r.step);
      tr.save_checkpoint(dir / "checkpoints" / name);
    }
  });
  TrainSummary s;
  s.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  csv.close();
  tr.save_checkpoint(dir / "checkpoint");
  s.upsampler = lggan::to_string(tr.config().upsampler);
  s.steps = tr.step();
  s.final_l1 = final_l1(hist, tr.config().use_local);
  if (eval > 0) s.accuracy = lggan::heldout_accuracy(tr, scene, eval);
  err << "train: " << s.upsampler << " " << s.steps << " steps in " << fmt_g(s.wall_s) << " s, final masked L1 "
      << fmt_g(s.final_l1);
  if (eval > 0) err << ", held-out palette accuracy " << fmt_g(s.accuracy);
  err << "\n";
  return s;
}

std::vector<lggan::UpsamplerKind> parse_upsampler_list(const std::string& text) {
  if (text == "all") return lggan::all_upsamplers();
  std::vector<lggan::UpsamplerKind> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(lggan::parse_upsampler(part));
  if (out.empty()) throw UsageError("--upsamplers is empty");
  return out;
}

int cmd_train(const TrainOpts& o, std::ostream& out, std::ostream& err) {
  const lggan::LgganConfig cfg = resolve_config(o);
  const std::filesystem::path dir = o.out;
  KeyValues resolved = cfg.to_key_values();
  if (!o.upsamplers.empty()) resolved["upsampler"] = o.upsamplers;
  print_resolved(err, "train", resolved);
  const std::string header = "# schema=1\nupsampler,steps,final_masked_l1,wall_seconds,heldout_accuracy\n";
  auto row = [](const TrainSummary& s) {
    return s.upsampler + "," + std::to_string(s.steps) + "," + fmt_g(s.final_l1) + "," + fmt_g(s.wall_s) + "," +
           (s.accuracy >= 0 ? fmt_g(s.accuracy) : "") + "\n";
  };

  if (o.upsamplers.empty()) {
    const auto s = train_one(cfg, dir, o.resume, o.eval, err);
    out << header << row(s);
    return kExitOk;
  }
  if (!o.resume.empty()) throw UsageError("--resume cannot be combined with --upsamplers");
  std::string csv = header;
  for (const auto kind : parse_upsampler_list(o.upsamplers)) {
    lggan::LgganConfig c = cfg;
    c.upsampler = kind;
    c.validate();
    csv += row(train_one(c, dir / lggan::to_string(kind), "", o.eval, err));
  }
  std::ofstream(dir / "upsampler_comparison.csv") << csv;
  out << csv;
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------
// infer and export-ppm

synth::Layout read_layout_text(const std::filesystem::path& path, int n_classes) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open layout " + path.string());
  std::vector<int> labels;
  int rows = 0;
  std::string line;
  std::size_t width = 0;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<int> row;
    int v;
    while (ls >> v) row.push_back(v);
    if (!ls.eof()) throw UsageError("layout file has a non-integer entry");
    if (width == 0) width = row.size();
    if (row.size() != width) throw UsageError("layout rows differ in length");
    labels.insert(labels.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0 || static_cast<std::size_t>(rows) != width) throw UsageError("layout must be a square grid");
  synth::Layout L{rows, n_classes, labels, {}};
  try {
    synth::refresh_valid(L);
  } catch (const std::out_of_range&) {
    throw UsageError("layout has labels outside [0, " + std::to_string(n_classes) + ")");
  }
  return L;
}

struct InferOpts {
  std::string checkpoint;
  std::string layout;
  std::string out;
  std::string conditional;
  std::optional<std::uint64_t> index;
};

int cmd_infer(const InferOpts& o, std::ostream& out, std::ostream& err) {
  const lggan::Trainer tr = lggan::Trainer::load_checkpoint(o.checkpoint);
  const auto& cfg = tr.config();
  print_resolved(err, "infer", cfg.to_key_values());

  synth::Layout layout;
  std::optional<TensorF> cond;
  const std::filesystem::path lp = o.layout;
  if (lp.extension() == ".stna") {
    const auto samples = synth::load_samples(lp, cfg.n_classes);
    if (samples.empty()) throw UsageError("no samples in " + lp.string());
    auto it = samples.begin();
    if (o.index) {
      it = std::find_if(samples.begin(), samples.end(), [&](const synth::Sample& s) { return s.index == *o.index; });
      if (it == samples.end()) throw UsageError("sample " + std::to_string(*o.index) + " not in " + lp.string());
    }
    layout = it->layout;
    cond = it->conditional;
  } else {
    layout = read_layout_text(lp, cfg.n_classes);
  }
  if (!o.conditional.empty()) cond = read_ppm(o.conditional);
  if (layout.size != cfg.image_size) {
    throw UsageError("layout is " + std::to_string(layout.size) + " pixels wide, model expects " +
                     std::to_string(cfg.image_size));
  }
  const bool crossview = cfg.mode == lggan::Mode::crossview;
  if (crossview && !cond) throw UsageError("cross-view model needs a conditional image (--conditional or archive)");
  const TensorF masks = synth::to_onehot(layout);
  const TensorF valid = synth::valid_vector(layout);
  const auto gen = tr.generate(masks, valid, crossview ? &*cond : nullptr);
  export_ppm(gen.fused, o.out);
  const double acc = synth::palette_accuracy(gen.fused, layout, synth::Palette::primary(cfg.n_classes, lggan::scene_for(cfg).amplitude));
  out << "# schema=1\nout,step,palette_accuracy\n" << o.out << "," << tr.step() << "," << fmt_g(acc) << "\n";
  return kExitOk;
}

int cmd_export(const std::string& archive, const std::string& key, const std::string& path, std::ostream& out,
               std::ostream& err) {
  print_resolved(err, "export-ppm", {{"archive", archive}, {"key", key}, {"out", path}});
  const TensorArchive ar = load_archive(archive);
  const auto it = ar.find(key);
  if (it == ar.end()) throw UsageError("archive has no tensor '" + key + "'");
  TensorF img = std::visit([](const auto& t) { return tensor_cast<float>(t); }, it->second);
  if (img.rank() == 3) img = img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
  if (img.rank() != 4 || img.c() != 3) throw UsageError("tensor '" + key + "' is not an RGB image");
  export_ppm(img, path);
  out << "# schema=1\nout,width,height\n" << path << "," << img.w() << "," << img.h() << "\n";
  return kExitOk;
}

}  // namespace

void apply_thread_env() {
  const char* env = std::getenv("SAU_THREADS");
  if (!env || !*env) return;
  const int n = parse_int("SAU_THREADS", env);
  if (n < 1) throw std::invalid_argument("SAU_THREADS must be a positive integer");
  omp_set_num_threads(n);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semantic-aware upsampling and local/global GAN toolkit", "sau"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  GradcheckOpts gc;
  auto* sc_gc = app.add_subcommand("gradcheck", "Finite-difference check of every registered backward pass");
  sc_gc->add_option("--op", gc.ops, "Op to check (repeatable; default all)");
  sc_gc->add_option("--seed", gc.seed, "Random seed");
  sc_gc->add_option("--tol", gc.tol, "Max relative error")->check(CLI::PositiveNumber);
  sc_gc->add_option("--out", gc.out, "Write the CSV report here instead of stdout");

  int oc_cases = 50;
  std::uint64_t oc_seed = 1;
  double oc_tol = 1e-12;
  auto* sc_oc = app.add_subcommand("oracle-check", "Optimized SAU against the naive reference at f64");
  sc_oc->add_option("--cases", oc_cases, "Number of random cases")->check(CLI::PositiveNumber);
  sc_oc->add_option("--seed", oc_seed, "Random seed");
  sc_oc->add_option("--tol", oc_tol, "Max absolute difference")->check(CLI::NonNegativeNumber);

  BenchOpts bo;
  auto* sc_bench = app.add_subcommand("bench", "Time SAU forward (f32)");
  sc_bench->add_option("--impl", bo.impls, "naive or optimized (repeatable)")
      ->check(CLI::IsMember({"naive", "optimized"}));
  sc_bench->add_option("--shape", bo.shapes, "NxCxHxW (repeatable; default 1x64x32x32)");
  sc_bench->add_option("--k", bo.k, "Kernel size")->check(CLI::PositiveNumber);
  sc_bench->add_option("--s", bo.s, "Scale")->check(CLI::PositiveNumber);
  sc_bench->add_option("--iters", bo.iters, "Timed iterations")->check(CLI::PositiveNumber);
  sc_bench->add_option("--warmup", bo.warmup, "Untimed iterations first")->check(CLI::NonNegativeNumber);
  sc_bench->add_option("--seed", bo.seed, "Random seed");

  MakeDataOpts mo;
  auto* sc_md = app.add_subcommand("make-data", "Write synthetic paired samples as STNS archives");
  sc_md->add_option("--spec", mo.spec, "Scene spec file (key=value)")->check(CLI::ExistingFile);
  sc_md->add_option("--count", mo.count, "Number of samples")->required();
  sc_md->add_option("--start", mo.start, "First sample index");
  sc_md->add_option("--seed", mo.seed, "Override the spec seed");
  sc_md->add_option("--shard-size", mo.shard, "Samples per archive")->check(CLI::PositiveNumber);
  sc_md->add_option("--out", mo.out, "Output directory")->required();

  TrainOpts to;
  auto* sc_train = app.add_subcommand("train", "Train the generator and discriminators on synthetic data");
  sc_train->add_option("--config", to.config, "Config file (key=value)")->check(CLI::ExistingFile);
  sc_train->add_option("--set", to.sets, "Override one config key (key=value, repeatable)");
  sc_train->add_option("--steps", to.steps, "Total training steps")->check(CLI::NonNegativeNumber);
  sc_train->add_option("--seed", to.seed, "Random seed");
  sc_train->add_option("--checkpoint-every", to.checkpoint_every, "Checkpoint interval in steps (0 = off)")
      ->check(CLI::NonNegativeNumber);
  sc_train->add_option("--upsamplers", to.upsamplers,
                       "Train once per upsampler (comma list or 'all') and write upsampler_comparison.csv");
  sc_train->add_option("--eval", to.eval, "Held-out layouts for palette accuracy after training")
      ->check(CLI::NonNegativeNumber);
  sc_train->add_option("--resume", to.resume, "Continue from a checkpoint directory")->check(CLI::ExistingDirectory);
  sc_train->add_option("--out", to.out, "Output directory")->required();

  InferOpts io;
  auto* sc_infer = app.add_subcommand("infer", "Render a layout with a trained checkpoint");
  sc_infer->add_option("--checkpoint", io.checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  sc_infer->add_option("--layout", io.layout, "Sample archive (.stna) or text grid of labels")
      ->required()
      ->check(CLI::ExistingFile);
  sc_infer->add_option("--index", io.index, "Sample index within the archive");
  sc_infer->add_option("--conditional", io.conditional, "Conditional image (P6) for cross-view models")
      ->check(CLI::ExistingFile);
  sc_infer->add_option("--out", io.out, "Output P6 image")->required();

  std::string ex_archive, ex_key, ex_out;
  auto* sc_ex = app.add_subcommand("export-ppm", "Write an RGB tensor from an STNS archive as P6");
  sc_ex->add_option("--archive", ex_archive, "STNS archive")->required()->check(CLI::ExistingFile);
  sc_ex->add_option("--key", ex_key, "Tensor name, e.g. 00000000/target")->required();
  sc_ex->add_option("--out", ex_out, "Output P6 image")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "sau: " << e.what() << "\n" << "Run with --help for usage.\n";
    return kExitUsage;
  }

  try {
    apply_thread_env();
    if (*sc_gc) return cmd_gradcheck(gc, out, err);
    if (*sc_oc) return cmd_oracle(oc_cases, oc_seed, oc_tol, out, err);
    if (*sc_bench) return cmd_bench(bo, out, err);
    if (*sc_md) return cmd_make_data(mo, out, err);
    if (*sc_train) return cmd_train(to, out, err);
    if (*sc_infer) return cmd_infer(io, out, err);
    if (*sc_ex) return cmd_export(ex_archive, ex_key, ex_out, out, err);
  } catch (const NumericError& e) {
    err << "sau: " << e.what() << "\n";
    return kExitFail;
  } catch (const std::exception& e) {
    err << "sau: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace sau::cli
