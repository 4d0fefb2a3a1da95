// SPDX-License-Identifier: Apache-2.0
//
// dp3df: synth | train | infer | eval | gradcheck | bench | ablate
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "dp3df/bench.hpp"
#include "dp3df/error.hpp"
#include "dp3df/gradcheck.hpp"
#include "dp3df/io.hpp"
#include "dp3df/parallel.hpp"
#include "dp3df/synth.hpp"
#include "dp3df/trainer.hpp"

namespace fs = std::filesystem;
using namespace dp3df;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> r, kt, kh, kw, threads, steps;
  std::string ablation;
};

struct Settings {
  TrainConfig train;
  PredictorConfig predictor;
  DatasetSpec data;
};

void add_common(CLI::App* cmd, Common& c, const std::string& default_out) {
  c.out = default_out;
  cmd->add_option("--config", c.config, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "training / benchmark seed");
  cmd->add_option("--out", c.out, "output path")->capture_default_str();
  cmd->add_option("--r", c.r, "upsampling factor");
  cmd->add_option("--kt", c.kt, "temporal taps");
  cmd->add_option("--kh", c.kh, "vertical taps");
  cmd->add_option("--kw", c.kw, "horizontal taps");
  cmd->add_option("--ablation", c.ablation, "full | no_temporal | no_spatial | no_residual");
  cmd->add_option("--threads", c.threads, "worker threads");
  cmd->add_option("--steps", c.steps, "training steps");
}

Settings resolve(const Common& c) {
  Settings s;
  if (!c.config.empty()) apply_config(read_config(c.config), s.train, s.predictor, s.data);
  ConfigMap flags;
  if (c.seed) flags["seed"] = std::to_string(*c.seed);
  if (c.r) flags["r"] = std::to_string(*c.r);
  if (c.kt) flags["kt"] = std::to_string(*c.kt);
  if (c.kh) flags["kh"] = std::to_string(*c.kh);
  if (c.kw) flags["kw"] = std::to_string(*c.kw);
  if (c.threads) flags["threads"] = std::to_string(*c.threads);
  if (c.steps) flags["steps"] = std::to_string(*c.steps);
  if (!c.ablation.empty()) flags["ablation"] = c.ablation;
  apply_config(flags, s.train, s.predictor, s.data);
  s.predictor.validate();
  return s;
}

std::vector<SequenceRecord> dataset_or_synth(const std::string& dir, const DatasetSpec& spec, int threads) {
  if (!dir.empty()) return load_dataset(dir);
  return make_dataset(spec, threads);
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

template <class Fn>
std::string to_text(Fn&& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

TrainResult run_training(const Settings& s, const std::vector<SequenceRecord>& data, const std::string& label) {
  const auto start = std::chrono::steady_clock::now();
  const long report_every = std::max<long>(1, s.train.total_steps / 20);
  return train(s.train, s.predictor, data, [&](const LossRecord& rec) {
    if (rec.step % report_every == 0 || rec.step + 1 == s.train.total_steps) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::printf("[%s] step %5ld  total %.5f  L_r %.5f  L_s %.5f  L_e %.5f  (%.0f s)\n", label.c_str(), rec.step,
                  rec.total, rec.recon, rec.smooth, rec.residual, secs);
      std::fflush(stdout);
    }
  });
}

void save_run(const fs::path& out, const Settings& s, const TrainResult& result) {
  save_checkpoint(out / "checkpoint.dpt", result.weights);
  write_text(out / "loss.csv", to_text([&](std::ostream& os) { write_loss_csv(os, result.log); }));
  write_config(out / "config.txt", describe_config(s.train, s.predictor, s.data));
}

int cmd_synth(const Common& c, int test_sequences) {
  const Settings s = resolve(c);
  const fs::path out = c.out;
  save_dataset(out / "train", make_dataset(s.data, s.train.threads));
  save_dataset(out / "test", make_dataset(held_out(s.data, test_sequences), s.train.threads));
  std::cout << "wrote " << s.data.sequences << " training and " << test_sequences << " test sequences to " << out
            << '\n';
  return 0;
}

int cmd_train(const Common& c, const std::string& data_dir) {
  const Settings s = resolve(c);
  const auto data = dataset_or_synth(data_dir, s.data, s.train.threads);
  const TrainResult result = run_training(s, data, to_string(s.predictor.ablation));
  save_run(c.out, s, result);
  std::cout << "checkpoint and loss log written to " << c.out << '\n';
  return 0;
}

void write_visual(const fs::path& path, const Tensor& frame, bool signed_values) {
  if (!signed_values) {
    write_ppm(path, frame);
    return;
  }
  Tensor shifted = frame;
  for (float& v : shifted.values()) v = std::clamp(v + 0.5f, 0.0f, 1.0f);
  write_ppm(path, shifted);
}

int cmd_infer(const Common& c, const std::string& checkpoint, const std::string& filters, const std::string& input,
              int only_frame) {
  const Settings s = resolve(c);
  require(!input.empty(), "infer: --input (directory of LLN .ppm frames) is required");
  require(checkpoint.empty() != filters.empty(), "infer: give exactly one of --checkpoint or --filters");
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(input))
    if (e.path().extension() == ".ppm") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  require(!paths.empty(), "infer: no .ppm frames in " + input);
  std::vector<Tensor> frames;
  for (const auto& p : paths) frames.push_back(read_ppm(p));

  ParamMap<float> weights;
  TensorMap fixture;
  if (!checkpoint.empty()) weights = load_checkpoint(checkpoint);
  else fixture = read_container(filters);

  const fs::path out = c.out;
  const int n = (s.predictor.geom.frames - 1) / 2;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (only_frame >= 0 && static_cast<std::size_t>(only_frame) != t) continue;
    const Tensor clip = window(frames, t, n);
    Inference inf;
    if (!checkpoint.empty()) {
      inf = infer(clip, weights, s.predictor);
    } else {
      require(fixture.count("raw_filters") == 1, "infer: filter container needs a 'raw_filters' section");
      inf.field = normalize_filters(fixture.at("raw_filters"), s.predictor.filter_geometry(),
                                    s.predictor.unit_illumination);
      inf.z = apply_dp3df(clip, inf.field, ApplyVariant::tiled);
      inf.residual = fixture.count("residual") ? fixture.at("residual") : Tensor(inf.z.shape());
      inf.y = combine_residual(inf.z, inf.residual);
    }
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.ppm", t);
    write_visual(out / "z" / name, inf.z, false);
    write_visual(out / "r" / name, inf.residual, true);
    write_visual(out / "y" / name, inf.y, false);
  }
  std::cout << "wrote Z, R (shifted by 0.5) and Y frames to " << out << '\n';
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& data_dir, bool baseline) {
  const Settings s = resolve(c);
  const auto data = dataset_or_synth(data_dir, held_out(s.data), s.train.threads);
  const fs::path out = c.out;
  if (!checkpoint.empty()) {
    const EvalReport report = evaluate(data, load_checkpoint(checkpoint), s.predictor, s.train.threads);
    report.print_table(std::cout);
    write_text(out / "eval.csv", to_text([&](std::ostream& os) { report.write_csv(os); }));
  }
  if (baseline || checkpoint.empty()) {
    const EvalReport report = evaluate_baseline(data);
    report.print_table(std::cout);
    write_text(out / "eval_baseline.csv", to_text([&](std::ostream& os) { report.write_csv(os); }));
  }
  return 0;
}

int cmd_gradcheck(const Common& c) {
  GradcheckOptions opt;
  if (c.seed) opt.seed = *c.seed;
  const GradcheckReport report = run_gradcheck(opt);
  report.print(std::cout);
  return report.passed() ? 0 : 1;
}

int cmd_bench(const Common& c, int size, int repeats) {
  const Settings s = resolve(c);
  const int threads = c.threads ? *c.threads : 4;
  BenchInstance large;
  large.height = large.width = static_cast<std::size_t>(size);
  large.geom = s.predictor.geom;
  BenchInstance tiny = large;
  tiny.height = tiny.width = 16;
  const auto results = run_bench({tiny, large}, threads, repeats, c.seed.value_or(1));
  std::cout << std::left << std::setw(10) << "variant" << std::setw(12) << "instance" << std::setw(9) << "threads"
            << std::setw(14) << "seconds" << std::setw(16) << "pixels/s" << std::setw(14) << "max |delta|" << '\n';
  for (const auto& r : results) {
    std::cout << std::left << std::setw(10) << r.variant << std::setw(12)
              << (std::to_string(r.instance.height) + "x" + std::to_string(r.instance.width)) << std::setw(9)
              << r.threads;
    if (r.passed)
      std::cout << std::setw(14) << r.seconds << std::setw(16) << r.throughput;
    else
      std::cout << std::setw(14) << "FLAGGED" << std::setw(16) << "-";
    std::cout << std::setw(14) << r.max_diff << '\n';
  }
  std::cout << "normalization (not in the timings above): " << results.back().normalize_seconds << " s on " << size
            << "x" << size << '\n';
  write_text(c.out, to_text([&](std::ostream& os) { write_bench_csv(os, results); }));
  bool ok = true;
  for (const auto& r : results) ok = ok && r.passed;
  return ok ? 0 : 1;
}

int cmd_ablate(const Common& c, const std::string& data_dir) {
  const Settings base = resolve(c);
  const auto data = dataset_or_synth(data_dir, base.data, base.train.threads);
  const auto test = make_dataset(held_out(base.data), base.train.threads);
  const fs::path out = c.out;
  std::ostringstream csv;
  csv << "variant,psnr,ssim,final_total_loss\n" << std::setprecision(8);
  for (Ablation a : {Ablation::none, Ablation::no_temporal, Ablation::no_spatial, Ablation::no_residual}) {
    Settings s = base;
    s.predictor.ablation = a;
    const TrainResult result = run_training(s, data, to_string(a));
    save_run(out / to_string(a), s, result);
    const EvalReport report = evaluate(test, result.weights, s.predictor, s.train.threads);
    csv << to_string(a) << ',' << report.mean_psnr() << ',' << report.mean_ssim() << ','
        << result.log.back().total << '\n';
  }
  write_text(out / "ablation.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Keep large tensor buffers in the heap between steps instead of remapping them.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, -1);
#endif
  CLI::App app{"Deep parametric 3D filter: training, inference, evaluation and benchmarks"};
  app.require_subcommand(1);
  Common common;

  auto* synth = app.add_subcommand("synth", "generate the synthetic train/test dataset");
  add_common(synth, common, "data");
  int test_sequences = 2;
  synth->add_option("--test-sequences", test_sequences, "sequences in the held-out split")->capture_default_str();

  auto* trn = app.add_subcommand("train", "train the predictor");
  add_common(trn, common, "run");
  std::string data_dir;
  trn->add_option("--data", data_dir, "dataset directory (default: generate from config)");

  auto* inf = app.add_subcommand("infer", "write Z, R and Y frames for a directory of LLN frames");
  add_common(inf, common, "infer");
  std::string checkpoint, filters, input;
  int only_frame = -1;
  inf->add_option("--checkpoint", checkpoint, "trained weights");
  inf->add_option("--filters", filters, "container with a fixed 'raw_filters' field (and optional 'residual')");
  inf->add_option("--input", input, "directory of LLN .ppm frames");
  inf->add_option("--frame", only_frame, "only this frame index");

  auto* ev = app.add_subcommand("eval", "PSNR / SSIM report on the held-out split");
  add_common(ev, common, "eval");
  bool baseline = false;
  ev->add_option("--checkpoint", checkpoint, "trained weights");
  ev->add_option("--data", data_dir, "dataset directory (default: generate the held-out split)");
  ev->add_flag("--baseline", baseline, "also report bicubic + inverse exposure");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference verification of every backward");
  add_common(gc, common, "");

  auto* bn = app.add_subcommand("bench", "naive / tiled / parallel filter application");
  add_common(bn, common, "bench.csv");
  int size = 256, repeats = 3;
  bn->add_option("--size", size, "side of the large instance")->capture_default_str();
  bn->add_option("--repeats", repeats, "timed repeats (best is reported)")->capture_default_str();

  auto* ab = app.add_subcommand("ablate", "train full and ablated variants, write ablation.csv");
  add_common(ab, common, "ablate");
  ab->add_option("--data", data_dir, "dataset directory (default: generate from config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*synth) return cmd_synth(common, test_sequences);
    if (*trn) return cmd_train(common, data_dir);
    if (*inf) return cmd_infer(common, checkpoint, filters, input, only_frame);
    if (*ev) return cmd_eval(common, checkpoint, data_dir, baseline);
    if (*gc) return cmd_gradcheck(common);
    if (*bn) return cmd_bench(common, size, repeats);
    if (*ab) return cmd_ablate(common, data_dir);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
