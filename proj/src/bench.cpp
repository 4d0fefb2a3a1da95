// SPDX-License-Identifier: Apache-2.0
#include "dp3df/bench.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

namespace dp3df {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

BenchResult gate_and_time(const std::string& variant, const std::function<Tensor()>& run, const Tensor& reference,
                          int repeats) {
  require(repeats >= 1, "bench: repeats must be >= 1");
  BenchResult res;
  res.variant = variant;
  const Tensor first = run();
  res.max_diff = first.shape() == reference.shape() ? max_abs_diff(first, reference)
                                                    : std::numeric_limits<double>::infinity();
  res.passed = res.max_diff <= kBenchTolerance;
  if (!res.passed) {
    res.seconds = res.throughput = std::numeric_limits<double>::quiet_NaN();
    return res;
  }
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < repeats; ++k) {
    const auto start = std::chrono::steady_clock::now();
    const Tensor out = run();
    best = std::min(best, seconds_since(start));
  }
  res.seconds = best;
  res.throughput = static_cast<double>(reference.dim(0) * reference.dim(1)) / best;
  return res;
}

std::vector<BenchResult> run_bench(const std::vector<BenchInstance>& grid, int threads, int repeats,
                                   std::uint64_t seed) {
  require(repeats >= 1, "bench: repeats must be >= 1");
  std::vector<BenchResult> results;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> pixel(0.0f, 1.0f);
  std::normal_distribution<float> logit(0.0f, 1.0f);
  for (const BenchInstance& inst : grid) {
    inst.geom.validate();
    Tensor clip({static_cast<std::size_t>(inst.geom.frames), inst.height, inst.width, inst.colors});
    for (float& v : clip.values()) v = pixel(rng);
    Tensor raw({inst.height, inst.width, inst.geom.raw_channels()});
    for (float& v : raw.values()) v = logit(rng);

    double normalize_best = std::numeric_limits<double>::infinity();
    FilterField<float> field;
    for (int k = 0; k < repeats; ++k) {
      const auto start = std::chrono::steady_clock::now();
      field = normalize_filters(raw, inst.geom);
      normalize_best = std::min(normalize_best, seconds_since(start));
    }
    const Tensor reference = apply_dp3df(clip, field, ApplyVariant::naive);

    const std::pair<const char*, ApplyVariant> variants[] = {
        {"naive", ApplyVariant::naive}, {"tiled", ApplyVariant::tiled}, {"parallel", ApplyVariant::parallel}};
    for (const auto& [name, variant] : variants) {
      BenchResult res = gate_and_time(
          name, [&, v = variant] { return apply_dp3df(clip, field, v, threads); }, reference, repeats);
      res.instance = inst;
      res.threads = variant == ApplyVariant::parallel ? threads : 1;
      res.normalize_seconds = normalize_best;
      results.push_back(res);
    }
  }
  return results;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchResult>& results) {
  out << "variant,height,width,frames,r,kh,kw,kt,threads,seconds,pixels_per_second,max_abs_diff,passed,"
         "normalize_seconds\n";
  out << std::setprecision(6);
  for (const auto& r : results) {
    const auto& g = r.instance.geom;
    out << r.variant << ',' << r.instance.height << ',' << r.instance.width << ',' << g.frames << ',' << g.r << ','
        << g.kh << ',' << g.kw << ',' << g.kt << ',' << r.threads << ',';
    if (r.passed)
      out << r.seconds << ',' << r.throughput;
    else
      out << "excluded,excluded";
    out << ',' << r.max_diff << ',' << (r.passed ? "yes" : "FLAGGED") << ',' << r.normalize_seconds << '\n';
  }
}

}  // namespace dp3df
