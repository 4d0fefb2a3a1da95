// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dp3df/filter.hpp"

namespace dp3df {

struct BenchInstance {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t colors = 3;
  FilterGeometry geom{};
};

struct BenchResult {
  std::string variant;  // naive | tiled | parallel
  BenchInstance instance;
  int threads = 1;
  double seconds = 0.0;     // best of the repeats; NaN when excluded
  double throughput = 0.0;  // output pixels per second
  double max_diff = 0.0;    // max |delta| against the naive output
  bool passed = false;      // equality gate (max_diff <= tolerance)
  double normalize_seconds = 0.0;
};

constexpr double kBenchTolerance = 1e-6;

/// Runs `run` once against `reference`; only a passing variant is timed
/// (best of `repeats`). Throughput counts reference pixels.
BenchResult gate_and_time(const std::string& variant, const std::function<Tensor()>& run, const Tensor& reference,
                          int repeats);

/// Times every apply variant on a random instance. A variant must match the
/// naive output to kBenchTolerance before it is timed; failures are flagged
/// and keep NaN timings. Filter normalization is timed separately.
std::vector<BenchResult> run_bench(const std::vector<BenchInstance>& grid, int threads, int repeats,
                                   std::uint64_t seed);

void write_bench_csv(std::ostream& out, const std::vector<BenchResult>& results);

}  // namespace dp3df
