// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference verification of every analytic backward in
// 64-bit arithmetic.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dp3df {

struct GradcheckOptions {
  std::uint64_t seed = 7;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  int samples_per_item = 24;
  int end_to_end_samples = 120;
  int predictor_samples = 240;
};

struct GradcheckItem {
  std::string name;
  int checked = 0;
  /// Samples discarded because the perturbation crossed a kink.
  int skipped = 0;
  double max_rel = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckItem> items;
  double seconds = 0.0;

  int total_checked() const;
  bool passed() const;
  void print(std::ostream& out) const;
};

GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace dp3df
