// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dp3df/tensor.hpp"

namespace dp3df {

constexpr double kPsnrCap = 100.0;

double mse(const Tensor& a, const Tensor& b);

/// 10 log10(peak^2 / MSE), capped at 100 dB (identical frames).
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

/// Mean SSIM over frames [H,W,C] (H, W >= 11): 11x11 Gaussian window with
/// sigma 1.5, K1 = 0.01, K2 = 0.03, valid positions only, per-channel maps
/// averaged over RGB.
double ssim(const Tensor& a, const Tensor& b, double peak = 1.0);

struct FrameScore {
  std::string sequence;
  std::size_t frame = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::string label;
  std::vector<FrameScore> frames;

  void add(std::string sequence, std::size_t frame, const Tensor& prediction, const Tensor& truth);
  double mean_psnr() const;
  double mean_ssim() const;
  /// (sequence, mean psnr, mean ssim) in first-seen order.
  struct SequenceMean {
    std::string sequence;
    double psnr, ssim;
  };
  std::vector<SequenceMean> sequence_means() const;

  void write_csv(std::ostream& out) const;
  void print_table(std::ostream& out) const;
};

}  // namespace dp3df
