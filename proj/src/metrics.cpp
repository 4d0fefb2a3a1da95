// SPDX-License-Identifier: Apache-2.0
#include "dp3df/metrics.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace dp3df {

double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  require(!a.empty(), "mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  const double m = mse(a, b);
  if (m == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

namespace {

constexpr int kWindow = 11;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> g{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double x = i - kWindow / 2;
    g[static_cast<std::size_t>(i)] = std::exp(-x * x / (2 * 1.5 * 1.5));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= sum;
  return g;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b, double peak) {
  require_same_shape(a, b, "ssim");
  require(a.rank() == 3, "ssim: frames must be [H,W,C]");
  const std::size_t h = a.dim(0), w = a.dim(1), c = a.dim(2);
  require(h >= kWindow && w >= kWindow, "ssim: frames must be at least 11x11");
  static const auto g = gaussian_window();
  const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
  const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
  double total = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int y = 0; y < kWindow; ++y)
          for (int x = 0; x < kWindow; ++x) {
            const double wt = g[static_cast<std::size_t>(y)] * g[static_cast<std::size_t>(x)];
            const double va = a(i + y, j + x, ch), vb = b(i + y, j + x, ch);
            ma += wt * va;
            mb += wt * vb;
            saa += wt * (va * va);
            sbb += wt * (vb * vb);
            sab += wt * (va * vb);
          }
        const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
        sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      }
    total += sum / static_cast<double>(oh * ow);
  }
  return total / static_cast<double>(c);
}

void EvalReport::add(std::string sequence, std::size_t frame, const Tensor& prediction, const Tensor& truth) {
  frames.push_back({std::move(sequence), frame, psnr(prediction, truth), ssim(prediction, truth)});
}

double EvalReport::mean_psnr() const {
  double s = 0.0;
  for (const auto& f : frames) s += f.psnr;
  return frames.empty() ? 0.0 : s / static_cast<double>(frames.size());
}

double EvalReport::mean_ssim() const {
  double s = 0.0;
  for (const auto& f : frames) s += f.ssim;
  return frames.empty() ? 0.0 : s / static_cast<double>(frames.size());
}

std::vector<EvalReport::SequenceMean> EvalReport::sequence_means() const {
  std::vector<SequenceMean> out;
  std::vector<std::size_t> counts;
  for (const auto& f : frames) {
    std::size_t k = 0;
    while (k < out.size() && out[k].sequence != f.sequence) ++k;
    if (k == out.size()) {
      out.push_back({f.sequence, 0.0, 0.0});
      counts.push_back(0);
    }
    out[k].psnr += f.psnr;
    out[k].ssim += f.ssim;
    ++counts[k];
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].psnr /= static_cast<double>(counts[k]);
    out[k].ssim /= static_cast<double>(counts[k]);
  }
  return out;
}

void EvalReport::write_csv(std::ostream& out) const {
  out << "# color space: RGB, SSIM averaged over channels\n";
  out << "sequence,frame,psnr,ssim\n";
  out << std::setprecision(10);
  for (const auto& f : frames) out << f.sequence << ',' << f.frame << ',' << f.psnr << ',' << f.ssim << '\n';
  out << "mean,," << mean_psnr() << ',' << mean_ssim() << '\n';
}

void EvalReport::print_table(std::ostream& out) const {
  out << (label.empty() ? "evaluation" : label) << " (RGB)\n";
  out << std::left << std::setw(16) << "sequence" << std::right << std::setw(10) << "PSNR" << std::setw(10) << "SSIM"
      << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& s : sequence_means())
    out << std::left << std::setw(16) << s.sequence << std::right << std::setw(10) << s.psnr << std::setw(10)
        << s.ssim << '\n';
  out << std::left << std::setw(16) << "mean" << std::right << std::setw(10) << mean_psnr() << std::setw(10)
      << mean_ssim() << '\n';
  out.unsetf(std::ios::floatfield);
}

}  // namespace dp3df
