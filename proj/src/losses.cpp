// SPDX-License-Identifier: Apache-2.0
#include "dp3df/losses.hpp"

#include <algorithm>
#include <cmath>

#include "dp3df/filter.hpp"

namespace dp3df {

void LossWeights::validate() const {
  require(recon >= 0 && smooth >= 0 && residual >= 0, "loss weights must be nonnegative");
  require(recon > 0 || smooth > 0 || residual > 0, "at least one loss weight must be positive");
  require(eps > 0, "smoothness eps must be positive");
}

template <class T>
LossValue<T> recon_loss(const BasicTensor<T>& pred, const BasicTensor<T>& gt) {
  require_same_shape(pred, gt, "recon_loss");
  require(!pred.empty(), "recon_loss: empty input");
  LossValue<T> out;
  out.grad = BasicTensor<T>(pred.shape());
  const double n = static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    const double d = std::clamp(p, 0.0, 1.0) - std::clamp(static_cast<double>(gt[i]), 0.0, 1.0);
    sum += d * d;
    out.grad[i] = (p >= 0.0 && p <= 1.0) ? static_cast<T>(2.0 * d / n) : T{0};
  }
  out.value = sum / n;
  return out;
}

template <class T>
SmoothnessWeights<T> smoothness_weights(const BasicTensor<T>& center_frame, double eps) {
  require(center_frame.rank() == 3, "smoothness_weights: frame must be [H,W,C], got " +
                                        shape_string(center_frame.shape()));
  require(eps > 0, "smoothness_weights: eps must be positive");
  const std::size_t h = center_frame.dim(0), w = center_frame.dim(1), c = center_frame.dim(2);
  auto logv = [&](std::size_t i, std::size_t j, std::size_t ch) {
    return std::log(std::max(static_cast<double>(center_frame(i, j, ch)), 1e-4));
  };
  SmoothnessWeights<T> sw{BasicTensor<T>(center_frame.shape()), BasicTensor<T>(center_frame.shape())};
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double here = logv(i, j, ch);
        const double dx = j + 1 < w ? logv(i, j + 1, ch) - here : 0.0;
        const double dy = i + 1 < h ? logv(i + 1, j, ch) - here : 0.0;
        sw.v(i, j, ch) = static_cast<T>(1.0 / (std::pow(std::abs(dx), 1.2) + eps));
        sw.u(i, j, ch) = static_cast<T>(1.0 / (std::pow(std::abs(dy), 1.2) + eps));
      }
  return sw;
}

template <class T>
LossValue<T> smoothness_loss(const BasicTensor<T>& maps, const SmoothnessWeights<T>& weights, Reduction reduction) {
  require(maps.rank() == 3, "smoothness_loss: maps must be [H,W,M], got " + shape_string(maps.shape()));
  require_same_shape(weights.v, weights.u, "smoothness_loss weights");
  require(weights.v.rank() == 3 && weights.v.dim(0) == maps.dim(0) && weights.v.dim(1) == maps.dim(1),
          "smoothness_loss: weights " + shape_string(weights.v.shape()) + " do not match maps " +
              shape_string(maps.shape()));
  const std::size_t h = maps.dim(0), w = maps.dim(1), m = maps.dim(2), c = weights.v.dim(2);
  const double scale = reduction == Reduction::mean ? 1.0 / static_cast<double>(h * w * m) : 1.0;
  LossValue<T> out;
  out.grad = BasicTensor<T>(maps.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double v = 0.0, u = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        v += weights.v(i, j, ch);
        u += weights.u(i, j, ch);
      }
      v /= static_cast<double>(c);
      u /= static_cast<double>(c);
      for (std::size_t k = 0; k < m; ++k) {
        const double here = maps(i, j, k);
        if (j + 1 < w) {
          const double dx = static_cast<double>(maps(i, j + 1, k)) - here;
          sum += v * dx * dx;
          const double g = 2.0 * v * dx * scale;
          out.grad(i, j + 1, k) += static_cast<T>(g);
          out.grad(i, j, k) -= static_cast<T>(g);
        }
        if (i + 1 < h) {
          const double dy = static_cast<double>(maps(i + 1, j, k)) - here;
          sum += u * dy * dy;
          const double g = 2.0 * u * dy * scale;
          out.grad(i + 1, j, k) += static_cast<T>(g);
          out.grad(i, j, k) -= static_cast<T>(g);
        }
      }
    }
  out.value = sum * scale;
  return out;
}

template <class T>
TotalLoss<T> total_loss(const BasicTensor<T>& z, const BasicTensor<T>& residual, const BasicTensor<T>& gt,
                        const BasicTensor<T>& maps, const SmoothnessWeights<T>& smooth_weights,
                        const LossWeights& weights, Reduction smooth_reduction) {
  weights.validate();
  require_same_shape(z, gt, "total_loss (Z vs ground truth)");
  require_same_shape(z, residual, "total_loss (Z vs residual)");
  TotalLoss<T> out;

  LossValue<T> lr = recon_loss(z, gt);
  const BasicTensor<T> y = combine_residual(z, residual);
  LossValue<T> le = recon_loss(y, gt);
  LossValue<T> ls = smoothness_loss(maps, smooth_weights, smooth_reduction);
  out.recon = lr.value;
  out.residual = le.value;
  out.smooth = ls.value;
  out.total = weights.recon * lr.value + weights.smooth * ls.value + weights.residual * le.value;

  BasicTensor<T> gy = le.grad;
  gy *= static_cast<T>(weights.residual);
  out.grad_residual = combine_residual_backward(z, residual, gy);
  out.grad_z = lr.grad;
  out.grad_z *= static_cast<T>(weights.recon);
  out.grad_z += out.grad_residual;
  out.grad_illumination = std::move(ls.grad);
  out.grad_illumination *= static_cast<T>(weights.smooth);
  return out;
}

#define DP3DF_INSTANTIATE_LOSSES(T)                                                                          \
  template LossValue<T> recon_loss(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template SmoothnessWeights<T> smoothness_weights(const BasicTensor<T>&, double);                           \
  template LossValue<T> smoothness_loss(const BasicTensor<T>&, const SmoothnessWeights<T>&, Reduction);      \
  template TotalLoss<T> total_loss(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,      \
                                   const BasicTensor<T>&, const SmoothnessWeights<T>&, const LossWeights&,   \
                                   Reduction);

DP3DF_INSTANTIATE_LOSSES(float)
DP3DF_INSTANTIATE_LOSSES(double)

}  // namespace dp3df
