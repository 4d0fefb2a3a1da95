// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dp3df/tensor.hpp"

namespace dp3df {

struct LossWeights {
  double recon = 1.0;     // on the intermediate frame Z
  double smooth = 0.1;    // on the illumination maps
  double residual = 1.0;  // on the final frame Y
  double eps = 1e-4;

  void validate() const;
};

template <class T>
struct LossValue {
  double value = 0.0;
  BasicTensor<T> grad;
};

/// Mean squared error after clamping both sides to [0, 1]. The gradient is
/// zero where the prediction lies outside [0, 1].
template <class T>
LossValue<T> recon_loss(const BasicTensor<T>& pred, const BasicTensor<T>& gt);

/// Edge-aware weights from the log of the center input frame [H,W,C]:
/// v = 1/(|dx log X|^1.2 + eps), u = 1/(|dy log X|^1.2 + eps), forward
/// differences with a zero difference on the last column / row.
template <class T>
struct SmoothnessWeights {
  BasicTensor<T> v;  // horizontal, [H,W,C]
  BasicTensor<T> u;  // vertical,   [H,W,C]
};

template <class T>
SmoothnessWeights<T> smoothness_weights(const BasicTensor<T>& center_frame, double eps = 1e-4);

enum class Reduction { sum, mean };

/// sum over maps m and pixels p of v_p (dx L^m)^2 + u_p (dy L^m)^2 on
/// illumination maps [H,W,M], with v,u averaged over color channels.
/// Reduction::mean divides by H*W*M.
template <class T>
LossValue<T> smoothness_loss(const BasicTensor<T>& illumination_maps, const SmoothnessWeights<T>& weights,
                             Reduction reduction = Reduction::sum);

template <class T>
struct TotalLoss {
  double total = 0.0;
  double recon = 0.0;
  double smooth = 0.0;
  double residual = 0.0;
  BasicTensor<T> grad_z;             // [rH,rW,C]
  BasicTensor<T> grad_residual;      // [rH,rW,C]
  BasicTensor<T> grad_illumination;  // [H,W,M]
};

/// lambda1 * L_r(Z) + lambda2 * L_s(L maps) + lambda3 * L_e(Y), Y = clamp(Z + R, 0, 1).
/// The smoothness term enters with the given reduction.
template <class T>
TotalLoss<T> total_loss(const BasicTensor<T>& z, const BasicTensor<T>& residual, const BasicTensor<T>& gt,
                        const BasicTensor<T>& illumination_maps, const SmoothnessWeights<T>& smooth_weights,
                        const LossWeights& weights, Reduction smooth_reduction = Reduction::mean);

}  // namespace dp3df
