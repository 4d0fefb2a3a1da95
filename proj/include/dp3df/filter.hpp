// SPDX-License-Identifier: Apache-2.0
//
// Deep parametric 3D filter: per low-resolution pixel, r*r kernels that each
// smooth a kh x kw x kt spatiotemporal neighbourhood (softmax-normalized taps)
// and scale the result by an illumination multiplier (reciprocal sigmoid).
// Kernel b = r1*r + r2 writes output pixel (i*r + r1, j*r + r2).
//
// Layouts:
//   clip         [T, H, W, C]            center frame index (T-1)/2
//   raw filters  [H, W, r*r*(K+1)]       first r*r*K entries taps, last r*r illumination
//   taps         [H, W, r*r, K]          K = kh*kw*kt, tap q = (m*kw + n)*kt + o (offsets shifted)
//   illumination [H, W, r*r]
//   output       [r*H, r*W, C]
#pragma once

#include <cstddef>

#include "dp3df/tensor.hpp"

namespace dp3df {

struct FilterGeometry {
  int r = 4;
  int kh = 3;
  int kw = 3;
  int kt = 3;
  int frames = 3;  // T = 2N + 1

  int sh() const { return (kh - 1) / 2; }
  int sw() const { return (kw - 1) / 2; }
  int st() const { return (kt - 1) / 2; }
  int center_frame() const { return (frames - 1) / 2; }
  std::size_t kernels() const { return static_cast<std::size_t>(r) * r; }
  std::size_t taps() const { return static_cast<std::size_t>(kh) * kw * kt; }
  /// Channel extent of the raw filter tensor: r*r*(K+1).
  std::size_t raw_channels() const { return kernels() * (taps() + 1); }

  void validate() const;
  friend bool operator==(const FilterGeometry&, const FilterGeometry&) = default;
};

template <class T>
struct FilterField {
  FilterGeometry geom;
  BasicTensor<T> raw;           // [H, W, r*r*(K+1)]
  BasicTensor<T> taps;          // [H, W, r*r, K]
  BasicTensor<T> illumination;  // [H, W, r*r]
  bool unit_illumination = false;

  std::size_t height() const { return taps.dim(0); }
  std::size_t width() const { return taps.dim(1); }
};

/// Softmax over each kernel's taps; illumination = 1 / sigmoid(x) = 1 + exp(-x).
/// With `unit_illumination` the illumination entries are ignored and fixed at 1.
template <class T>
FilterField<T> normalize_filters(const BasicTensor<T>& raw, const FilterGeometry& geom,
                                 bool unit_illumination = false);

/// Chains gradients w.r.t. taps and illumination back onto the raw tensor.
template <class T>
BasicTensor<T> normalize_filters_backward(const FilterField<T>& field, const BasicTensor<T>& grad_taps,
                                          const BasicTensor<T>& grad_illumination);

enum class ApplyVariant { naive, tiled, parallel };

/// Produces the intermediate high-resolution frame. Spatial taps outside the
/// frame replicate the border; temporal taps clamp to the first/last frame.
/// All variants accumulate each output in double in the same tap order.
template <class T>
BasicTensor<T> apply_dp3df(const BasicTensor<T>& clip, const FilterField<T>& field,
                           ApplyVariant variant = ApplyVariant::tiled, int threads = 1);

template <class T>
struct FieldGrads {
  BasicTensor<T> taps;          // [H, W, r*r, K]
  BasicTensor<T> illumination;  // [H, W, r*r]
  BasicTensor<T> clip;          // [T, H, W, C], empty unless requested
};

/// Gradients w.r.t. the normalized field (and optionally the clip).
template <class T>
FieldGrads<T> apply_dp3df_field_backward(const BasicTensor<T>& clip, const FilterField<T>& field,
                                         const BasicTensor<T>& upstream, bool need_clip_grad = false,
                                         int threads = 1);

template <class T>
struct ApplyGrads {
  BasicTensor<T> clip;  // [T, H, W, C]
  BasicTensor<T> raw;   // [H, W, r*r*(K+1)]
};

/// Full backward through application and normalization.
template <class T>
ApplyGrads<T> apply_dp3df_backward(const BasicTensor<T>& clip, const FilterField<T>& field,
                                   const BasicTensor<T>& upstream);

/// Y = clamp(Z + R, 0, 1).
template <class T>
BasicTensor<T> combine_residual(const BasicTensor<T>& z, const BasicTensor<T>& residual);

/// Gradient passes where 0 <= Z + R <= 1 and is zero where the clamp is active.
template <class T>
BasicTensor<T> combine_residual_backward(const BasicTensor<T>& z, const BasicTensor<T>& residual,
                                         const BasicTensor<T>& upstream);

enum class SpecialCaseMode { sr, denoise, illum };

/// Geometry and illumination constraint under which the filter reduces to a
/// classical single-task dynamic filter.
struct SpecialCase {
  FilterGeometry geom;
  bool unit_illumination = false;
};

SpecialCase reduce_to_special_case(const FilterGeometry& geom, SpecialCaseMode mode);

}  // namespace dp3df
