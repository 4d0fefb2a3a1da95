// SPDX-License-Identifier: Apache-2.0
//
// Encoder-decoder backbone shared by two heads:
//   filter head   3 convs -> raw filter field [H, W, r*r*(K+1)]
//   residual head 1 conv + pixel shuffle -> residual frame [rH, rW, C]
// The T input frames are folded into channels (channel t*C + c).
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dp3df/filter.hpp"
#include "dp3df/tensor.hpp"

namespace dp3df {

enum class Ablation { none, no_temporal, no_spatial, no_residual };

std::string to_string(Ablation ablation);
Ablation parse_ablation(std::string_view text);

struct PredictorConfig {
  int colors = 3;
  int levels = 3;
  std::vector<int> channels{16, 32, 64};
  int blocks_per_level = 2;
  FilterGeometry geom{};
  Ablation ablation = Ablation::none;
  bool unit_illumination = false;
  double leaky_slope = 0.2;
  double norm_eps = 1e-5;
  /// Kaiming gain multiplier for the two output convolutions.
  double output_gain = 0.1;
  /// Illumination multiplier at initialization (sets the logit bias; 2 = zero bias).
  double illumination_init = 16.0;

  /// Geometry after the ablation edits (no_temporal: kt=1, no_spatial: kh=kw=1).
  FilterGeometry filter_geometry() const;
  bool residual_enabled() const { return ablation != Ablation::no_residual; }
  int input_channels() const { return geom.frames * colors; }
  /// Spatial extents must be divisible by this.
  int spatial_multiple() const { return 1 << levels; }
  void validate() const;
};

template <class T>
using ParamMap = std::map<std::string, BasicTensor<T>>;

/// Kaiming-normal conv weights (fan-in, leaky gain), zero biases, unit/zero
/// norm affine. Deterministic in `seed`.
template <class T>
ParamMap<T> init_weights(const PredictorConfig& config, std::uint64_t seed);

/// Kaiming-normal standard deviation for a given fan-in.
double kaiming_std(std::size_t fan_in, double leaky_slope);

template <class T>
struct PredictorOutput {
  BasicTensor<T> raw_filters;  // [H, W, r*r*(K+1)]
  BasicTensor<T> residual;     // [rH, rW, C]; empty when the residual head is disabled
};

/// Activations kept by forward() for backward().
template <class T>
class PredictorTape {
 public:
  PredictorTape();
  ~PredictorTape();
  PredictorTape(PredictorTape&&) noexcept;
  PredictorTape& operator=(PredictorTape&&) noexcept;

  /// Hash of every rectifier / clamp branch taken; changes when a
  /// perturbation crosses a kink.
  std::uint64_t kink_signature() const;

  struct Impl;
  std::unique_ptr<Impl> impl;
};

/// clip: [T, H, W, C].
template <class T>
PredictorOutput<T> forward(const BasicTensor<T>& clip, const ParamMap<T>& weights, const PredictorConfig& config,
                           PredictorTape<T>* tape = nullptr);

/// Weight gradients for the upstream gradients of both heads. Parameters
/// whose names start with any of `frozen` get exactly zero gradient.
template <class T>
ParamMap<T> backward(const PredictorTape<T>& tape, const ParamMap<T>& weights, const PredictorConfig& config,
                     const BasicTensor<T>& grad_raw_filters, const BasicTensor<T>& grad_residual,
                     std::span<const std::string> frozen = {});

template <class T>
ParamMap<T> zeros_like(const ParamMap<T>& params);

template <class U, class T>
ParamMap<U> cast_params(const ParamMap<T>& params) {
  ParamMap<U> out;
  for (const auto& [name, t] : params) out.emplace(name, t.template cast<U>());
  return out;
}

/// [T,H,W,C] -> [1, T*C, H, W]
template <class T>
BasicTensor<T> fold_clip(const BasicTensor<T>& clip);

/// [1,C,H,W] <-> [H,W,C]
template <class T>
BasicTensor<T> nchw_to_hwc(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> hwc_to_nchw(const BasicTensor<T>& x);

}  // namespace dp3df
