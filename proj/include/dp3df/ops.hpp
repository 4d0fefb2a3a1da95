// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives used by the predictor backbone and the filter
// normalization. Every forward has a matching analytic backward; the
// backward functions take the forward inputs (or outputs, where cheaper)
// plus the upstream gradient.
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "dp3df/tensor.hpp"

namespace dp3df {

enum class Padding { zero, replicate };

// ---------------------------------------------------------------------------
// conv2d: input [N,C,H,W], weights [O,C,kh,kw], bias [O] (or empty),
// "same" padding p = (k-1)/2 per axis, stride 1 or 2.

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                      int stride, Padding padding);

template <class T>
struct Conv2dGrads {
  BasicTensor<T> input;    // empty when not requested
  BasicTensor<T> weights;
  BasicTensor<T> bias;     // empty when the forward had no bias
};

template <class T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights, bool has_bias,
                               const BasicTensor<T>& upstream, int stride, Padding padding,
                               bool need_input_grad = true);

// ---------------------------------------------------------------------------
// pixel_shuffle: [N, r*r*C, H, W] -> [N, C, r*H, r*W] with
// out(n, c, i*r+a, j*r+b) = in(n, c*r*r + a*r + b, i, j).
// pixel_unshuffle is its exact inverse and also its backward.

template <class T>
BasicTensor<T> pixel_shuffle(const BasicTensor<T>& input, int r);

template <class T>
BasicTensor<T> pixel_unshuffle(const BasicTensor<T>& input, int r);

// ---------------------------------------------------------------------------
// Numerically stable softmax along one axis.

template <class T>
BasicTensor<T> softmax_axis(const BasicTensor<T>& input, std::size_t axis);

/// Backward from the softmax output y: dx = y * (g - sum(y*g)).
template <class T>
BasicTensor<T> softmax_axis_backward(const BasicTensor<T>& output, const BasicTensor<T>& upstream, std::size_t axis);

// ---------------------------------------------------------------------------
// Instance normalization over each (n, c) plane of [N,C,H,W], biased
// variance, optional affine (gamma/beta of extent C; pass empty tensors
// to disable).

template <class T>
struct InstanceNormCache {
  BasicTensor<T> normalized;      // (x - mean) * inv_std, before affine
  std::vector<double> inv_std;    // one per plane
};

template <class T>
BasicTensor<T> instance_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                             double eps, InstanceNormCache<T>* cache = nullptr);

template <class T>
struct InstanceNormGrads {
  BasicTensor<T> input;
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
};

template <class T>
InstanceNormGrads<T> instance_norm_backward(const InstanceNormCache<T>& cache, const BasicTensor<T>& gamma,
                                            const BasicTensor<T>& upstream);

// ---------------------------------------------------------------------------
// Leaky rectifier and channel concatenation.

template <class T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& input, double slope);

/// Uses the forward input to pick the slope; x == 0 takes the positive branch.
template <class T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& upstream, double slope);

template <class T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Splits [N, Ca+Cb, H, W] back into its two channel groups.
template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& ab, std::size_t channels_a);

}  // namespace dp3df
