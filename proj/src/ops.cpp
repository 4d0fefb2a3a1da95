// SPDX-License-Identifier: Apache-2.0
#include "dp3df/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Core>

namespace dp3df {
namespace {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;
template <class T>
using StridedMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <class T>
using ConstStridedMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

struct ConvDims {
  std::size_t n, c, h, w, o, kh, kw, ho, wo;
  int stride;
  std::ptrdiff_t ph, pw;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t pixels() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1; }
};

template <class T>
ConvDims conv_dims(const BasicTensor<T>& input, const BasicTensor<T>& weights, int stride) {
  require(input.rank() == 4, "conv2d: input must be [N,C,H,W], got " + shape_string(input.shape()));
  require(weights.rank() == 4, "conv2d: weights must be [O,C,kh,kw], got " + shape_string(weights.shape()));
  require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
  ConvDims d{};
  d.n = input.dim(0);
  d.c = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.o = weights.dim(0);
  d.kh = weights.dim(2);
  d.kw = weights.dim(3);
  require(weights.dim(1) == d.c, "conv2d: channel axis mismatch, input has " + std::to_string(d.c) +
                                     " channels, weights expect " + std::to_string(weights.dim(1)));
  require(d.kh % 2 == 1 && d.kw % 2 == 1, "conv2d: kernel extents must be odd");
  d.stride = stride;
  d.ph = static_cast<std::ptrdiff_t>((d.kh - 1) / 2);
  d.pw = static_cast<std::ptrdiff_t>((d.kw - 1) / 2);
  d.ho = (d.h + 2 * d.ph - d.kh) / stride + 1;
  d.wo = (d.w + 2 * d.pw - d.kw) / stride + 1;
  return d;
}

// Output columns ox with 0 <= ox*stride + kx - pw < w.
struct ValidRange {
  std::size_t lo, hi;
};

ValidRange valid_columns(const ConvDims& d, std::size_t kx) {
  const auto s = static_cast<std::ptrdiff_t>(d.stride);
  const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - d.pw;
  std::ptrdiff_t lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
  std::ptrdiff_t hi = (static_cast<std::ptrdiff_t>(d.w) - 1 - shift) / s + 1;
  lo = std::clamp<std::ptrdiff_t>(lo, 0, static_cast<std::ptrdiff_t>(d.wo));
  hi = std::clamp<std::ptrdiff_t>(hi, lo, static_cast<std::ptrdiff_t>(d.wo));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Output rows [oy0, oy1) of the column matrix:
// cols[(c*kh+ky)*kw+kx][(oy-oy0)*wo+ox] = x[c][iy][ix]
template <class T>
void im2col(const T* x, const ConvDims& d, Padding padding, std::size_t oy0, std::size_t oy1, T* cols) {
  const auto h = static_cast<std::ptrdiff_t>(d.h);
  const std::size_t tile = (oy1 - oy0) * d.wo;
  for (std::size_t kx = 0; kx < d.kw; ++kx) {
    const ValidRange v = valid_columns(d, kx);
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - d.pw;
    for (std::size_t c = 0; c < d.c; ++c) {
      const T* plane = x + c * d.h * d.w;
      for (std::size_t ky = 0; ky < d.kh; ++ky) {
        T* row = cols + ((c * d.kh + ky) * d.kw + kx) * tile;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * d.stride + static_cast<std::ptrdiff_t>(ky) - d.ph;
          T* out = row + (oy - oy0) * d.wo;
          if (iy < 0 || iy >= h) {
            if (padding == Padding::zero) {
              std::fill(out, out + d.wo, T{0});
              continue;
            }
            iy = std::clamp<std::ptrdiff_t>(iy, 0, h - 1);
          }
          const T* src = plane + iy * static_cast<std::ptrdiff_t>(d.w);
          const T left = padding == Padding::zero ? T{0} : src[0];
          const T right = padding == Padding::zero ? T{0} : src[d.w - 1];
          std::fill(out, out + v.lo, left);
          if (d.stride == 1) {
            std::copy(src + static_cast<std::ptrdiff_t>(v.lo) + shift, src + static_cast<std::ptrdiff_t>(v.hi) + shift,
                      out + v.lo);
          } else {
            for (std::size_t ox = v.lo; ox < v.hi; ++ox)
              out[ox] = src[static_cast<std::ptrdiff_t>(ox) * d.stride + shift];
          }
          std::fill(out + v.hi, out + d.wo, right);
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add the column tile back onto the image.
template <class T>
void col2im(const T* cols, const ConvDims& d, Padding padding, std::size_t oy0, std::size_t oy1, T* x) {
  const auto h = static_cast<std::ptrdiff_t>(d.h);
  const std::size_t tile = (oy1 - oy0) * d.wo;
  for (std::size_t c = 0; c < d.c; ++c) {
    T* plane = x + c * d.h * d.w;
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const ValidRange v = valid_columns(d, kx);
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - d.pw;
        const T* row = cols + ((c * d.kh + ky) * d.kw + kx) * tile;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * d.stride + static_cast<std::ptrdiff_t>(ky) - d.ph;
          if (iy < 0 || iy >= h) {
            if (padding == Padding::zero) continue;
            iy = std::clamp<std::ptrdiff_t>(iy, 0, h - 1);
          }
          const T* in = row + (oy - oy0) * d.wo;
          T* dst = plane + iy * static_cast<std::ptrdiff_t>(d.w);
          if (padding == Padding::replicate) {
            for (std::size_t ox = 0; ox < v.lo; ++ox) dst[0] += in[ox];
            for (std::size_t ox = v.hi; ox < d.wo; ++ox) dst[d.w - 1] += in[ox];
          }
          if (d.stride == 1) {
            T* base = dst + shift;
            for (std::size_t ox = v.lo; ox < v.hi; ++ox) base[ox] += in[ox];
          } else {
            for (std::size_t ox = v.lo; ox < v.hi; ++ox) dst[static_cast<std::ptrdiff_t>(ox) * d.stride + shift] += in[ox];
          }
        }
      }
    }
  }
}

// Output rows per column tile, sized so a tile stays cache resident.
std::size_t tile_rows(const ConvDims& d) {
  constexpr std::size_t kTileElems = 1 << 15;
  return std::clamp<std::size_t>(kTileElems / std::max<std::size_t>(1, d.patch() * d.wo), 1, d.ho);
}

template <class T>
void check_nchw(const BasicTensor<T>& t, const char* op) {
  require(t.rank() == 4, std::string(op) + ": expected [N,C,H,W], got " + shape_string(t.shape()));
}

}  // namespace

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                      int stride, Padding padding) {
  const ConvDims d = conv_dims(input, weights, stride);
  require(bias.empty() || (bias.rank() == 1 && bias.dim(0) == d.o),
          "conv2d: bias must have extent " + std::to_string(d.o));
  BasicTensor<T> out({d.n, d.o, d.ho, d.wo});
  ConstMatMap<T> wmat(weights.data(), d.o, d.patch());
  const auto pixels = static_cast<Eigen::Index>(d.pixels());
  if (d.pointwise()) {
    for (std::size_t n = 0; n < d.n; ++n) {
      ConstMatMap<T> xmat(input.data() + n * d.c * d.h * d.w, d.c, d.pixels());
      MatMap<T>(out.data() + n * d.o * d.pixels(), d.o, d.pixels()).noalias() = wmat * xmat;
    }
  } else {
    const std::size_t rows = tile_rows(d);
    AlignedVector<T> cols(d.patch() * rows * d.wo);
    for (std::size_t n = 0; n < d.n; ++n) {
      const T* x = input.data() + n * d.c * d.h * d.w;
      for (std::size_t oy0 = 0; oy0 < d.ho; oy0 += rows) {
        const std::size_t oy1 = std::min(d.ho, oy0 + rows), tile = (oy1 - oy0) * d.wo;
        im2col(x, d, padding, oy0, oy1, cols.data());
        ConstMatMap<T> cmat(cols.data(), d.patch(), tile);
        StridedMap<T> omat(out.data() + n * d.o * d.pixels() + oy0 * d.wo, d.o, tile, Eigen::OuterStride<>(pixels));
        omat.noalias() = wmat * cmat;
      }
    }
  }
  if (!bias.empty()) {
    for (std::size_t n = 0; n < d.n; ++n)
      for (std::size_t o = 0; o < d.o; ++o) {
        T* row = out.data() + (n * d.o + o) * d.pixels();
        for (std::size_t p = 0; p < d.pixels(); ++p) row[p] += bias[o];
      }
  }
  return out;
}

template <class T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights, bool has_bias,
                               const BasicTensor<T>& upstream, int stride, Padding padding, bool need_input_grad) {
  const ConvDims d = conv_dims(input, weights, stride);
  require(upstream.shape() == Shape({d.n, d.o, d.ho, d.wo}),
          "conv2d_backward: upstream shape " + shape_string(upstream.shape()) + " does not match output");
  Conv2dGrads<T> g;
  g.weights = BasicTensor<T>(weights.shape());
  if (has_bias) g.bias = BasicTensor<T>({d.o});
  if (need_input_grad) g.input = BasicTensor<T>(input.shape());

  ConstMatMap<T> wmat(weights.data(), d.o, d.patch());
  MatMap<T> dwmat(g.weights.data(), d.o, d.patch());
  const auto pixels = static_cast<Eigen::Index>(d.pixels());
  const std::size_t rows = d.pointwise() ? d.ho : tile_rows(d);
  AlignedVector<T> cols(d.pointwise() ? 0 : d.patch() * rows * d.wo);
  AlignedVector<T> dcols(need_input_grad && !d.pointwise() ? d.patch() * rows * d.wo : 0);
  for (std::size_t n = 0; n < d.n; ++n) {
    const T* x = input.data() + n * d.c * d.h * d.w;
    const T* gn = upstream.data() + n * d.o * d.pixels();
    if (has_bias) {
      for (std::size_t o = 0; o < d.o; ++o) {
        double s = 0.0;
        const T* gr = gn + o * d.pixels();
        for (std::size_t p = 0; p < d.pixels(); ++p) s += gr[p];
        g.bias[o] += static_cast<T>(s);
      }
    }
    T* dx = need_input_grad ? g.input.data() + n * d.c * d.h * d.w : nullptr;
    if (d.pointwise()) {
      ConstMatMap<T> xmat(x, d.c, d.pixels());
      ConstMatMap<T> gmat(gn, d.o, d.pixels());
      dwmat.noalias() += gmat * xmat.transpose();
      if (dx) MatMap<T>(dx, d.c, d.pixels()).noalias() = wmat.transpose() * gmat;
      continue;
    }
    for (std::size_t oy0 = 0; oy0 < d.ho; oy0 += rows) {
      const std::size_t oy1 = std::min(d.ho, oy0 + rows), tile = (oy1 - oy0) * d.wo;
      im2col(x, d, padding, oy0, oy1, cols.data());
      ConstMatMap<T> cmat(cols.data(), d.patch(), tile);
      ConstStridedMap<T> gmat(gn + oy0 * d.wo, d.o, tile, Eigen::OuterStride<>(pixels));
      dwmat.noalias() += gmat * cmat.transpose();
      if (dx) {
        MatMap<T> dcmat(dcols.data(), d.patch(), tile);
        dcmat.noalias() = wmat.transpose() * gmat;
        col2im(dcols.data(), d, padding, oy0, oy1, dx);
      }
    }
  }
  return g;
}

template <class T>
BasicTensor<T> pixel_shuffle(const BasicTensor<T>& input, int r) {
  check_nchw(input, "pixel_shuffle");
  require(r >= 1, "pixel_shuffle: r must be >= 1");
  const std::size_t rr = static_cast<std::size_t>(r) * r;
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  require(cin % rr == 0, "pixel_shuffle: channel count " + std::to_string(cin) + " not divisible by r^2 = " +
                             std::to_string(rr));
  const std::size_t c = cin / rr, ru = static_cast<std::size_t>(r);
  BasicTensor<T> out({n, c, h * ru, w * ru});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t a = 0; a < ru; ++a)
        for (std::size_t e = 0; e < ru; ++e) {
          const T* src = input.data() + ((b * cin + ch * rr + a * ru + e) * h) * w;
          for (std::size_t i = 0; i < h; ++i) {
            T* dst = out.data() + ((b * c + ch) * h * ru + i * ru + a) * w * ru + e;
            for (std::size_t j = 0; j < w; ++j) dst[j * ru] = src[i * w + j];
          }
        }
  return out;
}

template <class T>
BasicTensor<T> pixel_unshuffle(const BasicTensor<T>& input, int r) {
  check_nchw(input, "pixel_unshuffle");
  require(r >= 1, "pixel_unshuffle: r must be >= 1");
  const std::size_t ru = static_cast<std::size_t>(r), rr = ru * ru;
  const std::size_t n = input.dim(0), c = input.dim(1), hh = input.dim(2), ww = input.dim(3);
  require(hh % ru == 0 && ww % ru == 0, "pixel_unshuffle: spatial extents not divisible by r");
  const std::size_t h = hh / ru, w = ww / ru;
  BasicTensor<T> out({n, c * rr, h, w});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t a = 0; a < ru; ++a)
        for (std::size_t e = 0; e < ru; ++e) {
          T* dst = out.data() + ((b * c * rr + ch * rr + a * ru + e) * h) * w;
          for (std::size_t i = 0; i < h; ++i) {
            const T* src = input.data() + ((b * c + ch) * hh + i * ru + a) * ww + e;
            for (std::size_t j = 0; j < w; ++j) dst[i * w + j] = src[j * ru];
          }
        }
  return out;
}

namespace {

struct AxisSplit {
  std::size_t outer, extent, inner;
};

template <class T>
AxisSplit split_axis(const BasicTensor<T>& t, std::size_t axis, const char* op) {
  require(axis < t.rank(), std::string(op) + ": axis " + std::to_string(axis) + " invalid for " +
                               shape_string(t.shape()));
  AxisSplit s{1, t.dim(axis), 1};
  for (std::size_t a = 0; a < axis; ++a) s.outer *= t.dim(a);
  for (std::size_t a = axis + 1; a < t.rank(); ++a) s.inner *= t.dim(a);
  return s;
}

}  // namespace

template <class T>
BasicTensor<T> softmax_axis(const BasicTensor<T>& input, std::size_t axis) {
  const AxisSplit s = split_axis(input, axis, "softmax_axis");
  BasicTensor<T> out(input.shape());
  std::vector<double> e(s.extent);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double mx = -INFINITY;
      for (std::size_t k = 0; k < s.extent; ++k) mx = std::max(mx, static_cast<double>(input[base + k * s.inner]));
      double sum = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        e[k] = std::exp(static_cast<double>(input[base + k * s.inner]) - mx);
        sum += e[k];
      }
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] = static_cast<T>(e[k] / sum);
    }
  return out;
}

template <class T>
BasicTensor<T> softmax_axis_backward(const BasicTensor<T>& output, const BasicTensor<T>& upstream, std::size_t axis) {
  require_same_shape(output, upstream, "softmax_axis_backward");
  const AxisSplit s = split_axis(output, axis, "softmax_axis_backward");
  BasicTensor<T> dx(output.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double dot = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k)
        dot += static_cast<double>(output[base + k * s.inner]) * upstream[base + k * s.inner];
      for (std::size_t k = 0; k < s.extent; ++k) {
        const std::size_t idx = base + k * s.inner;
        dx[idx] = static_cast<T>(output[idx] * (static_cast<double>(upstream[idx]) - dot));
      }
    }
  return dx;
}

template <class T>
BasicTensor<T> instance_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                             double eps, InstanceNormCache<T>* cache) {
  check_nchw(input, "instance_norm");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  require(hw >= 2, "instance_norm: plane needs at least 2 elements");
  require(gamma.empty() == beta.empty(), "instance_norm: gamma and beta must both be given or both empty");
  require(gamma.empty() || (gamma.size() == c && beta.size() == c),
          "instance_norm: affine parameters must have extent " + std::to_string(c));
  BasicTensor<T> out(input.shape());
  BasicTensor<T> normalized;
  if (cache) {
    normalized = BasicTensor<T>(input.shape());
    cache->inv_std.assign(n * c, 0.0);
  }
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* x = input.data() + p * hw;
    double mean = 0.0;
    for (std::size_t i = 0; i < hw; ++i) mean += x[i];
    mean /= static_cast<double>(hw);
    double var = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      const double dv = x[i] - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(hw);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    const std::size_t ch = p % c;
    const double g = gamma.empty() ? 1.0 : static_cast<double>(gamma[ch]);
    const double b = beta.empty() ? 0.0 : static_cast<double>(beta[ch]);
    T* y = out.data() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      const double xn = (x[i] - mean) * inv_std;
      if (cache) normalized[p * hw + i] = static_cast<T>(xn);
      y[i] = static_cast<T>(xn * g + b);
    }
    if (cache) cache->inv_std[p] = inv_std;
  }
  if (cache) cache->normalized = std::move(normalized);
  return out;
}

template <class T>
InstanceNormGrads<T> instance_norm_backward(const InstanceNormCache<T>& cache, const BasicTensor<T>& gamma,
                                            const BasicTensor<T>& upstream) {
  require_same_shape(cache.normalized, upstream, "instance_norm_backward");
  const std::size_t n = upstream.dim(0), c = upstream.dim(1), hw = upstream.dim(2) * upstream.dim(3);
  InstanceNormGrads<T> g;
  g.input = BasicTensor<T>(upstream.shape());
  std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
  for (std::size_t p = 0; p < n * c; ++p) {
    const std::size_t ch = p % c;
    const double gm = gamma.empty() ? 1.0 : static_cast<double>(gamma[ch]);
    const T* xn = cache.normalized.data() + p * hw;
    const T* dy = upstream.data() + p * hw;
    double sum_dy = 0.0, sum_dy_xn = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      sum_dy += dy[i];
      sum_dy_xn += static_cast<double>(dy[i]) * xn[i];
    }
    dgamma[ch] += sum_dy_xn;
    dbeta[ch] += sum_dy;
    const double m = static_cast<double>(hw);
    const double scale = gm * cache.inv_std[p];
    T* dx = g.input.data() + p * hw;
    for (std::size_t i = 0; i < hw; ++i)
      dx[i] = static_cast<T>(scale * (dy[i] - sum_dy / m - xn[i] * sum_dy_xn / m));
  }
  if (!gamma.empty()) {
    g.gamma = BasicTensor<T>({c});
    g.beta = BasicTensor<T>({c});
    for (std::size_t ch = 0; ch < c; ++ch) {
      g.gamma[ch] = static_cast<T>(dgamma[ch]);
      g.beta[ch] = static_cast<T>(dbeta[ch]);
    }
  }
  return g;
}

template <class T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& input, double slope) {
  BasicTensor<T> out(input.shape());
  const T s = static_cast<T>(slope);
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] >= T{0} ? input[i] : input[i] * s;
  return out;
}

template <class T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& upstream, double slope) {
  require_same_shape(input, upstream, "leaky_relu_backward");
  BasicTensor<T> out(input.shape());
  const T s = static_cast<T>(slope);
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] >= T{0} ? upstream[i] : upstream[i] * s;
  return out;
}

template <class T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  check_nchw(a, "concat_channels");
  check_nchw(b, "concat_channels");
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_channels: batch/spatial mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  BasicTensor<T> out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
    std::copy_n(b.data() + i * cb * hw, cb * hw, out.data() + (i * (ca + cb) + ca) * hw);
  }
  return out;
}

template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& ab, std::size_t channels_a) {
  check_nchw(ab, "split_channels");
  const std::size_t n = ab.dim(0), c = ab.dim(1), hw = ab.dim(2) * ab.dim(3);
  require(channels_a <= c, "split_channels: split point beyond channel count");
  const std::size_t cb = c - channels_a;
  BasicTensor<T> a({n, channels_a, ab.dim(2), ab.dim(3)});
  BasicTensor<T> b({n, cb, ab.dim(2), ab.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(ab.data() + i * c * hw, channels_a * hw, a.data() + i * channels_a * hw);
    std::copy_n(ab.data() + (i * c + channels_a) * hw, cb * hw, b.data() + i * cb * hw);
  }
  return {std::move(a), std::move(b)};
}

#define DP3DF_INSTANTIATE_OPS(T)                                                                                   \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int,        \
                                 Padding);                                                                         \
  template Conv2dGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, bool,                      \
                                          const BasicTensor<T>&, int, Padding, bool);                              \
  template BasicTensor<T> pixel_shuffle(const BasicTensor<T>&, int);                                               \
  template BasicTensor<T> pixel_unshuffle(const BasicTensor<T>&, int);                                             \
  template BasicTensor<T> softmax_axis(const BasicTensor<T>&, std::size_t);                                        \
  template BasicTensor<T> softmax_axis_backward(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t);        \
  template BasicTensor<T> instance_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,       \
                                        double, InstanceNormCache<T>*);                                            \
  template InstanceNormGrads<T> instance_norm_backward(const InstanceNormCache<T>&, const BasicTensor<T>&,         \
                                                       const BasicTensor<T>&);                                     \
  template BasicTensor<T> leaky_relu(const BasicTensor<T>&, double);                                               \
  template BasicTensor<T> leaky_relu_backward(const BasicTensor<T>&, const BasicTensor<T>&, double);               \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>&, std::size_t);

DP3DF_INSTANTIATE_OPS(float)
DP3DF_INSTANTIATE_OPS(double)

}  // namespace dp3df
