// SPDX-License-Identifier: Apache-2.0
#include "dp3df/filter.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "dp3df/parallel.hpp"

namespace dp3df {

void FilterGeometry::validate() const {
  require(r >= 1, "filter geometry: r must be >= 1");
  require(kh >= 1 && kw >= 1 && kt >= 1 && kh % 2 == 1 && kw % 2 == 1 && kt % 2 == 1,
          "filter geometry: kernel extents must be odd and >= 1");
  require(frames >= 1 && frames % 2 == 1, "filter geometry: frame count must be odd (2N+1)");
  require(kt <= frames, "filter geometry: kt must not exceed the frame count");
}

template <class T>
FilterField<T> normalize_filters(const BasicTensor<T>& raw, const FilterGeometry& geom, bool unit_illumination) {
  geom.validate();
  require(raw.rank() == 3, "normalize_filters: raw must be [H,W,channels], got " + shape_string(raw.shape()));
  require(raw.dim(2) == geom.raw_channels(), "normalize_filters: raw channel extent " + std::to_string(raw.dim(2)) +
                                                 ", expected r*r*(kh*kw*kt+1) = " +
                                                 std::to_string(geom.raw_channels()));
  const std::size_t h = raw.dim(0), w = raw.dim(1), kernels = geom.kernels(), taps = geom.taps();
  FilterField<T> f;
  f.geom = geom;
  f.raw = raw;
  f.unit_illumination = unit_illumination;
  f.taps = BasicTensor<T>({h, w, kernels, taps});
  f.illumination = BasicTensor<T>({h, w, kernels});
  using Array = Eigen::Array<T, Eigen::Dynamic, 1>;
  const std::size_t span = kernels * taps;
  for (std::size_t p = 0; p < h * w; ++p) {
    const T* in = raw.data() + p * geom.raw_channels();
    T* out = f.taps.data() + p * span;
    for (std::size_t b = 0; b < kernels; ++b) {
      const T* logits = in + b * taps;
      const T mx = *std::max_element(logits, logits + taps);
      for (std::size_t q = 0; q < taps; ++q) out[b * taps + q] = logits[q] - mx;
    }
    Eigen::Map<Array> all(out, static_cast<Eigen::Index>(span));
    all = all.exp();
    for (std::size_t b = 0; b < kernels; ++b) {
      T* k = out + b * taps;
      double sum = 0.0;
      for (std::size_t q = 0; q < taps; ++q) sum += k[q];
      const T total = static_cast<T>(sum);
      for (std::size_t q = 0; q < taps; ++q) k[q] /= total;
      const double x = in[span + b];
      f.illumination[p * kernels + b] = unit_illumination ? T{1} : static_cast<T>(1.0 + std::exp(-x));
    }
  }
  return f;
}

template <class T>
BasicTensor<T> normalize_filters_backward(const FilterField<T>& field, const BasicTensor<T>& grad_taps,
                                          const BasicTensor<T>& grad_illumination) {
  require_same_shape(field.taps, grad_taps, "normalize_filters_backward (taps)");
  require_same_shape(field.illumination, grad_illumination, "normalize_filters_backward (illumination)");
  const FilterGeometry& geom = field.geom;
  const std::size_t hw = field.height() * field.width(), kernels = geom.kernels(), taps = geom.taps();
  BasicTensor<T> g(field.raw.shape());
  for (std::size_t p = 0; p < hw; ++p) {
    T* out = g.data() + p * geom.raw_channels();
    for (std::size_t b = 0; b < kernels; ++b) {
      const T* y = field.taps.data() + (p * kernels + b) * taps;
      const T* gy = grad_taps.data() + (p * kernels + b) * taps;
      double dot = 0.0;
      for (std::size_t q = 0; q < taps; ++q) dot += static_cast<double>(y[q]) * gy[q];
      for (std::size_t q = 0; q < taps; ++q) out[b * taps + q] = static_cast<T>(y[q] * (gy[q] - dot));
      if (!field.unit_illumination) {
        // d(1 + e^-x)/dx = -e^-x
        const double x = field.raw[p * geom.raw_channels() + kernels * taps + b];
        out[kernels * taps + b] = static_cast<T>(-grad_illumination[p * kernels + b] * std::exp(-x));
      }
    }
  }
  return g;
}

namespace {

template <class T>
struct ApplyContext {
  const BasicTensor<T>& clip;
  const FilterField<T>& field;
  std::ptrdiff_t frames, h, w;
  std::size_t c, kernels, taps;
  int r;

  ApplyContext(const BasicTensor<T>& clip_, const FilterField<T>& field_) : clip(clip_), field(field_) {
    const FilterGeometry& g = field.geom;
    g.validate();
    require(clip.rank() == 4, "apply_dp3df: clip must be [T,H,W,C], got " + shape_string(clip.shape()));
    require(clip.dim(0) == static_cast<std::size_t>(g.frames),
            "apply_dp3df: clip has " + std::to_string(clip.dim(0)) + " frames, geometry expects " +
                std::to_string(g.frames));
    require(field.taps.rank() == 4 && field.taps.dim(0) == clip.dim(1) && field.taps.dim(1) == clip.dim(2),
            "apply_dp3df: filter field spatial extent does not match clip " + shape_string(clip.shape()));
    require(field.taps.dim(2) == g.kernels() && field.taps.dim(3) == g.taps(),
            "apply_dp3df: filter field does not match its geometry");
    frames = static_cast<std::ptrdiff_t>(clip.dim(0));
    h = static_cast<std::ptrdiff_t>(clip.dim(1));
    w = static_cast<std::ptrdiff_t>(clip.dim(2));
    c = clip.dim(3);
    kernels = g.kernels();
    taps = g.taps();
    r = g.r;
  }

  std::size_t out_width() const { return static_cast<std::size_t>(w) * r; }

  // patch[q*C + ch] for tap q = (m*kw + n)*kt + o in the order the taps are stored.
  void gather(std::ptrdiff_t i, std::ptrdiff_t j, double* patch) const {
    const FilterGeometry& g = field.geom;
    const std::ptrdiff_t t0 = g.center_frame();
    std::size_t q = 0;
    for (int m = -g.sh(); m <= g.sh(); ++m) {
      const std::ptrdiff_t y = std::clamp<std::ptrdiff_t>(i + m, 0, h - 1);
      for (int n = -g.sw(); n <= g.sw(); ++n) {
        const std::ptrdiff_t x = std::clamp<std::ptrdiff_t>(j + n, 0, w - 1);
        for (int o = -g.st(); o <= g.st(); ++o, ++q) {
          const std::ptrdiff_t t = std::clamp<std::ptrdiff_t>(t0 + o, 0, frames - 1);
          const T* px = clip.data() + ((t * h + y) * w + x) * static_cast<std::ptrdiff_t>(c);
          for (std::size_t ch = 0; ch < c; ++ch) patch[q * c + ch] = px[ch];
        }
      }
    }
  }

  std::size_t source_offset(std::ptrdiff_t i, std::ptrdiff_t j, std::size_t q) const {
    const FilterGeometry& g = field.geom;
    const std::ptrdiff_t o = static_cast<std::ptrdiff_t>(q % g.kt) - g.st();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>((q / g.kt) % g.kw) - g.sw();
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(q / (static_cast<std::size_t>(g.kt) * g.kw)) - g.sh();
    const std::ptrdiff_t t = std::clamp<std::ptrdiff_t>(g.center_frame() + o, 0, frames - 1);
    const std::ptrdiff_t y = std::clamp<std::ptrdiff_t>(i + m, 0, h - 1);
    const std::ptrdiff_t x = std::clamp<std::ptrdiff_t>(j + n, 0, w - 1);
    return static_cast<std::size_t>(((t * h + y) * w + x)) * c;
  }

  // CC > 0 fixes the channel count at compile time.
  template <std::size_t CC>
  void tiled_rows_impl(std::size_t row_begin, std::size_t row_end, T* out) const {
    const std::size_t nc = CC > 0 ? CC : c;
    std::vector<double> patch(taps * nc);
    std::vector<double> acc(nc);
    const std::size_t ow = out_width();
    for (std::size_t i = row_begin; i < row_end; ++i) {
      for (std::size_t j = 0; j < static_cast<std::size_t>(w); ++j) {
        gather(static_cast<std::ptrdiff_t>(i), static_cast<std::ptrdiff_t>(j), patch.data());
        const std::size_t p = i * static_cast<std::size_t>(w) + j;
        const T* wk = field.taps.data() + p * kernels * taps;
        const T* lk = field.illumination.data() + p * kernels;
        for (std::size_t b = 0; b < kernels; ++b, wk += taps) {
          std::fill(acc.begin(), acc.end(), 0.0);
          for (std::size_t q = 0; q < taps; ++q) {
            const double tap = wk[q];
            const double* px = patch.data() + q * nc;
            for (std::size_t ch = 0; ch < nc; ++ch) acc[ch] += tap * px[ch];
          }
          const std::size_t oy = i * r + b / r, ox = j * r + b % r;
          T* dst = out + (oy * ow + ox) * nc;
          const double l = lk[b];
          for (std::size_t ch = 0; ch < nc; ++ch) dst[ch] = static_cast<T>(acc[ch] * l);
        }
      }
    }
  }

  void tiled_rows(std::size_t row_begin, std::size_t row_end, T* out) const {
    if (c == 3)
      tiled_rows_impl<3>(row_begin, row_end, out);
    else
      tiled_rows_impl<0>(row_begin, row_end, out);
  }

  // Straight transcription of the defining sum: one clamped lookup per tap.
  void naive(T* out) const {
    const FilterGeometry& g = field.geom;
    const std::size_t ow = out_width();
    for (std::ptrdiff_t i = 0; i < h; ++i)
      for (std::ptrdiff_t j = 0; j < w; ++j)
        for (int r1 = 0; r1 < r; ++r1)
          for (int r2 = 0; r2 < r; ++r2) {
            const std::size_t b = static_cast<std::size_t>(r1 * r + r2);
            const std::size_t p = static_cast<std::size_t>(i * w + j);
            for (std::size_t ch = 0; ch < c; ++ch) {
              double acc = 0.0;
              for (int m = -g.sh(); m <= g.sh(); ++m)
                for (int n = -g.sw(); n <= g.sw(); ++n)
                  for (int o = -g.st(); o <= g.st(); ++o) {
                    const std::size_t q =
                        static_cast<std::size_t>(((m + g.sh()) * g.kw + (n + g.sw())) * g.kt + (o + g.st()));
                    const std::ptrdiff_t t = std::clamp<std::ptrdiff_t>(g.center_frame() + o, 0, frames - 1);
                    const std::ptrdiff_t y = std::clamp<std::ptrdiff_t>(i + m, 0, h - 1);
                    const std::ptrdiff_t x = std::clamp<std::ptrdiff_t>(j + n, 0, w - 1);
                    const double tap = field.taps[(p * kernels + b) * taps + q];
                    acc += tap * static_cast<double>(clip(t, y, x, ch));
                  }
              const std::size_t oy = static_cast<std::size_t>(i * r + r1), ox = static_cast<std::size_t>(j * r + r2);
              out[(oy * ow + ox) * c + ch] = static_cast<T>(acc * static_cast<double>(field.illumination[p * kernels + b]));
            }
          }
  }
};

}  // namespace

template <class T>
BasicTensor<T> apply_dp3df(const BasicTensor<T>& clip, const FilterField<T>& field, ApplyVariant variant,
                           int threads) {
  const ApplyContext<T> ctx(clip, field);
  BasicTensor<T> out({static_cast<std::size_t>(ctx.h) * ctx.r, ctx.out_width(), ctx.c});
  switch (variant) {
    case ApplyVariant::naive:
      ctx.naive(out.data());
      break;
    case ApplyVariant::tiled:
      ctx.tiled_rows(0, static_cast<std::size_t>(ctx.h), out.data());
      break;
    case ApplyVariant::parallel:
      parallel_for(static_cast<std::size_t>(ctx.h), threads,
                   [&](std::size_t begin, std::size_t end, int) { ctx.tiled_rows(begin, end, out.data()); });
      break;
  }
  return out;
}

template <class T>
FieldGrads<T> apply_dp3df_field_backward(const BasicTensor<T>& clip, const FilterField<T>& field,
                                         const BasicTensor<T>& upstream, bool need_clip_grad, int threads) {
  const ApplyContext<T> ctx(clip, field);
  const std::size_t oh = static_cast<std::size_t>(ctx.h) * ctx.r, ow = ctx.out_width();
  require(upstream.shape() == Shape({oh, ow, ctx.c}),
          "apply_dp3df_backward: upstream shape " + shape_string(upstream.shape()) + " does not match output");
  FieldGrads<T> g;
  g.taps = BasicTensor<T>(field.taps.shape());
  g.illumination = BasicTensor<T>(field.illumination.shape());
  const std::size_t kernels = ctx.kernels, taps = ctx.taps, c = ctx.c, r = static_cast<std::size_t>(ctx.r);
  const std::size_t w = static_cast<std::size_t>(ctx.w);

  // Per-pixel filter gradients are disjoint, so rows can be split freely.
  auto rows_impl = [&]<std::size_t CC>(std::size_t begin, std::size_t end) {
    const std::size_t nc = CC > 0 ? CC : c;
    std::vector<double> patch(taps * nc), s(nc);
    for (std::size_t i = begin; i < end; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        ctx.gather(static_cast<std::ptrdiff_t>(i), static_cast<std::ptrdiff_t>(j), patch.data());
        const std::size_t p = i * w + j;
        for (std::size_t b = 0; b < kernels; ++b) {
          const T* wk = field.taps.data() + (p * kernels + b) * taps;
          const double l = field.illumination[p * kernels + b];
          const T* gy = upstream.data() + ((i * r + b / r) * ow + (j * r + b % r)) * nc;
          std::fill(s.begin(), s.end(), 0.0);
          T* gw = g.taps.data() + (p * kernels + b) * taps;
          for (std::size_t q = 0; q < taps; ++q) {
            double gq = 0.0;
            for (std::size_t ch = 0; ch < nc; ++ch) {
              s[ch] += static_cast<double>(wk[q]) * patch[q * nc + ch];
              gq += static_cast<double>(gy[ch]) * patch[q * nc + ch];
            }
            gw[q] = static_cast<T>(gq * l);
          }
          double gl = 0.0;
          for (std::size_t ch = 0; ch < nc; ++ch) gl += static_cast<double>(gy[ch]) * s[ch];
          g.illumination[p * kernels + b] = static_cast<T>(gl);
        }
      }
  };
  auto rows = [&](std::size_t begin, std::size_t end, int) {
    if (c == 3)
      rows_impl.template operator()<3>(begin, end);
    else
      rows_impl.template operator()<0>(begin, end);
  };
  parallel_for(static_cast<std::size_t>(ctx.h), threads, rows);

  if (need_clip_grad) {
    // Scatter-add into shared source pixels: kept serial for a fixed order.
    g.clip = BasicTensor<T>(clip.shape());
    for (std::size_t i = 0; i < static_cast<std::size_t>(ctx.h); ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t p = i * w + j;
        for (std::size_t b = 0; b < kernels; ++b) {
          const T* wk = field.taps.data() + (p * kernels + b) * taps;
          const double l = field.illumination[p * kernels + b];
          const T* gy = upstream.data() + ((i * r + b / r) * ow + (j * r + b % r)) * c;
          for (std::size_t q = 0; q < taps; ++q) {
            T* dst = g.clip.data() + ctx.source_offset(static_cast<std::ptrdiff_t>(i), static_cast<std::ptrdiff_t>(j), q);
            const double scale = static_cast<double>(wk[q]) * l;
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += static_cast<T>(scale * gy[ch]);
          }
        }
      }
  }
  return g;
}

template <class T>
ApplyGrads<T> apply_dp3df_backward(const BasicTensor<T>& clip, const FilterField<T>& field,
                                   const BasicTensor<T>& upstream) {
  FieldGrads<T> fg = apply_dp3df_field_backward(clip, field, upstream, true);
  ApplyGrads<T> g;
  g.clip = std::move(fg.clip);
  g.raw = normalize_filters_backward(field, fg.taps, fg.illumination);
  return g;
}

template <class T>
BasicTensor<T> combine_residual(const BasicTensor<T>& z, const BasicTensor<T>& residual) {
  require_same_shape(z, residual, "combine_residual");
  BasicTensor<T> y(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) y[i] = std::clamp<T>(z[i] + residual[i], T{0}, T{1});
  return y;
}

template <class T>
BasicTensor<T> combine_residual_backward(const BasicTensor<T>& z, const BasicTensor<T>& residual,
                                         const BasicTensor<T>& upstream) {
  require_same_shape(z, residual, "combine_residual_backward");
  require_same_shape(z, upstream, "combine_residual_backward");
  BasicTensor<T> g(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const T s = z[i] + residual[i];
    g[i] = (s >= T{0} && s <= T{1}) ? upstream[i] : T{0};
  }
  return g;
}

SpecialCase reduce_to_special_case(const FilterGeometry& geom, SpecialCaseMode mode) {
  SpecialCase sc{geom, false};
  switch (mode) {
    case SpecialCaseMode::sr:
      sc.geom.kt = 1;
      sc.unit_illumination = true;
      break;
    case SpecialCaseMode::denoise:
      sc.geom.r = 1;
      sc.unit_illumination = true;
      break;
    case SpecialCaseMode::illum:
      sc.geom.r = 1;
      sc.geom.kh = sc.geom.kw = sc.geom.kt = 1;
      break;
  }
  sc.geom.validate();
  return sc;
}

#define DP3DF_INSTANTIATE_FILTER(T)                                                                             \
  template FilterField<T> normalize_filters(const BasicTensor<T>&, const FilterGeometry&, bool);                \
  template BasicTensor<T> normalize_filters_backward(const FilterField<T>&, const BasicTensor<T>&,              \
                                                     const BasicTensor<T>&);                                    \
  template BasicTensor<T> apply_dp3df(const BasicTensor<T>&, const FilterField<T>&, ApplyVariant, int);         \
  template FieldGrads<T> apply_dp3df_field_backward(const BasicTensor<T>&, const FilterField<T>&,               \
                                                    const BasicTensor<T>&, bool, int);                          \
  template ApplyGrads<T> apply_dp3df_backward(const BasicTensor<T>&, const FilterField<T>&,                     \
                                              const BasicTensor<T>&);                                           \
  template BasicTensor<T> combine_residual(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template BasicTensor<T> combine_residual_backward(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                                    const BasicTensor<T>&);

DP3DF_INSTANTIATE_FILTER(float)
DP3DF_INSTANTIATE_FILTER(double)

}  // namespace dp3df
