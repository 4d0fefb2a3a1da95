// SPDX-License-Identifier: Apache-2.0
#include "dp3df/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dp3df/ops.hpp"

namespace dp3df {

std::string to_string(Ablation ablation) {
  switch (ablation) {
    case Ablation::none:
      return "full";
    case Ablation::no_temporal:
      return "no_temporal";
    case Ablation::no_spatial:
      return "no_spatial";
    case Ablation::no_residual:
      return "no_residual";
  }
  return "full";
}

Ablation parse_ablation(std::string_view text) {
  if (text == "none" || text == "full") return Ablation::none;
  if (text == "no_temporal") return Ablation::no_temporal;
  if (text == "no_spatial") return Ablation::no_spatial;
  if (text == "no_residual") return Ablation::no_residual;
  throw ContractError("unknown ablation '" + std::string(text) + "'");
}

FilterGeometry PredictorConfig::filter_geometry() const {
  FilterGeometry g = geom;
  if (ablation == Ablation::no_temporal) g.kt = 1;
  if (ablation == Ablation::no_spatial) g.kh = g.kw = 1;
  return g;
}

void PredictorConfig::validate() const {
  require(levels >= 1, "predictor: levels must be >= 1");
  require(channels.size() == static_cast<std::size_t>(levels), "predictor: channels list must have one entry per level");
  require(std::all_of(channels.begin(), channels.end(), [](int c) { return c > 0; }),
          "predictor: channel counts must be positive");
  require(blocks_per_level >= 0, "predictor: blocks_per_level must be >= 0");
  require(colors >= 1, "predictor: colors must be >= 1");
  require(illumination_init > 1.0, "predictor: illumination_init must be > 1");
  filter_geometry().validate();
}

double kaiming_std(std::size_t fan_in, double leaky_slope) {
  const double gain = std::sqrt(2.0 / (1.0 + leaky_slope * leaky_slope));
  return gain / std::sqrt(static_cast<double>(fan_in));
}

namespace {

// Channel count entering decoder level l / produced by encoder level l-1.
int level_input_channels(const PredictorConfig& cfg, int l) { return l == 0 ? cfg.channels[0] : cfg.channels[l - 1]; }

std::string block_name(const std::string& prefix, int b) { return prefix + ".block" + std::to_string(b); }

struct ParamSpec {
  std::string name;
  Shape shape;
  enum Kind { conv_weight, bias, gamma, beta } kind;
  double gain = 1.0;
};

void add_conv(std::vector<ParamSpec>& specs, const std::string& name, int in, int out, int k, double gain = 1.0) {
  specs.push_back({name + ".w",
                   {static_cast<std::size_t>(out), static_cast<std::size_t>(in), static_cast<std::size_t>(k),
                    static_cast<std::size_t>(k)},
                   ParamSpec::conv_weight,
                   gain});
  specs.push_back({name + ".b", {static_cast<std::size_t>(out)}, ParamSpec::bias});
}

void add_block(std::vector<ParamSpec>& specs, const std::string& name, int ch) {
  add_conv(specs, name + ".conv1", ch, ch, 3);
  specs.push_back({name + ".norm1.gamma", {static_cast<std::size_t>(ch)}, ParamSpec::gamma});
  specs.push_back({name + ".norm1.beta", {static_cast<std::size_t>(ch)}, ParamSpec::beta});
  add_conv(specs, name + ".conv2", ch, ch, 3);
  specs.push_back({name + ".norm2.gamma", {static_cast<std::size_t>(ch)}, ParamSpec::gamma});
  specs.push_back({name + ".norm2.beta", {static_cast<std::size_t>(ch)}, ParamSpec::beta});
}

std::vector<ParamSpec> param_specs(const PredictorConfig& cfg) {
  std::vector<ParamSpec> specs;
  const int c0 = cfg.channels[0];
  add_conv(specs, "stem", cfg.input_channels(), c0, 3);
  for (int l = 0; l < cfg.levels; ++l) {
    const std::string p = "enc" + std::to_string(l);
    add_conv(specs, p + ".down", level_input_channels(cfg, l), cfg.channels[l], 3);
    for (int b = 0; b < cfg.blocks_per_level; ++b) add_block(specs, block_name(p, b), cfg.channels[l]);
  }
  for (int b = 0; b < cfg.blocks_per_level; ++b) add_block(specs, block_name("mid", b), cfg.channels[cfg.levels - 1]);
  for (int l = 0; l < cfg.levels; ++l) {
    const std::string p = "dec" + std::to_string(l);
    const int out = level_input_channels(cfg, l);
    add_conv(specs, p + ".up", cfg.channels[l], 4 * out, 3);
    add_conv(specs, p + ".fuse", 2 * out, out, 3);
  }
  const FilterGeometry g = cfg.filter_geometry();
  add_conv(specs, "filter_head.conv0", c0, c0, 3);
  add_conv(specs, "filter_head.conv1", c0, c0, 3);
  add_conv(specs, "filter_head.out", c0, static_cast<int>(g.raw_channels()), 1, cfg.output_gain);
  if (cfg.residual_enabled())
    add_conv(specs, "residual_head.conv", c0, g.r * g.r * cfg.colors, 3, cfg.output_gain);
  return specs;
}

}  // namespace

template <class T>
ParamMap<T> init_weights(const PredictorConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ParamMap<T> params;
  for (const ParamSpec& spec : param_specs(config)) {
    BasicTensor<T> t(spec.shape);
    switch (spec.kind) {
      case ParamSpec::conv_weight: {
        const std::size_t fan_in = spec.shape[1] * spec.shape[2] * spec.shape[3];
        std::normal_distribution<double> dist(0.0, spec.gain * kaiming_std(fan_in, config.leaky_slope));
        for (T& v : t.values()) v = static_cast<T>(dist(rng));
        break;
      }
      case ParamSpec::gamma:
        t.fill(T{1});
        break;
      case ParamSpec::bias:
      case ParamSpec::beta:
        break;
    }
    params.emplace(spec.name, std::move(t));
  }
  const FilterGeometry g = config.filter_geometry();
  BasicTensor<T>& head_bias = params.at("filter_head.out.b");
  const T logit = static_cast<T>(-std::log(config.illumination_init - 1.0));
  for (std::size_t b = 0; b < g.kernels(); ++b) head_bias[g.kernels() * g.taps() + b] = logit;
  return params;
}

template <class T>
ParamMap<T> zeros_like(const ParamMap<T>& params) {
  ParamMap<T> out;
  for (const auto& [name, t] : params) out.emplace(name, BasicTensor<T>(t.shape()));
  return out;
}

template <class T>
BasicTensor<T> fold_clip(const BasicTensor<T>& clip) {
  require(clip.rank() == 4, "fold_clip: clip must be [T,H,W,C], got " + shape_string(clip.shape()));
  const std::size_t t = clip.dim(0), h = clip.dim(1), w = clip.dim(2), c = clip.dim(3);
  BasicTensor<T> out({1, t * c, h, w});
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t ch = 0; ch < c; ++ch) out(0, f * c + ch, i, j) = clip(f, i, j, ch);
  return out;
}

template <class T>
BasicTensor<T> nchw_to_hwc(const BasicTensor<T>& x) {
  require(x.rank() == 4 && x.dim(0) == 1, "nchw_to_hwc: expected [1,C,H,W], got " + shape_string(x.shape()));
  const std::size_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
  BasicTensor<T> out({h, w, c});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < h * w; ++p) out[p * c + ch] = x[ch * h * w + p];
  return out;
}

template <class T>
BasicTensor<T> hwc_to_nchw(const BasicTensor<T>& x) {
  require(x.rank() == 3, "hwc_to_nchw: expected [H,W,C], got " + shape_string(x.shape()));
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  BasicTensor<T> out({1, c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < h * w; ++p) out[ch * h * w + p] = x[p * c + ch];
  return out;
}

// ---------------------------------------------------------------------------

namespace {

template <class T>
struct ConvCache {
  std::string name;
  BasicTensor<T> input;
  int stride = 1;
};

template <class T>
struct BlockCache {
  std::string name;
  ConvCache<T> conv1, conv2;
  InstanceNormCache<T> norm1, norm2;
  BasicTensor<T> pre_act;  // norm1 output
};

template <class T>
struct EncoderCache {
  ConvCache<T> down;
  BasicTensor<T> pre_act;
  std::vector<BlockCache<T>> blocks;
};

template <class T>
struct DecoderCache {
  ConvCache<T> up, fuse;
  BasicTensor<T> up_pre_act;    // after pixel shuffle
  BasicTensor<T> fuse_pre_act;
  std::size_t up_channels = 0;
};

}  // namespace

template <class T>
struct PredictorTape<T>::Impl {
  std::size_t height = 0, width = 0;
  ConvCache<T> stem;
  BasicTensor<T> stem_pre_act;
  std::vector<EncoderCache<T>> encoders;
  std::vector<BlockCache<T>> mid;
  std::vector<DecoderCache<T>> decoders;  // indexed by level
  ConvCache<T> head0, head1, head_out;
  BasicTensor<T> head0_pre_act, head1_pre_act;
  ConvCache<T> residual;
};

template <class T>
PredictorTape<T>::PredictorTape() : impl(std::make_unique<Impl>()) {}
template <class T>
PredictorTape<T>::~PredictorTape() = default;
template <class T>
PredictorTape<T>::PredictorTape(PredictorTape&&) noexcept = default;
template <class T>
PredictorTape<T>& PredictorTape<T>::operator=(PredictorTape&&) noexcept = default;

template <class T>
std::uint64_t PredictorTape<T>::kink_signature() const {
  // FNV-1a over the sign bit of every rectifier input.
  std::uint64_t hash = 1469598103934665603ull;
  auto mix = [&](const BasicTensor<T>& pre) {
    for (T v : pre.values()) {
      hash ^= v >= T{0} ? 1u : 0u;
      hash *= 1099511628211ull;
    }
  };
  const Impl& s = *impl;
  mix(s.stem_pre_act);
  for (const auto& e : s.encoders) {
    mix(e.pre_act);
    for (const auto& b : e.blocks) mix(b.pre_act);
  }
  for (const auto& b : s.mid) mix(b.pre_act);
  for (const auto& d : s.decoders) {
    mix(d.up_pre_act);
    mix(d.fuse_pre_act);
  }
  mix(s.head0_pre_act);
  mix(s.head1_pre_act);
  return hash;
}

namespace {

template <class T>
class Runner {
 public:
  Runner(const ParamMap<T>& weights, const PredictorConfig& cfg) : w_(weights), cfg_(cfg) {}

  const BasicTensor<T>& param(const std::string& name) const {
    auto it = w_.find(name);
    require(it != w_.end(), "predictor: missing weight '" + name + "'");
    return it->second;
  }

  BasicTensor<T> conv(const std::string& name, const BasicTensor<T>& x, int stride, ConvCache<T>* cache) const {
    if (cache) *cache = ConvCache<T>{name, x, stride};
    return conv2d(x, param(name + ".w"), param(name + ".b"), stride, Padding::zero);
  }

  BasicTensor<T> block(const std::string& name, const BasicTensor<T>& x, BlockCache<T>* cache) const {
    BasicTensor<T> a = conv(name + ".conv1", x, 1, cache ? &cache->conv1 : nullptr);
    a = instance_norm(a, param(name + ".norm1.gamma"), param(name + ".norm1.beta"), cfg_.norm_eps,
                      cache ? &cache->norm1 : nullptr);
    if (cache) {
      cache->name = name;
      cache->pre_act = a;
    }
    a = leaky_relu(a, cfg_.leaky_slope);
    a = conv(name + ".conv2", a, 1, cache ? &cache->conv2 : nullptr);
    a = instance_norm(a, param(name + ".norm2.gamma"), param(name + ".norm2.beta"), cfg_.norm_eps,
                      cache ? &cache->norm2 : nullptr);
    a += x;
    return a;
  }

 private:
  const ParamMap<T>& w_;
  const PredictorConfig& cfg_;
};

template <class T>
class BackRunner {
 public:
  BackRunner(const ParamMap<T>& weights, const PredictorConfig& cfg, ParamMap<T>& grads)
      : w_(weights), cfg_(cfg), g_(grads) {}

  BasicTensor<T> conv(const ConvCache<T>& c, const BasicTensor<T>& upstream, bool need_input = true) {
    Conv2dGrads<T> cg =
        conv2d_backward(c.input, param(c.name + ".w"), true, upstream, c.stride, Padding::zero, need_input);
    g_.at(c.name + ".w") += cg.weights;
    g_.at(c.name + ".b") += cg.bias;
    return std::move(cg.input);
  }

  BasicTensor<T> block(const BlockCache<T>& c, const BasicTensor<T>& upstream) {
    InstanceNormGrads<T> n2 = instance_norm_backward(c.norm2, param(c.name + ".norm2.gamma"), upstream);
    g_.at(c.name + ".norm2.gamma") += n2.gamma;
    g_.at(c.name + ".norm2.beta") += n2.beta;
    BasicTensor<T> ga = conv(c.conv2, n2.input);
    ga = leaky_relu_backward(c.pre_act, ga, cfg_.leaky_slope);
    InstanceNormGrads<T> n1 = instance_norm_backward(c.norm1, param(c.name + ".norm1.gamma"), ga);
    g_.at(c.name + ".norm1.gamma") += n1.gamma;
    g_.at(c.name + ".norm1.beta") += n1.beta;
    BasicTensor<T> gx = conv(c.conv1, n1.input);
    gx += upstream;
    return gx;
  }

 private:
  const BasicTensor<T>& param(const std::string& name) const { return w_.at(name); }

  const ParamMap<T>& w_;
  const PredictorConfig& cfg_;
  ParamMap<T>& g_;
};

}  // namespace

template <class T>
PredictorOutput<T> forward(const BasicTensor<T>& clip, const ParamMap<T>& weights, const PredictorConfig& config,
                           PredictorTape<T>* tape) {
  config.validate();
  require(clip.rank() == 4, "predictor: clip must be [T,H,W,C], got " + shape_string(clip.shape()));
  require(clip.dim(0) == static_cast<std::size_t>(config.geom.frames) &&
              clip.dim(3) == static_cast<std::size_t>(config.colors),
          "predictor: clip " + shape_string(clip.shape()) + " does not match config (frames " +
              std::to_string(config.geom.frames) + ", colors " + std::to_string(config.colors) + ")");
  const std::size_t mult = static_cast<std::size_t>(config.spatial_multiple());
  require(clip.dim(1) % mult == 0 && clip.dim(2) % mult == 0,
          "predictor: spatial extents must be divisible by " + std::to_string(mult));

  typename PredictorTape<T>::Impl* s = tape ? tape->impl.get() : nullptr;
  if (s) {
    *s = typename PredictorTape<T>::Impl{};
    s->height = clip.dim(1);
    s->width = clip.dim(2);
    s->encoders.resize(static_cast<std::size_t>(config.levels));
    s->decoders.resize(static_cast<std::size_t>(config.levels));
  }
  const Runner<T> run(weights, config);
  const double slope = config.leaky_slope;

  BasicTensor<T> a = run.conv("stem", fold_clip(clip), 1, s ? &s->stem : nullptr);
  if (s) s->stem_pre_act = a;
  BasicTensor<T> h = leaky_relu(a, slope);

  std::vector<BasicTensor<T>> skips;  // skips[l] feeds decoder level l
  skips.push_back(h);
  for (int l = 0; l < config.levels; ++l) {
    EncoderCache<T>* e = s ? &s->encoders[static_cast<std::size_t>(l)] : nullptr;
    const std::string p = "enc" + std::to_string(l);
    a = run.conv(p + ".down", h, 2, e ? &e->down : nullptr);
    if (e) e->pre_act = a;
    h = leaky_relu(a, slope);
    if (e) e->blocks.resize(static_cast<std::size_t>(config.blocks_per_level));
    for (int b = 0; b < config.blocks_per_level; ++b)
      h = run.block(block_name(p, b), h, e ? &e->blocks[static_cast<std::size_t>(b)] : nullptr);
    if (l + 1 < config.levels) skips.push_back(h);
  }
  if (s) s->mid.resize(static_cast<std::size_t>(config.blocks_per_level));
  for (int b = 0; b < config.blocks_per_level; ++b)
    h = run.block(block_name("mid", b), h, s ? &s->mid[static_cast<std::size_t>(b)] : nullptr);

  for (int l = config.levels - 1; l >= 0; --l) {
    DecoderCache<T>* d = s ? &s->decoders[static_cast<std::size_t>(l)] : nullptr;
    const std::string p = "dec" + std::to_string(l);
    a = pixel_shuffle(run.conv(p + ".up", h, 1, d ? &d->up : nullptr), 2);
    if (d) {
      d->up_pre_act = a;
      d->up_channels = a.dim(1);
    }
    a = concat_channels(leaky_relu(a, slope), skips[static_cast<std::size_t>(l)]);
    a = run.conv(p + ".fuse", a, 1, d ? &d->fuse : nullptr);
    if (d) d->fuse_pre_act = a;
    h = leaky_relu(a, slope);
  }

  PredictorOutput<T> out;
  a = run.conv("filter_head.conv0", h, 1, s ? &s->head0 : nullptr);
  if (s) s->head0_pre_act = a;
  a = run.conv("filter_head.conv1", leaky_relu(a, slope), 1, s ? &s->head1 : nullptr);
  if (s) s->head1_pre_act = a;
  out.raw_filters = nchw_to_hwc(run.conv("filter_head.out", leaky_relu(a, slope), 1, s ? &s->head_out : nullptr));
  if (config.residual_enabled()) {
    a = run.conv("residual_head.conv", h, 1, s ? &s->residual : nullptr);
    out.residual = nchw_to_hwc(pixel_shuffle(a, config.geom.r));
  }
  return out;
}

template <class T>
ParamMap<T> backward(const PredictorTape<T>& tape, const ParamMap<T>& weights, const PredictorConfig& config,
                     const BasicTensor<T>& grad_raw_filters, const BasicTensor<T>& grad_residual,
                     std::span<const std::string> frozen) {
  const auto& s = *tape.impl;
  require(!s.encoders.empty(), "predictor backward: tape is empty (forward was run without a tape)");
  const FilterGeometry g = config.filter_geometry();
  require(grad_raw_filters.shape() == Shape({s.height, s.width, g.raw_channels()}),
          "predictor backward: filter gradient shape " + shape_string(grad_raw_filters.shape()) + " is wrong");
  const double slope = config.leaky_slope;
  ParamMap<T> grads = zeros_like(weights);
  BackRunner<T> back(weights, config, grads);

  BasicTensor<T> gh = back.conv(s.head_out, hwc_to_nchw(grad_raw_filters));
  gh = back.conv(s.head1, leaky_relu_backward(s.head1_pre_act, gh, slope));
  BasicTensor<T> gf = back.conv(s.head0, leaky_relu_backward(s.head0_pre_act, gh, slope));
  if (config.residual_enabled()) {
    const std::size_t r = static_cast<std::size_t>(config.geom.r);
    require(grad_residual.shape() == Shape({s.height * r, s.width * r, static_cast<std::size_t>(config.colors)}),
            "predictor backward: residual gradient shape " + shape_string(grad_residual.shape()) + " is wrong");
    gf += back.conv(s.residual, pixel_unshuffle(hwc_to_nchw(grad_residual), config.geom.r));
  }

  std::vector<BasicTensor<T>> skip_grads(static_cast<std::size_t>(config.levels));
  gh = std::move(gf);
  for (int l = 0; l < config.levels; ++l) {
    const DecoderCache<T>& d = s.decoders[static_cast<std::size_t>(l)];
    BasicTensor<T> gcat = back.conv(d.fuse, leaky_relu_backward(d.fuse_pre_act, gh, slope));
    auto [gup, gskip] = split_channels(gcat, d.up_channels);
    skip_grads[static_cast<std::size_t>(l)] = std::move(gskip);
    gup = leaky_relu_backward(d.up_pre_act, gup, slope);
    gh = back.conv(d.up, pixel_unshuffle(gup, 2));
  }
  for (int b = config.blocks_per_level - 1; b >= 0; --b) gh = back.block(s.mid[static_cast<std::size_t>(b)], gh);
  for (int l = config.levels - 1; l >= 0; --l) {
    const EncoderCache<T>& e = s.encoders[static_cast<std::size_t>(l)];
    if (l + 1 < config.levels) gh += skip_grads[static_cast<std::size_t>(l + 1)];
    for (int b = config.blocks_per_level - 1; b >= 0; --b) gh = back.block(e.blocks[static_cast<std::size_t>(b)], gh);
    gh = back.conv(e.down, leaky_relu_backward(e.pre_act, gh, slope));
  }
  gh += skip_grads[0];
  back.conv(s.stem, leaky_relu_backward(s.stem_pre_act, gh, slope), false);

  for (auto& [name, t] : grads)
    for (const std::string& prefix : frozen)
      if (name.starts_with(prefix)) t.fill(T{0});
  return grads;
}

#define DP3DF_INSTANTIATE_PREDICTOR(T)                                                                          \
  template class PredictorTape<T>;                                                                              \
  template ParamMap<T> init_weights<T>(const PredictorConfig&, std::uint64_t);                                  \
  template ParamMap<T> zeros_like(const ParamMap<T>&);                                                          \
  template BasicTensor<T> fold_clip(const BasicTensor<T>&);                                                     \
  template BasicTensor<T> nchw_to_hwc(const BasicTensor<T>&);                                                   \
  template BasicTensor<T> hwc_to_nchw(const BasicTensor<T>&);                                                   \
  template PredictorOutput<T> forward(const BasicTensor<T>&, const ParamMap<T>&, const PredictorConfig&,        \
                                      PredictorTape<T>*);                                                       \
  template ParamMap<T> backward(const PredictorTape<T>&, const ParamMap<T>&, const PredictorConfig&,            \
                                const BasicTensor<T>&, const BasicTensor<T>&, std::span<const std::string>);

DP3DF_INSTANTIATE_PREDICTOR(float)
DP3DF_INSTANTIATE_PREDICTOR(double)

}  // namespace dp3df
