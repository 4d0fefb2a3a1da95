// SPDX-License-Identifier: Apache-2.0
#include "dp3df/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "dp3df/io.hpp"
#include "dp3df/parallel.hpp"

namespace dp3df {

void DegradeParams::validate() const {
  require(r >= 1, "degrade: r must be >= 1");
  require(exposure > 0.0 && exposure <= 1.0, "degrade: exposure must lie in (0, 1]");
  require(gamma > 0.0, "degrade: gamma must be positive");
  require(read_sigma >= 0.0 && shot_scale >= 0.0, "degrade: noise levels must be nonnegative");
}

Tensor box_downsample(const Tensor& frame, int r) {
  require(frame.rank() == 3, "box_downsample: frame must be [H,W,C]");
  require(r >= 1, "box_downsample: r must be >= 1");
  const std::size_t ru = static_cast<std::size_t>(r);
  require(frame.dim(0) % ru == 0 && frame.dim(1) % ru == 0, "box_downsample: extents must be divisible by r");
  const std::size_t h = frame.dim(0) / ru, w = frame.dim(1) / ru, c = frame.dim(2);
  Tensor out({h, w, c});
  const double inv = 1.0 / static_cast<double>(ru * ru);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t a = 0; a < ru; ++a)
          for (std::size_t b = 0; b < ru; ++b) s += frame(i * ru + a, j * ru + b, ch);
        out(i, j, ch) = static_cast<float>(s * inv);
      }
  return out;
}

Tensor degrade(const Tensor& hnn_frame, const DegradeParams& params, std::mt19937_64& rng) {
  params.validate();
  Tensor out = box_downsample(hnn_frame, params.r);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (float& v : out.values()) {
    const double y = std::pow(params.exposure * static_cast<double>(v), params.gamma);
    double noisy = y;
    if (params.shot_scale > 0.0 || params.read_sigma > 0.0) {
      const double n1 = normal(rng);
      const double n2 = normal(rng);
      noisy += params.shot_scale * std::sqrt(y) * n1 + params.read_sigma * n2;
    }
    v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
  }
  return out;
}

std::mt19937_64 frame_rng(const DegradeParams& params, std::size_t frame_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(params.seed), static_cast<std::uint32_t>(params.seed >> 32),
                    static_cast<std::uint32_t>(frame_index), 0x6465u};
  return std::mt19937_64(seq);
}

void SequenceRecord::validate() const {
  require(lln.size() == hnn.size(), "sequence: LLN and HNN frame counts differ");
  require(!lln.empty(), "sequence: no frames");
  const std::size_t ru = static_cast<std::size_t>(r);
  for (std::size_t i = 0; i < lln.size(); ++i) {
    require(lln[i].rank() == 3 && hnn[i].rank() == 3, "sequence: frames must be [H,W,C]");
    require(hnn[i].dim(0) == ru * lln[i].dim(0) && hnn[i].dim(1) == ru * lln[i].dim(1) &&
                hnn[i].dim(2) == lln[i].dim(2),
            "sequence: frame " + std::to_string(i) + " HNN dims are not r x LLN dims");
    require(lln[i].shape() == lln[0].shape(), "sequence: frame sizes vary");
  }
}

std::vector<std::size_t> window_indices(std::size_t t, int n, std::size_t count) {
  require(count > 0 && t < count, "window: frame index out of range");
  require(n >= 0, "window: N must be >= 0");
  std::vector<std::size_t> idx;
  for (int o = -n; o <= n; ++o) {
    const auto k = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(t) + o, 0,
                                              static_cast<std::ptrdiff_t>(count) - 1);
    idx.push_back(static_cast<std::size_t>(k));
  }
  return idx;
}

Tensor window(const std::vector<Tensor>& frames, std::size_t t, int n) {
  const auto idx = window_indices(t, n, frames.size());
  const Shape& fs = frames[0].shape();
  require(fs.size() == 3, "window: frames must be [H,W,C]");
  Tensor out({idx.size(), fs[0], fs[1], fs[2]});
  const std::size_t plane = shape_size(fs);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    require(frames[idx[k]].shape() == fs, "window: frame sizes vary");
    std::copy_n(frames[idx[k]].data(), plane, out.data() + k * plane);
  }
  return out;
}

void DatasetSpec::validate() const {
  require(sequences >= 1 && frames >= 1 && size >= 1 && r >= 1, "dataset: counts and sizes must be positive");
  require(exposure_min > 0 && exposure_min <= exposure_max && exposure_max <= 1.0, "dataset: bad exposure range");
  require(gamma_min > 0 && gamma_min <= gamma_max, "dataset: bad gamma range");
  require(read_sigma >= 0 && shot_scale >= 0 && max_speed >= 0, "dataset: negative noise or speed");
}

namespace {

struct Wave {
  double kx, ky, phase;
  std::array<double, 3> amp;
};

struct Shape2D {
  bool circle;
  double cx, cy, rx, ry, vx, vy;
  std::array<double, 3> color;
};

// Scene in its own coordinates; frame t sees it translated by the global velocity.
struct Scene {
  std::array<double, 3> base, grad_x, grad_y;
  std::vector<Wave> waves;
  std::vector<Shape2D> shapes;
  double vx = 0, vy = 0;
  double extent = 1;

  std::array<double, 3> shade(double x, double y, double t) const {
    const double u = x - vx * t, v = y - vy * t;
    std::array<double, 3> c{};
    for (int ch = 0; ch < 3; ++ch) c[ch] = base[ch] + grad_x[ch] * u / extent + grad_y[ch] * v / extent;
    for (const Wave& w : waves) {
      const double s = std::sin(w.kx * u + w.ky * v + w.phase);
      for (int ch = 0; ch < 3; ++ch) c[ch] += w.amp[ch] * s;
    }
    for (const Shape2D& s : shapes) {
      const double dx = (u - (s.cx + s.vx * t)) / s.rx, dy = (v - (s.cy + s.vy * t)) / s.ry;
      const double d = s.circle ? std::sqrt(dx * dx + dy * dy) : std::max(std::abs(dx), std::abs(dy));
      // ~1 px soft edge
      const double alpha = std::clamp((1.0 - d) * std::min(s.rx, s.ry) + 0.5, 0.0, 1.0);
      for (int ch = 0; ch < 3; ++ch) c[ch] = c[ch] * (1 - alpha) + s.color[ch] * alpha;
    }
    for (double& ch : c) ch = std::clamp(ch, 0.0, 1.0);
    return c;
  }
};

Scene random_scene(std::mt19937_64& rng, const DatasetSpec& spec) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto u = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };
  Scene s;
  s.extent = spec.size * spec.r;
  for (int ch = 0; ch < 3; ++ch) {
    s.base[ch] = u(0.25, 0.6);
    s.grad_x[ch] = u(-0.25, 0.25);
    s.grad_y[ch] = u(-0.25, 0.25);
  }
  const int nwaves = 6;
  for (int k = 0; k < nwaves; ++k) {
    const double period = u(8.0, 48.0);
    const double angle = u(0.0, 2 * std::numbers::pi);
    Wave w{std::cos(angle) * 2 * std::numbers::pi / period, std::sin(angle) * 2 * std::numbers::pi / period,
           u(0.0, 2 * std::numbers::pi), {}};
    const double a = u(0.02, 0.06);
    for (int ch = 0; ch < 3; ++ch) w.amp[ch] = a * u(0.7, 1.3);
    s.waves.push_back(w);
  }
  const int nshapes = 5;
  for (int k = 0; k < nshapes; ++k) {
    Shape2D sh{};
    sh.circle = uni(rng) < 0.5;
    sh.cx = u(0.0, s.extent);
    sh.cy = u(0.0, s.extent);
    sh.rx = u(0.06, 0.2) * s.extent;
    sh.ry = sh.rx * u(0.6, 1.4);
    const double lv = spec.local_motion ? spec.max_speed : 0.0;
    sh.vx = u(-lv, lv);
    sh.vy = u(-lv, lv);
    for (int ch = 0; ch < 3; ++ch) sh.color[ch] = u(0.05, 0.95);
    s.shapes.push_back(sh);
  }
  const int vmax = static_cast<int>(std::floor(spec.max_speed));
  std::uniform_int_distribution<int> vel(-vmax, vmax);
  s.vx = vel(rng);
  s.vy = vel(rng);
  return s;
}

Tensor render(const Scene& scene, std::size_t side, double t) {
  Tensor out({side, side, 3});
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j) {
      const auto c = scene.shade(static_cast<double>(j) + 0.5, static_cast<double>(i) + 0.5, t);
      for (int ch = 0; ch < 3; ++ch) out(i, j, ch) = static_cast<float>(c[static_cast<std::size_t>(ch)]);
    }
  return out;
}

}  // namespace

DatasetSpec held_out(const DatasetSpec& train, int sequences) {
  DatasetSpec spec = train;
  spec.sequences = sequences;
  spec.seed = train.seed * 0x9E3779B97F4A7C15ull + 0x7F4A7C15ull;
  return spec;
}

std::vector<SequenceRecord> make_dataset(const DatasetSpec& spec, int threads) {
  spec.validate();
  std::vector<SequenceRecord> out(static_cast<std::size_t>(spec.sequences));
  parallel_for(out.size(), threads, [&](std::size_t begin, std::size_t end, int) {
    for (std::size_t s = begin; s < end; ++s) {
      std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                        static_cast<std::uint32_t>(s), 0x5eedu};
      std::mt19937_64 rng(seq);
      const Scene scene = random_scene(rng, spec);
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      SequenceRecord rec;
      rec.r = spec.r;
      rec.velocity_x = scene.vx;
      rec.velocity_y = scene.vy;
      rec.params.r = spec.r;
      rec.params.exposure = spec.exposure_min + (spec.exposure_max - spec.exposure_min) * uni(rng);
      rec.params.gamma = spec.gamma_min + (spec.gamma_max - spec.gamma_min) * uni(rng);
      rec.params.read_sigma = spec.read_sigma;
      rec.params.shot_scale = spec.shot_scale;
      rec.params.seed = rng();
      const std::size_t side = static_cast<std::size_t>(spec.size) * static_cast<std::size_t>(spec.r);
      for (int f = 0; f < spec.frames; ++f) {
        Tensor hnn = render(scene, side, f);
        if (spec.quantize) hnn = quantize_8bit(hnn);
        std::mt19937_64 noise = frame_rng(rec.params, static_cast<std::size_t>(f));
        Tensor lln = degrade(hnn, rec.params, noise);
        if (spec.quantize) lln = quantize_8bit(lln);
        rec.hnn.push_back(std::move(hnn));
        rec.lln.push_back(std::move(lln));
      }
      out[s] = std::move(rec);
    }
  });
  return out;
}

namespace {

std::string number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string indexed(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu", prefix, i);
  return buf;
}

double config_number(const ConfigMap& c, const std::string& key) {
  auto it = c.find(key);
  if (it == c.end()) throw FormatError("meta.txt: missing key '" + key + "'");
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw FormatError("meta.txt: key '" + key + "' is not a number");
  }
}

}  // namespace

void save_dataset(const std::filesystem::path& root, const std::vector<SequenceRecord>& sequences) {
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const SequenceRecord& rec = sequences[s];
    rec.validate();
    const auto dir = root / indexed("seq", s);
    for (std::size_t f = 0; f < rec.lln.size(); ++f) {
      write_ppm(dir / "lln" / (indexed("frame", f) + ".ppm"), rec.lln[f]);
      write_ppm(dir / "hnn" / (indexed("frame", f) + ".ppm"), rec.hnn[f]);
    }
    ConfigMap meta{{"r", std::to_string(rec.r)},
                   {"fps", number(rec.fps)},
                   {"frames", std::to_string(rec.lln.size())},
                   {"exposure", number(rec.params.exposure)},
                   {"gamma", number(rec.params.gamma)},
                   {"read_sigma", number(rec.params.read_sigma)},
                   {"shot_scale", number(rec.params.shot_scale)},
                   {"seed", std::to_string(rec.params.seed)},
                   {"velocity_x", number(rec.velocity_x)},
                   {"velocity_y", number(rec.velocity_y)}};
    write_config(dir / "meta.txt", meta);
  }
}

std::vector<SequenceRecord> load_dataset(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> dirs;
  if (!std::filesystem::is_directory(root)) throw FormatError("dataset: " + root.string() + " is not a directory");
  for (const auto& entry : std::filesystem::directory_iterator(root))
    if (entry.is_directory() && entry.path().filename().string().starts_with("seq_")) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<SequenceRecord> out;
  for (const auto& dir : dirs) {
    const ConfigMap meta = read_config(dir / "meta.txt");
    SequenceRecord rec;
    rec.r = static_cast<int>(config_number(meta, "r"));
    rec.fps = config_number(meta, "fps");
    rec.params.r = rec.r;
    rec.params.exposure = config_number(meta, "exposure");
    rec.params.gamma = config_number(meta, "gamma");
    rec.params.read_sigma = config_number(meta, "read_sigma");
    rec.params.shot_scale = config_number(meta, "shot_scale");
    rec.params.seed = std::stoull(meta.at("seed"));
    if (meta.contains("velocity_x")) rec.velocity_x = config_number(meta, "velocity_x");
    if (meta.contains("velocity_y")) rec.velocity_y = config_number(meta, "velocity_y");
    const auto frames = static_cast<std::size_t>(config_number(meta, "frames"));
    for (std::size_t f = 0; f < frames; ++f) {
      rec.lln.push_back(read_ppm(dir / "lln" / (indexed("frame", f) + ".ppm")));
      rec.hnn.push_back(read_ppm(dir / "hnn" / (indexed("frame", f) + ".ppm")));
    }
    rec.validate();
    out.push_back(std::move(rec));
  }
  if (out.empty()) throw FormatError("dataset: no seq_XXXX directories under " + root.string());
  return out;
}

Tensor bicubic_upsample(const Tensor& frame, int r) {
  require(frame.rank() == 3, "bicubic_upsample: frame must be [H,W,C]");
  require(r >= 1, "bicubic_upsample: r must be >= 1");
  const auto h = static_cast<std::ptrdiff_t>(frame.dim(0)), w = static_cast<std::ptrdiff_t>(frame.dim(1));
  const std::size_t c = frame.dim(2), ru = static_cast<std::size_t>(r);
  auto cubic = [](double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1) return ((a + 2) * x - (a + 3)) * x * x + 1;
    if (x < 2) return ((a * x - 5 * a) * x + 8 * a) * x - 4 * a;
    return 0.0;
  };
  Tensor out({frame.dim(0) * ru, frame.dim(1) * ru, c});
  for (std::size_t oy = 0; oy < out.dim(0); ++oy) {
    const double sy = (static_cast<double>(oy) + 0.5) / r - 0.5;
    const auto y0 = static_cast<std::ptrdiff_t>(std::floor(sy));
    std::array<double, 4> wy{};
    for (int k = 0; k < 4; ++k) wy[static_cast<std::size_t>(k)] = cubic(sy - static_cast<double>(y0 - 1 + k));
    for (std::size_t ox = 0; ox < out.dim(1); ++ox) {
      const double sx = (static_cast<double>(ox) + 0.5) / r - 0.5;
      const auto x0 = static_cast<std::ptrdiff_t>(std::floor(sx));
      std::array<double, 4> wx{};
      for (int k = 0; k < 4; ++k) wx[static_cast<std::size_t>(k)] = cubic(sx - static_cast<double>(x0 - 1 + k));
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int a = 0; a < 4; ++a) {
          const auto yy = std::clamp<std::ptrdiff_t>(y0 - 1 + a, 0, h - 1);
          for (int b = 0; b < 4; ++b) {
            const auto xx = std::clamp<std::ptrdiff_t>(x0 - 1 + b, 0, w - 1);
            acc += wy[static_cast<std::size_t>(a)] * wx[static_cast<std::size_t>(b)] * frame(yy, xx, ch);
          }
        }
        out(oy, ox, ch) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Tensor baseline_restore(const Tensor& lln_frame, const DegradeParams& params) {
  params.validate();
  Tensor up = bicubic_upsample(lln_frame, params.r);
  for (float& v : up.values()) {
    const double y = std::max(static_cast<double>(v), 0.0);
    v = static_cast<float>(std::clamp(std::pow(y, 1.0 / params.gamma) / params.exposure, 0.0, 1.0));
  }
  return up;
}

}  // namespace dp3df
