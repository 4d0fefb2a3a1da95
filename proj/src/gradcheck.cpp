// SPDX-License-Identifier: Apache-2.0
#include "dp3df/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <random>

#include "dp3df/filter.hpp"
#include "dp3df/losses.hpp"
#include "dp3df/ops.hpp"
#include "dp3df/predictor.hpp"
#include "dp3df/trainer.hpp"

namespace dp3df {

int GradcheckReport::total_checked() const {
  int n = 0;
  for (const auto& it : items) n += it.checked;
  return n;
}

bool GradcheckReport::passed() const {
  return !items.empty() && std::all_of(items.begin(), items.end(), [](const auto& it) { return it.passed; });
}

void GradcheckReport::print(std::ostream& out) const {
  out << std::left << std::setw(34) << "item" << std::right << std::setw(9) << "checked" << std::setw(9) << "skipped"
      << std::setw(14) << "max rel err" << "  result\n";
  for (const auto& it : items)
    out << std::left << std::setw(34) << it.name << std::right << std::setw(9) << it.checked << std::setw(9)
        << it.skipped << std::setw(14) << std::scientific << std::setprecision(3) << it.max_rel << std::defaultfloat
        << "  " << (it.passed ? "ok" : "FAIL") << '\n';
  out << "total checked " << total_checked() << ", " << std::fixed << std::setprecision(2) << seconds << " s, "
      << (passed() ? "PASS" : "FAIL") << '\n';
  out.unsetf(std::ios::floatfield);
}

namespace {

using Rng = std::mt19937_64;

struct Eval {
  double loss = 0.0;
  std::uint64_t signature = 0;
};

struct Target {
  TensorD* value;
  const TensorD* grad;
};

TensorD random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo, double hi) {
  TensorD t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.values()) v = d(rng);
  return t;
}

TensorD normal_tensor(std::vector<std::size_t> shape, Rng& rng, double sigma) {
  TensorD t(std::move(shape));
  std::normal_distribution<double> d(0.0, sigma);
  for (double& v : t.values()) v = d(rng);
  return t;
}

double dot(const TensorD& a, const TensorD& b) {
  require_same_shape(a, b, "gradcheck dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <class Pred>
std::uint64_t mask_hash(const TensorD& t, Pred pred, std::uint64_t h = 1469598103934665603ull) {
  for (std::size_t i = 0; i < t.size(); ++i) h = (h ^ static_cast<std::uint64_t>(pred(t[i]))) * 1099511628211ull;
  return h;
}

class Checker {
 public:
  Checker(const GradcheckOptions& opt, Rng& rng) : opt_(opt), rng_(rng) {}

  GradcheckItem run(std::string name, std::vector<Target> targets, const std::function<Eval()>& eval,
                    int samples) {
    GradcheckItem item;
    item.name = std::move(name);
    const std::uint64_t base = eval().signature;
    const int max_attempts = samples * 20;
    for (int attempt = 0; item.checked < samples && attempt < max_attempts; ++attempt) {
      const Target& t = targets[static_cast<std::size_t>(item.checked) % targets.size()];
      std::uniform_int_distribution<std::size_t> pick(0, t.value->size() - 1);
      const std::size_t idx = pick(rng_);
      double& x = (*t.value)[idx];
      const double x0 = x;
      x = x0 + opt_.step;
      const Eval plus = eval();
      x = x0 - opt_.step;
      const Eval minus = eval();
      x = x0;
      if (plus.signature != base || minus.signature != base) {
        ++item.skipped;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2.0 * opt_.step);
      const double analytic = (*t.grad)[idx];
      const double rel =
          std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), opt_.floor});
      item.max_rel = std::max(item.max_rel, rel);
      ++item.checked;
    }
    item.passed = item.checked == samples && item.max_rel <= opt_.tolerance;
    return item;
  }

 private:
  const GradcheckOptions& opt_;
  Rng& rng_;
};

void check_conv(Checker& c, Rng& rng, std::vector<GradcheckItem>& out, int samples) {
  struct Case {
    const char* name;
    std::size_t k;
    int stride;
    Padding padding;
  };
  const Case cases[] = {{"conv2d 3x3 stride 1 zero", 3, 1, Padding::zero},
                        {"conv2d 3x3 stride 2 replicate", 3, 2, Padding::replicate},
                        {"conv2d 1x1", 1, 1, Padding::zero}};
  for (const Case& cs : cases) {
    TensorD in = normal_tensor({2, 3, 6, 5}, rng, 1.0);
    TensorD w = normal_tensor({4, 3, cs.k, cs.k}, rng, 0.5);
    TensorD b = normal_tensor({4}, rng, 0.5);
    const TensorD g = normal_tensor(conv2d(in, w, b, cs.stride, cs.padding).shape(), rng, 1.0);
    const auto grads = conv2d_backward(in, w, true, g, cs.stride, cs.padding);
    out.push_back(c.run(cs.name, {{&in, &grads.input}, {&w, &grads.weights}, {&b, &grads.bias}},
                        [&] { return Eval{dot(conv2d(in, w, b, cs.stride, cs.padding), g), 0}; }, samples));
  }
}

void check_primitives(Checker& c, Rng& rng, std::vector<GradcheckItem>& out, int samples) {
  {
    TensorD in = normal_tensor({1, 8, 3, 3}, rng, 1.0);
    const TensorD g = normal_tensor({1, 2, 6, 6}, rng, 1.0);
    const TensorD grad = pixel_unshuffle(g, 2);
    out.push_back(c.run("pixel_shuffle", {{&in, &grad}}, [&] { return Eval{dot(pixel_shuffle(in, 2), g), 0}; },
                        samples));
  }
  {
    TensorD in = normal_tensor({3, 5, 4}, rng, 1.5);
    const TensorD g = normal_tensor({3, 5, 4}, rng, 1.0);
    const TensorD grad = softmax_axis_backward(softmax_axis(in, 1), g, 1);
    out.push_back(c.run("softmax", {{&in, &grad}}, [&] { return Eval{dot(softmax_axis(in, 1), g), 0}; }, samples));
  }
  {
    TensorD in = normal_tensor({2, 3, 4, 5}, rng, 1.0);
    TensorD gamma = random_tensor({3}, rng, 0.5, 1.5);
    TensorD beta = normal_tensor({3}, rng, 0.5);
    const TensorD g = normal_tensor({2, 3, 4, 5}, rng, 1.0);
    InstanceNormCache<double> cache;
    instance_norm(in, gamma, beta, 1e-5, &cache);
    const auto grads = instance_norm_backward(cache, gamma, g);
    out.push_back(c.run("instance_norm", {{&in, &grads.input}, {&gamma, &grads.gamma}, {&beta, &grads.beta}},
                        [&] { return Eval{dot(instance_norm(in, gamma, beta, 1e-5), g), 0}; }, samples));
  }
  {
    TensorD in = normal_tensor({64}, rng, 1.0);
    const TensorD g = normal_tensor({64}, rng, 1.0);
    const TensorD grad = leaky_relu_backward(in, g, 0.2);
    out.push_back(c.run("leaky_relu", {{&in, &grad}},
                        [&] {
                          return Eval{dot(leaky_relu(in, 0.2), g), mask_hash(in, [](double v) { return v >= 0; })};
                        },
                        samples));
  }
  {
    TensorD a = normal_tensor({1, 2, 3, 3}, rng, 1.0);
    TensorD b = normal_tensor({1, 3, 3, 3}, rng, 1.0);
    const TensorD g = normal_tensor({1, 5, 3, 3}, rng, 1.0);
    const auto [ga, gb] = split_channels(g, 2);
    out.push_back(c.run("concat_channels", {{&a, &ga}, {&b, &gb}},
                        [&] { return Eval{dot(concat_channels(a, b), g), 0}; }, samples));
  }
}

void check_apply(Checker& c, Rng& rng, std::vector<GradcheckItem>& out, int samples) {
  struct Case {
    const char* name;
    FilterGeometry geom;
    bool unit;
  };
  const Case cases[] = {{"apply_dp3df r2 k3x3x3", {2, 3, 3, 3, 3}, false},
                        {"apply_dp3df r1 k3x1x1 unit L", {1, 3, 1, 1, 1}, true}};
  for (const Case& cs : cases) {
    const std::size_t h = 5, w = 4, ch = 2;
    TensorD clip = random_tensor({static_cast<std::size_t>(cs.geom.frames), h, w, ch}, rng, 0.0, 1.0);
    TensorD raw = normal_tensor({h, w, cs.geom.raw_channels()}, rng, 0.7);
    const TensorD g = normal_tensor({h * cs.geom.r, w * cs.geom.r, ch}, rng, 1.0);
    const auto grads = apply_dp3df_backward(clip, normalize_filters(raw, cs.geom, cs.unit), g);
    std::vector<Target> targets{{&raw, &grads.raw}, {&clip, &grads.clip}};
    out.push_back(c.run(cs.name, targets,
                        [&] { return Eval{dot(apply_dp3df(clip, normalize_filters(raw, cs.geom, cs.unit)), g), 0}; },
                        samples));
  }
}

void check_losses(Checker& c, Rng& rng, std::vector<GradcheckItem>& out, int samples) {
  const auto outside = [](double v) { return (v < 0.0) | (v > 1.0) << 1; };
  {
    TensorD pred = random_tensor({6, 6, 3}, rng, -0.2, 1.2);
    const TensorD gt = random_tensor({6, 6, 3}, rng, 0.0, 1.0);
    const TensorD grad = recon_loss(pred, gt).grad;
    out.push_back(c.run("recon_loss", {{&pred, &grad}},
                        [&] { return Eval{recon_loss(pred, gt).value, mask_hash(pred, outside)}; }, samples));
  }
  const TensorD frame = random_tensor({6, 7, 3}, rng, 0.02, 1.0);
  const auto sw = smoothness_weights(frame, 1e-4);
  for (const Reduction red : {Reduction::sum, Reduction::mean}) {
    TensorD maps = random_tensor({6, 7, 4}, rng, 1.0, 3.0);
    const TensorD grad = smoothness_loss(maps, sw, red).grad;
    out.push_back(c.run(red == Reduction::sum ? "smoothness_loss sum" : "smoothness_loss mean", {{&maps, &grad}},
                        [&] { return Eval{smoothness_loss(maps, sw, red).value, 0}; }, samples));
  }
  {
    TensorD z = random_tensor({8, 8, 3}, rng, -0.1, 1.1);
    TensorD res = normal_tensor({8, 8, 3}, rng, 0.1);
    TensorD maps = random_tensor({4, 4, 4}, rng, 1.0, 3.0);
    const TensorD gt = random_tensor({8, 8, 3}, rng, 0.0, 1.0);
    const auto small_sw = smoothness_weights(random_tensor({4, 4, 3}, rng, 0.02, 1.0), 1e-4);
    const LossWeights lw{};
    const auto tl = total_loss(z, res, gt, maps, small_sw, lw);
    out.push_back(c.run("total_loss",
                        {{&z, &tl.grad_z}, {&res, &tl.grad_residual}, {&maps, &tl.grad_illumination}},
                        [&] {
                          TensorD s = z;
                          s += res;
                          return Eval{total_loss(z, res, gt, maps, small_sw, lw).total,
                                      mask_hash(s, outside, mask_hash(z, outside))};
                        },
                        samples));
  }
}

void check_end_to_end(Checker& c, Rng& rng, std::vector<GradcheckItem>& out, int samples) {
  const FilterGeometry geom{2, 3, 3, 3, 3};
  const std::size_t h = 4, w = 4, ch = 3;
  TensorD raw = normal_tensor({h, w, geom.raw_channels()}, rng, 0.7);
  TensorD clip = random_tensor({3, h, w, ch}, rng, 0.0, 0.4);
  const TensorD res = normal_tensor({h * 2, w * 2, ch}, rng, 0.05);
  const TensorD gt = random_tensor({h * 2, w * 2, ch}, rng, 0.0, 1.0);
  const auto sw = smoothness_weights(random_tensor({h, w, ch}, rng, 0.02, 1.0), 1e-4);
  const LossWeights lw{};
  const auto evaluate = [&](TensorD* grad_raw, TensorD* grad_clip) {
    const FilterField<double> field = normalize_filters(raw, geom);
    const TensorD z = apply_dp3df(clip, field);
    const auto tl = total_loss(z, res, gt, field.illumination, sw, lw);
    if (grad_raw) {
      FieldGrads<double> fg = apply_dp3df_field_backward(clip, field, tl.grad_z, true);
      fg.illumination += tl.grad_illumination;
      *grad_raw = normalize_filters_backward(field, fg.taps, fg.illumination);
      *grad_clip = fg.clip;
    }
    const auto outside = [](double v) { return (v < 0.0) | (v > 1.0) << 1; };
    TensorD s = z;
    s += res;
    return Eval{tl.total, mask_hash(s, outside, mask_hash(z, outside))};
  };
  TensorD grad_raw, grad_clip;
  evaluate(&grad_raw, &grad_clip);
  out.push_back(c.run("filter + apply + total_loss", {{&raw, &grad_raw}, {&clip, &grad_clip}},
                      [&] { return evaluate(nullptr, nullptr); }, samples));
}

void check_predictor(Checker& c, Rng& rng, std::uint64_t seed, std::vector<GradcheckItem>& out, int samples) {
  PredictorConfig cfg;
  cfg.levels = 1;
  cfg.channels = {8};
  cfg.blocks_per_level = 1;
  const std::size_t h = 8, w = 8;
  const TensorD clip = random_tensor({static_cast<std::size_t>(cfg.geom.frames), h, w, 3}, rng, 0.0, 0.4);
  const std::size_t r = static_cast<std::size_t>(cfg.geom.r);
  const TensorD target = random_tensor({h * r, w * r, 3}, rng, 0.0, 1.0);
  ParamMap<double> weights = init_weights<double>(cfg, seed);
  const LossWeights lw{};
  const ParamMap<double> grads = pipeline_step(clip, target, weights, cfg, lw).grads;
  std::vector<Target> targets;
  for (auto& [name, t] : weights) targets.push_back({&t, &grads.at(name)});
  out.push_back(c.run("tiny predictor end to end", targets,
                      [&] {
                        const auto s = pipeline_step(clip, target, weights, cfg, lw);
                        return Eval{s.loss.total, s.kink_signature};
                      },
                      samples));
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(options.seed);
  Checker checker(options, rng);
  GradcheckReport report;
  check_conv(checker, rng, report.items, options.samples_per_item);
  check_primitives(checker, rng, report.items, options.samples_per_item);
  check_apply(checker, rng, report.items, options.samples_per_item);
  check_losses(checker, rng, report.items, options.samples_per_item);
  check_end_to_end(checker, rng, report.items, options.end_to_end_samples);
  check_predictor(checker, rng, options.seed, report.items, options.predictor_samples);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace dp3df
