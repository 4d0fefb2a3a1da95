// SPDX-License-Identifier: Apache-2.0
#include "dp3df/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

#include "dp3df/parallel.hpp"

namespace dp3df {

void TrainConfig::validate(const PredictorConfig& predictor) const {
  require(lr0 > 0, "train: lr0 must be positive");
  require(batch >= 1 && total_steps >= 1, "train: batch and total_steps must be >= 1");
  require(patch >= 1 && patch % predictor.spatial_multiple() == 0,
          "train: patch must be divisible by 2^levels = " + std::to_string(predictor.spatial_multiple()));
  require(clip_norm > 0, "train: clip_norm must be positive");
  loss.validate();
}

void adam_step(ParamMap<float>& weights, const ParamMap<float>& grads, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  for (const auto& [name, g] : grads) {
    require(weights.contains(name), "adam: gradient for unknown parameter '" + name + "'");
    require_same_shape(weights.at(name), g, "adam (" + name + ")");
    if (!g.all_finite()) throw NumericError("adam: non-finite gradient in parameter '" + name + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(beta1, t), bc2 = 1.0 - std::pow(beta2, t);
  for (auto& [name, w] : weights) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    auto [mit, m_new] = state.m.try_emplace(name, w.shape());
    auto [vit, v_new] = state.v.try_emplace(name, w.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
      const double vi = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / bc1, vhat = vi / bc2;
      w[i] = static_cast<float>(w[i] - lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

double cosine_lr(long step, long total, double lr0) {
  require(total > 0, "cosine_lr: total must be positive");
  const double s = std::clamp(static_cast<double>(step), 0.0, static_cast<double>(total));
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * s / static_cast<double>(total)));
}

double clip_global_norm(ParamMap<float>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (float v : g.values()) sq += static_cast<double>(v) * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const float scale = static_cast<float>(max_norm / norm);
    for (auto& [name, g] : grads) g *= scale;
  }
  return norm;
}

Tensor transform_frame(const Tensor& frame, Transform transform) {
  require(frame.rank() == 3, "transform_frame: frame must be [H,W,C]");
  Tensor cur = frame;
  const int turns = ((transform.quarter_turns % 4) + 4) % 4;
  for (int k = 0; k < turns; ++k) {
    const std::size_t h = cur.dim(0), w = cur.dim(1), c = cur.dim(2);
    Tensor rot({w, h, c});
    // counter-clockwise: out(i, j) = in(j, w-1-i)
    for (std::size_t i = 0; i < w; ++i)
      for (std::size_t j = 0; j < h; ++j)
        for (std::size_t ch = 0; ch < c; ++ch) rot(i, j, ch) = cur(j, w - 1 - i, ch);
    cur = std::move(rot);
  }
  if (transform.flip) {
    const std::size_t h = cur.dim(0), w = cur.dim(1), c = cur.dim(2);
    Tensor fl({h, w, c});
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t ch = 0; ch < c; ++ch) fl(i, j, ch) = cur(i, w - 1 - j, ch);
    cur = std::move(fl);
  }
  return cur;
}

namespace {

Tensor frame_of(const Tensor& clip, std::size_t t) {
  const std::size_t h = clip.dim(1), w = clip.dim(2), c = clip.dim(3);
  Tensor f({h, w, c});
  std::copy_n(clip.data() + t * h * w * c, h * w * c, f.data());
  return f;
}

Tensor stack_frames(const std::vector<Tensor>& frames) {
  const Shape& fs = frames.at(0).shape();
  Tensor out({frames.size(), fs[0], fs[1], fs[2]});
  const std::size_t n = shape_size(fs);
  for (std::size_t k = 0; k < frames.size(); ++k) std::copy_n(frames[k].data(), n, out.data() + k * n);
  return out;
}

Tensor crop(const Tensor& frame, std::size_t y0, std::size_t x0, std::size_t side) {
  const std::size_t c = frame.dim(2);
  Tensor out({side, side, c});
  for (std::size_t i = 0; i < side; ++i)
    std::copy_n(frame.data() + ((y0 + i) * frame.dim(1) + x0) * c, side * c, out.data() + i * side * c);
  return out;
}

std::string seq_label(std::size_t s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seq_%04zu", s);
  return buf;
}

}  // namespace

TrainingSample apply_transform(const TrainingSample& sample, Transform transform) {
  std::vector<Tensor> frames;
  for (std::size_t t = 0; t < sample.clip.dim(0); ++t) frames.push_back(transform_frame(frame_of(sample.clip, t), transform));
  return {stack_frames(frames), transform_frame(sample.target, transform)};
}

TrainingSample augment(const TrainingSample& sample, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> turns(0, 3);
  std::bernoulli_distribution flip(0.5);
  Transform tr;
  tr.quarter_turns = turns(rng);
  tr.flip = flip(rng);
  return apply_transform(sample, tr);
}

TrainingSample draw_sample(const std::vector<SequenceRecord>& dataset, int frames, int patch, std::mt19937_64& rng) {
  require(!dataset.empty(), "train: empty dataset");
  std::uniform_int_distribution<std::size_t> pick_seq(0, dataset.size() - 1);
  const SequenceRecord& seq = dataset[pick_seq(rng)];
  std::uniform_int_distribution<std::size_t> pick_t(0, seq.lln.size() - 1);
  const std::size_t t = pick_t(rng);
  const std::size_t h = seq.lln[0].dim(0), w = seq.lln[0].dim(1), side = static_cast<std::size_t>(patch);
  require(h >= side && w >= side, "train: frames smaller than the patch size");
  std::uniform_int_distribution<std::size_t> pick_y(0, h - side), pick_x(0, w - side);
  const std::size_t y0 = pick_y(rng), x0 = pick_x(rng);
  std::vector<Tensor> crops;
  for (std::size_t k : window_indices(t, (frames - 1) / 2, seq.lln.size())) crops.push_back(crop(seq.lln[k], y0, x0, side));
  const std::size_t r = static_cast<std::size_t>(seq.r);
  return {stack_frames(crops), crop(seq.hnn[t], y0 * r, x0 * r, side * r)};
}

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& log) {
  out << "step,L_r,L_s,L_e,total\n";
  out << std::setprecision(9);
  for (const auto& r : log) out << r.step << ',' << r.recon << ',' << r.smooth << ',' << r.residual << ',' << r.total << '\n';
}

template <class T>
PipelineStep<T> pipeline_step(const BasicTensor<T>& clip, const BasicTensor<T>& target, const ParamMap<T>& weights,
                              const PredictorConfig& predictor, const LossWeights& loss) {
  PredictorTape<T> tape;
  PredictorOutput<T> out = forward(clip, weights, predictor, &tape);
  const FilterField<T> field =
      normalize_filters(out.raw_filters, predictor.filter_geometry(), predictor.unit_illumination);
  const BasicTensor<T> z = apply_dp3df(clip, field, ApplyVariant::tiled);
  const BasicTensor<T> residual = predictor.residual_enabled() ? out.residual : BasicTensor<T>(z.shape());
  const std::size_t h = clip.dim(1), w = clip.dim(2), c = clip.dim(3);
  BasicTensor<T> center({h, w, c});
  std::copy_n(clip.data() + static_cast<std::size_t>(predictor.geom.center_frame()) * h * w * c, h * w * c,
              center.data());
  const auto sw = smoothness_weights(center, loss.eps);
  PipelineStep<T> step;
  step.loss = total_loss(z, residual, target, field.illumination, sw, loss);
  FieldGrads<T> fg = apply_dp3df_field_backward(clip, field, step.loss.grad_z);
  fg.illumination += step.loss.grad_illumination;
  const BasicTensor<T> graw = normalize_filters_backward(field, fg.taps, fg.illumination);
  step.grads = backward(tape, weights, predictor, graw,
                        predictor.residual_enabled() ? step.loss.grad_residual : BasicTensor<T>{});
  step.kink_signature = tape.kink_signature();
  // Clamp branches of the combine and both reconstruction terms.
  for (std::size_t i = 0; i < z.size(); ++i) {
    const T s = z[i] + residual[i];
    const unsigned bits = (z[i] >= T{0}) | (z[i] <= T{1}) << 1 | (s >= T{0}) << 2 | (s <= T{1}) << 3;
    step.kink_signature = (step.kink_signature ^ bits) * 1099511628211ull;
  }
  return step;
}

template PipelineStep<float> pipeline_step(const Tensor&, const Tensor&, const ParamMap<float>&,
                                           const PredictorConfig&, const LossWeights&);
template PipelineStep<double> pipeline_step(const TensorD&, const TensorD&, const ParamMap<double>&,
                                            const PredictorConfig&, const LossWeights&);

SampleStep sample_step(const TrainingSample& sample, const ParamMap<float>& weights, const PredictorConfig& predictor,
                       const LossWeights& loss) {
  PipelineStep<float> p = pipeline_step(sample.clip, sample.target, weights, predictor, loss);
  return {std::move(p.loss), std::move(p.grads)};
}

TrainResult train(const TrainConfig& config, const PredictorConfig& predictor,
                  const std::vector<SequenceRecord>& dataset, const StepCallback& on_step) {
  predictor.validate();
  config.validate(predictor);
  require(!dataset.empty(), "train: empty dataset");
  for (const auto& s : dataset) {
    s.validate();
    require(s.r == predictor.geom.r, "train: dataset r does not match predictor r");
  }
  TrainResult result;
  result.weights = init_weights<float>(predictor, config.seed);
  const std::size_t batch = static_cast<std::size_t>(config.batch);
  for (long step = 0; step < config.total_steps; ++step) {
    std::vector<SampleStep> parts(batch);
    parallel_for(batch, config.threads, [&](std::size_t begin, std::size_t end, int) {
      for (std::size_t b = begin; b < end; ++b) {
        std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                          static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(b)};
        std::mt19937_64 rng(seq);
        TrainingSample s = draw_sample(dataset, predictor.geom.frames, config.patch, rng);
        if (config.augment) s = augment(s, rng);
        parts[b] = sample_step(s, result.weights, predictor, config.loss);
      }
    });
    // Fixed merge order: sample 0, 1, ..., batch-1.
    ParamMap<float> grads = std::move(parts[0].grads);
    LossRecord rec;
    rec.step = step;
    for (std::size_t b = 0; b < batch; ++b) {
      if (b > 0)
        for (auto& [name, g] : grads) g += parts[b].grads.at(name);
      rec.recon += parts[b].loss.recon;
      rec.smooth += parts[b].loss.smooth;
      rec.residual += parts[b].loss.residual;
      rec.total += parts[b].loss.total;
    }
    const double inv = 1.0 / static_cast<double>(batch);
    rec.recon *= inv;
    rec.smooth *= inv;
    rec.residual *= inv;
    rec.total *= inv;
    if (!std::isfinite(rec.total)) {
      std::ostringstream msg;
      msg << "train: loss diverged at step " << step << " (L_r=" << rec.recon << ", L_s=" << rec.smooth
          << ", L_e=" << rec.residual << ")";
      throw NumericError(msg.str());
    }
    for (auto& [name, g] : grads) g *= static_cast<float>(inv);
    clip_global_norm(grads, config.clip_norm);
    adam_step(result.weights, grads, result.optimizer, cosine_lr(step, config.total_steps, config.lr0), config.beta1,
              config.beta2, config.adam_eps);
    result.log.push_back(rec);
    if (on_step) on_step(rec);
  }
  return result;
}

Inference infer(const Tensor& clip, const ParamMap<float>& weights, const PredictorConfig& predictor) {
  PredictorOutput<float> out = forward(clip, weights, predictor);
  Inference inf;
  inf.field = normalize_filters(out.raw_filters, predictor.filter_geometry(), predictor.unit_illumination);
  inf.z = apply_dp3df(clip, inf.field, ApplyVariant::tiled);
  inf.residual = predictor.residual_enabled() ? std::move(out.residual) : Tensor(inf.z.shape());
  inf.y = combine_residual(inf.z, inf.residual);
  return inf;
}

EvalReport evaluate(const std::vector<SequenceRecord>& sequences, const ParamMap<float>& weights,
                    const PredictorConfig& predictor, int threads) {
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t s = 0; s < sequences.size(); ++s)
    for (std::size_t t = 0; t < sequences[s].lln.size(); ++t) jobs.emplace_back(s, t);
  std::vector<FrameScore> scores(jobs.size());
  const int n = (predictor.geom.frames - 1) / 2;
  parallel_for(jobs.size(), threads, [&](std::size_t begin, std::size_t end, int) {
    for (std::size_t k = begin; k < end; ++k) {
      const auto [s, t] = jobs[k];
      const Inference inf = infer(window(sequences[s].lln, t, n), weights, predictor);
      scores[k] = {seq_label(s), t, psnr(inf.y, sequences[s].hnn[t]), ssim(inf.y, sequences[s].hnn[t])};
    }
  });
  EvalReport report;
  report.label = "model (" + to_string(predictor.ablation) + ")";
  report.frames = std::move(scores);
  return report;
}

EvalReport evaluate_baseline(const std::vector<SequenceRecord>& sequences) {
  EvalReport report;
  report.label = "bicubic + inverse exposure";
  for (std::size_t s = 0; s < sequences.size(); ++s)
    for (std::size_t t = 0; t < sequences[s].lln.size(); ++t)
      report.add(seq_label(s), t, baseline_restore(sequences[s].lln[t], sequences[s].params), sequences[s].hnn[t]);
  return report;
}

void save_checkpoint(const std::filesystem::path& path, const ParamMap<float>& weights) {
  write_container(path, TensorMap(weights.begin(), weights.end()));
}

ParamMap<float> load_checkpoint(const std::filesystem::path& path) {
  TensorMap m = read_container(path);
  for (const auto& [name, t] : m) t.check_finite("checkpoint tensor '" + name + "'");
  return ParamMap<float>(m.begin(), m.end());
}

// ---------------------------------------------------------------------------

namespace {

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ContractError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != std::floor(d)) throw ContractError("config: '" + key + "' expects an integer, got '" + v + "'");
  return static_cast<int>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ContractError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_int(key, item));
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

void apply_config(const ConfigMap& config, TrainConfig& train, PredictorConfig& predictor, DatasetSpec& data) {
  for (const auto& [key, value] : config) {
    const std::string& v = value;
    if (key == "lr0") train.lr0 = to_double(key, v);
    else if (key == "beta1") train.beta1 = to_double(key, v);
    else if (key == "beta2") train.beta2 = to_double(key, v);
    else if (key == "batch") train.batch = to_int(key, v);
    else if (key == "patch") train.patch = to_int(key, v);
    else if (key == "steps" || key == "total_steps") train.total_steps = to_int(key, v);
    else if (key == "seed") train.seed = static_cast<std::uint64_t>(to_double(key, v));
    else if (key == "clip_norm") train.clip_norm = to_double(key, v);
    else if (key == "augment") train.augment = to_bool(key, v);
    else if (key == "threads") train.threads = to_int(key, v);
    else if (key == "lambda1") train.loss.recon = to_double(key, v);
    else if (key == "lambda2") train.loss.smooth = to_double(key, v);
    else if (key == "lambda3") train.loss.residual = to_double(key, v);
    else if (key == "eps") train.loss.eps = to_double(key, v);
    else if (key == "levels") predictor.levels = to_int(key, v);
    else if (key == "channels") predictor.channels = to_int_list(key, v);
    else if (key == "blocks_per_level") predictor.blocks_per_level = to_int(key, v);
    else if (key == "r") predictor.geom.r = data.r = to_int(key, v);
    else if (key == "kh") predictor.geom.kh = to_int(key, v);
    else if (key == "kw") predictor.geom.kw = to_int(key, v);
    else if (key == "kt") predictor.geom.kt = to_int(key, v);
    else if (key == "frames") predictor.geom.frames = to_int(key, v);
    else if (key == "ablation") predictor.ablation = parse_ablation(v);
    else if (key == "unit_illumination") predictor.unit_illumination = to_bool(key, v);
    else if (key == "leaky_slope") predictor.leaky_slope = to_double(key, v);
    else if (key == "output_gain") predictor.output_gain = to_double(key, v);
    else if (key == "illumination_init") predictor.illumination_init = to_double(key, v);
    else if (key == "sequences") data.sequences = to_int(key, v);
    else if (key == "frames_per_sequence") data.frames = to_int(key, v);
    else if (key == "size") data.size = to_int(key, v);
    else if (key == "exposure_min") data.exposure_min = to_double(key, v);
    else if (key == "exposure_max") data.exposure_max = to_double(key, v);
    else if (key == "gamma_min") data.gamma_min = to_double(key, v);
    else if (key == "gamma_max") data.gamma_max = to_double(key, v);
    else if (key == "read_sigma") data.read_sigma = to_double(key, v);
    else if (key == "shot_scale") data.shot_scale = to_double(key, v);
    else if (key == "max_speed") data.max_speed = to_double(key, v);
    else if (key == "local_motion") data.local_motion = to_bool(key, v);
    else if (key == "quantize") data.quantize = to_bool(key, v);
    else if (key == "data_seed") data.seed = static_cast<std::uint64_t>(to_double(key, v));
    else throw ContractError("config: unknown key '" + key + "'");
  }
}

ConfigMap describe_config(const TrainConfig& train, const PredictorConfig& predictor, const DatasetSpec& data) {
  std::string channels;
  for (std::size_t i = 0; i < predictor.channels.size(); ++i)
    channels += (i ? "," : "") + std::to_string(predictor.channels[i]);
  return {{"lr0", fmt(train.lr0)},
          {"beta1", fmt(train.beta1)},
          {"beta2", fmt(train.beta2)},
          {"batch", std::to_string(train.batch)},
          {"patch", std::to_string(train.patch)},
          {"steps", std::to_string(train.total_steps)},
          {"seed", std::to_string(train.seed)},
          {"clip_norm", fmt(train.clip_norm)},
          {"augment", train.augment ? "true" : "false"},
          {"threads", std::to_string(train.threads)},
          {"lambda1", fmt(train.loss.recon)},
          {"lambda2", fmt(train.loss.smooth)},
          {"lambda3", fmt(train.loss.residual)},
          {"eps", fmt(train.loss.eps)},
          {"levels", std::to_string(predictor.levels)},
          {"channels", channels},
          {"blocks_per_level", std::to_string(predictor.blocks_per_level)},
          {"r", std::to_string(predictor.geom.r)},
          {"kh", std::to_string(predictor.geom.kh)},
          {"kw", std::to_string(predictor.geom.kw)},
          {"kt", std::to_string(predictor.geom.kt)},
          {"frames", std::to_string(predictor.geom.frames)},
          {"ablation", to_string(predictor.ablation)},
          {"unit_illumination", predictor.unit_illumination ? "true" : "false"},
          {"leaky_slope", fmt(predictor.leaky_slope)},
          {"output_gain", fmt(predictor.output_gain)},
          {"illumination_init", fmt(predictor.illumination_init)},
          {"sequences", std::to_string(data.sequences)},
          {"frames_per_sequence", std::to_string(data.frames)},
          {"size", std::to_string(data.size)},
          {"exposure_min", fmt(data.exposure_min)},
          {"exposure_max", fmt(data.exposure_max)},
          {"gamma_min", fmt(data.gamma_min)},
          {"gamma_max", fmt(data.gamma_max)},
          {"read_sigma", fmt(data.read_sigma)},
          {"shot_scale", fmt(data.shot_scale)},
          {"max_speed", fmt(data.max_speed)},
          {"local_motion", data.local_motion ? "true" : "false"},
          {"quantize", data.quantize ? "true" : "false"},
          {"data_seed", std::to_string(data.seed)}};
}

}  // namespace dp3df
