// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "dp3df/io.hpp"
#include "dp3df/losses.hpp"
#include "dp3df/metrics.hpp"
#include "dp3df/predictor.hpp"
#include "dp3df/synth.hpp"

namespace dp3df {

struct TrainConfig {
  double lr0 = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch = 4;
  int patch = 64;  // low-resolution side
  int total_steps = 2000;
  std::uint64_t seed = 1;
  double clip_norm = 10.0;
  bool augment = true;
  LossWeights loss{};
  int threads = 1;

  void validate(const PredictorConfig& predictor) const;
};

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  long step = 0;
};

/// One bias-corrected Adam update. A non-finite gradient aborts the step
/// before anything is modified and names the offending parameter.
void adam_step(ParamMap<float>& weights, const ParamMap<float>& grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// lr0 * 0.5 * (1 + cos(pi * step / total)).
double cosine_lr(long step, long total, double lr0);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before scaling.
double clip_global_norm(ParamMap<float>& grads, double max_norm);

/// Input window and the matching high-resolution target.
struct TrainingSample {
  Tensor clip;    // [T, h, w, C]
  Tensor target;  // [r h, r w, C]
};

struct Transform {
  int quarter_turns = 0;  // counter-clockwise 90 degree rotations
  bool flip = false;      // horizontal flip applied after rotation
};

/// Same geometric transform on every input frame and on the target.
TrainingSample apply_transform(const TrainingSample& sample, Transform transform);
Tensor transform_frame(const Tensor& frame, Transform transform);  // [H,W,C]

/// Draws a rotation from {0, 90, 180, 270} and a flip with p = 0.5.
TrainingSample augment(const TrainingSample& sample, std::mt19937_64& rng);

/// Random crop of `patch` low-resolution pixels from a random window of the dataset.
TrainingSample draw_sample(const std::vector<SequenceRecord>& dataset, int frames, int patch, std::mt19937_64& rng);

struct LossRecord {
  long step = 0;
  double recon = 0.0;
  double smooth = 0.0;
  double residual = 0.0;
  double total = 0.0;
};

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& log);

struct TrainResult {
  ParamMap<float> weights;
  AdamState optimizer;
  std::vector<LossRecord> log;
};

using StepCallback = std::function<void(const LossRecord&)>;

/// Deterministic given (config.seed, dataset) for any thread count.
TrainResult train(const TrainConfig& config, const PredictorConfig& predictor,
                  const std::vector<SequenceRecord>& dataset, const StepCallback& on_step = {});

/// Forward, loss and full backward for one input window.
template <class T>
struct PipelineStep {
  TotalLoss<T> loss;
  ParamMap<T> grads;
  /// Changes when a perturbation flips any rectifier or clamp branch.
  std::uint64_t kink_signature = 0;
};

template <class T>
PipelineStep<T> pipeline_step(const BasicTensor<T>& clip, const BasicTensor<T>& target, const ParamMap<T>& weights,
                              const PredictorConfig& predictor, const LossWeights& loss);

/// Per-sample loss and weight gradients (the unit the batch is built from).
struct SampleStep {
  TotalLoss<float> loss;
  ParamMap<float> grads;
};
SampleStep sample_step(const TrainingSample& sample, const ParamMap<float>& weights, const PredictorConfig& predictor,
                       const LossWeights& loss);

struct Inference {
  Tensor z;         // intermediate frame
  Tensor residual;  // zeros when the residual head is disabled
  Tensor y;         // final frame
  FilterField<float> field;
};

Inference infer(const Tensor& clip, const ParamMap<float>& weights, const PredictorConfig& predictor);

/// PSNR/SSIM of the final frame against ground truth for every frame.
EvalReport evaluate(const std::vector<SequenceRecord>& sequences, const ParamMap<float>& weights,
                    const PredictorConfig& predictor, int threads = 1);

/// Same protocol for the bicubic + inverse exposure reference.
EvalReport evaluate_baseline(const std::vector<SequenceRecord>& sequences);

/// Checkpoint = container of the weights, names as in the ParamMap.
void save_checkpoint(const std::filesystem::path& path, const ParamMap<float>& weights);
ParamMap<float> load_checkpoint(const std::filesystem::path& path);

/// Applies recognised `key = value` overrides; unknown keys throw ContractError.
void apply_config(const ConfigMap& config, TrainConfig& train, PredictorConfig& predictor, DatasetSpec& data);
ConfigMap describe_config(const TrainConfig& train, const PredictorConfig& predictor, const DatasetSpec& data);

}  // namespace dp3df
