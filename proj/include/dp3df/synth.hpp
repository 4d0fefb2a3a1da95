// SPDX-License-Identifier: Apache-2.0
//
// Synthetic low-light / noisy / low-resolution video pairs. High-quality
// frames are rendered procedurally (gradients, moving shapes, sinusoidal
// texture under global and local motion); the degraded counterpart is
// box-downsampled, darkened, gamma-compressed and corrupted with
// signal-dependent shot noise plus read noise.
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "dp3df/tensor.hpp"

namespace dp3df {

struct DegradeParams {
  int r = 4;
  double exposure = 0.2;       // multiplicative darkening, (0, 1]
  double gamma = 2.0;
  double read_sigma = 0.01;
  double shot_scale = 0.03;
  std::uint64_t seed = 0;

  void validate() const;
};

/// hnn [rH, rW, C] -> lln [H, W, C]:
/// box average by r, y = (exposure x)^gamma, y + shot sqrt(y) n1 + read n2, clamp to [0, 1].
Tensor degrade(const Tensor& hnn_frame, const DegradeParams& params, std::mt19937_64& rng);

/// Noise stream for frame `frame_index` of a sequence seeded with params.seed.
std::mt19937_64 frame_rng(const DegradeParams& params, std::size_t frame_index);

Tensor box_downsample(const Tensor& frame, int r);

struct SequenceRecord {
  std::vector<Tensor> lln;  // [H, W, C] each
  std::vector<Tensor> hnn;  // [rH, rW, C] each
  int r = 4;
  double fps = 24.0;
  DegradeParams params;
  double velocity_x = 0.0;  // global motion, high-res pixels per frame
  double velocity_y = 0.0;

  void validate() const;
};

/// Indices t-N .. t+N clamped to [0, count).
std::vector<std::size_t> window_indices(std::size_t t, int n, std::size_t count);

/// [2N+1, H, W, C] window of frames centred on t.
Tensor window(const std::vector<Tensor>& frames, std::size_t t, int n);

struct DatasetSpec {
  int sequences = 8;
  int frames = 16;
  int size = 80;  // low-resolution side
  int r = 4;
  double exposure_min = 0.2, exposure_max = 0.3;
  double gamma_min = 1.8, gamma_max = 2.2;
  double read_sigma = 0.01;
  double shot_scale = 0.03;
  double max_speed = 2.0;  // high-res pixels per frame
  bool local_motion = true;
  bool quantize = true;    // store frames on the 8-bit grid the PPM files use
  std::uint64_t seed = 1;

  void validate() const;
};

std::vector<SequenceRecord> make_dataset(const DatasetSpec& spec, int threads = 1);

/// Disjoint evaluation split: same generator settings, different seed.
DatasetSpec held_out(const DatasetSpec& train, int sequences = 2);

/// Writes seq_XXXX/{lln,hnn}/frame_NNNN.ppm and seq_XXXX/meta.txt.
void save_dataset(const std::filesystem::path& root, const std::vector<SequenceRecord>& sequences);
std::vector<SequenceRecord> load_dataset(const std::filesystem::path& root);

/// Keys cubic (a = -0.5), half-pixel centres, replicated borders.
Tensor bicubic_upsample(const Tensor& frame, int r);

/// Reference restoration: bicubic upsample of the frame, then the inverse
/// of the exposure/gamma curve, clamped to [0, 1].
Tensor baseline_restore(const Tensor& lln_frame, const DegradeParams& params);

}  // namespace dp3df
