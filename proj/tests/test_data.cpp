// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "doctest.h"
#include "dp3df/io.hpp"
#include "dp3df/metrics.hpp"
#include "dp3df/synth.hpp"
#include "oracles.hpp"

using namespace dp3df;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("dp3df_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

DegradeParams clean(int r, double exposure, double gamma) {
  DegradeParams p;
  p.r = r;
  p.exposure = exposure;
  p.gamma = gamma;
  p.read_sigma = 0.0;
  p.shot_scale = 0.0;
  return p;
}

}  // namespace

TEST_CASE("degrade: identity and the analytic darkening") {
  std::mt19937_64 rng(1);
  const Tensor f = oracle::uniform<float>({8, 8, 3}, rng);
  CHECK(degrade(f, clean(1, 1.0, 1.0), rng) == f);
  const Tensor one({8, 8, 3}, 1.0f);
  const Tensor dark = degrade(one, clean(4, 0.25, 2.0), rng);
  for (float v : dark.values()) CHECK(v == doctest::Approx(0.0625).epsilon(1e-6));
  CHECK(degrade(f, clean(4, 1.0, 1.0), rng).shape() == Shape{2, 2, 3});
}

TEST_CASE("degrade: box average") {
  Tensor f({2, 4, 1});
  for (std::size_t i = 0; i < 8; ++i) f[i] = static_cast<float>(i) / 8.0f;
  const Tensor d = box_downsample(f, 2);
  CHECK(d.shape() == Shape{1, 2, 1});
  CHECK(d[0] == doctest::Approx((0 + 1 + 4 + 5) / 32.0));
  CHECK(d[1] == doctest::Approx((2 + 3 + 6 + 7) / 32.0));
  CHECK_THROWS_AS(box_downsample(Tensor({3, 4, 1}), 2), ContractError);
}

TEST_CASE("degrade: noise variance follows shot and read terms") {
  DegradeParams p = clean(1, 1.0, 1.0);
  p.shot_scale = 0.03;
  p.read_sigma = 0.01;
  const double v = 0.3;
  const Tensor f({200, 200, 3}, static_cast<float>(v));
  std::mt19937_64 rng(5);
  const Tensor d = degrade(f, p, rng);
  double s = 0.0, s2 = 0.0;
  for (float x : d.values()) {
    s += x;
    s2 += static_cast<double>(x) * x;
  }
  const double n = static_cast<double>(d.size()), mean = s / n, var = s2 / n - mean * mean;
  const double expected = 0.03 * 0.03 * v + 0.01 * 0.01;
  CHECK(std::abs(mean - v) < 1e-3);
  CHECK(std::abs(var / expected - 1.0) <= 0.1);
}

TEST_CASE("degrade: monotone in exposure and deterministic per frame stream") {
  std::mt19937_64 rng(2);
  const Tensor f = oracle::uniform<float>({8, 8, 3}, rng);
  Tensor prev = degrade(f, clean(2, 0.05, 2.2), rng);
  for (double e : {0.1, 0.2, 0.3, 0.6, 1.0}) {
    const Tensor cur = degrade(f, clean(2, e, 2.2), rng);
    for (std::size_t i = 0; i < cur.size(); ++i) CHECK(prev[i] <= cur[i]);
    prev = cur;
  }
  DegradeParams p = clean(2, 0.2, 2.0);
  p.read_sigma = 0.02;
  p.seed = 44;
  auto a = frame_rng(p, 3), b = frame_rng(p, 3), c = frame_rng(p, 4);
  const Tensor da = degrade(f, p, a);
  CHECK(da == degrade(f, p, b));
  CHECK_FALSE(da == degrade(f, p, c));
}

TEST_CASE("window clamps at the sequence ends") {
  CHECK(window_indices(0, 1, 10) == std::vector<std::size_t>{0, 0, 1});
  CHECK(window_indices(5, 1, 10) == std::vector<std::size_t>{4, 5, 6});
  CHECK(window_indices(9, 2, 10) == std::vector<std::size_t>{7, 8, 9, 9, 9});
  std::mt19937_64 rng(3);
  std::vector<Tensor> frames;
  for (int t = 0; t < 7; ++t) frames.push_back(oracle::uniform<float>({3, 4, 2}, rng));
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t t = rng() % 7;
    const int n = static_cast<int>(rng() % 3);
    const Tensor w = window(frames, t, n);
    CHECK(w.shape() == Shape{static_cast<std::size_t>(2 * n + 1), 3, 4, 2});
    for (int k = -n; k <= n; ++k) {
      const long src = oracle::clampi(static_cast<long>(t) + k, 0, 6);
      for (std::size_t i = 0; i < 24; ++i) CHECK(w[static_cast<std::size_t>(k + n) * 24 + i] == frames[static_cast<std::size_t>(src)][i]);
    }
  }
}

TEST_CASE("dataset: determinism, shapes and global motion") {
  DatasetSpec spec;
  spec.sequences = 3;
  spec.frames = 4;
  spec.size = 24;
  spec.local_motion = false;
  const auto a = make_dataset(spec), b = make_dataset(spec, 3);
  REQUIRE(a.size() == 3);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(a[s].hnn == b[s].hnn);
    CHECK(a[s].lln == b[s].lln);
    CHECK(a[s].lln.size() == 4);
    CHECK(a[s].lln[0].shape() == Shape{24, 24, 3});
    CHECK(a[s].hnn[0].shape() == Shape{96, 96, 3});
  }
  spec.seed = 2;
  CHECK_FALSE(make_dataset(spec)[0].hnn == a[0].hnn);
  CHECK_FALSE(held_out(spec).seed == spec.seed);

  // Correlation peak between consecutive ground-truth frames.
  for (const auto& seq : a) {
    const Tensor& f0 = seq.hnn[0];
    const Tensor& f1 = seq.hnn[1];
    const long n = 96, m = 8;
    double best = -1e300;
    long bx = 0, by = 0;
    for (long dy = -3; dy <= 3; ++dy)
      for (long dx = -3; dx <= 3; ++dx) {
        double num = 0, s0 = 0, s1 = 0, q0 = 0, q1 = 0, cnt = 0;
        for (long i = m; i < n - m; ++i)
          for (long j = m; j < n - m; ++j)
            for (long c = 0; c < 3; ++c) {
              const double x = f0(i, j, c), y = f1(i + dy, j + dx, c);
              num += x * y;
              s0 += x;
              s1 += y;
              q0 += x * x;
              q1 += y * y;
              cnt += 1;
            }
        const double cov = num / cnt - (s0 / cnt) * (s1 / cnt);
        const double ncc = cov / std::sqrt((q0 / cnt - s0 * s0 / cnt / cnt) * (q1 / cnt - s1 * s1 / cnt / cnt));
        if (ncc > best) {
          best = ncc;
          bx = dx;
          by = dy;
        }
      }
    CHECK(bx == static_cast<long>(seq.velocity_x));
    CHECK(by == static_cast<long>(seq.velocity_y));
  }
}

TEST_CASE("dataset round-trips through the on-disk layout") {
  DatasetSpec spec;
  spec.sequences = 2;
  spec.frames = 3;
  spec.size = 8;
  const auto data = make_dataset(spec);
  const auto dir = scratch_dir("dataset");
  save_dataset(dir, data);
  CHECK(std::filesystem::exists(dir / "seq_0001" / "lln" / "frame_0002.ppm"));
  CHECK(std::filesystem::exists(dir / "seq_0000" / "meta.txt"));
  const auto back = load_dataset(dir);
  std::filesystem::remove_all(dir);
  REQUIRE(back.size() == 2);
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(back[s].lln == data[s].lln);
    CHECK(back[s].hnn == data[s].hnn);
    CHECK(back[s].r == data[s].r);
    CHECK(back[s].params.exposure == doctest::Approx(data[s].params.exposure));
  }
}

TEST_CASE("baseline restore inverts clean darkening") {
  std::mt19937_64 rng(8);
  const Tensor flat({16, 16, 3}, 0.5f);
  const DegradeParams p = clean(4, 0.25, 2.0);
  const Tensor lo = degrade(flat, p, rng);
  const Tensor up = baseline_restore(lo, p);
  CHECK(up.shape() == Shape{16, 16, 3});
  for (float v : up.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-5));
  const Tensor ramp = oracle::uniform<float>({5, 5, 3}, rng);
  const Tensor bi = bicubic_upsample(ramp, 1);
  CHECK(oracle::max_diff(bi, ramp) <= 1e-6);
}

TEST_CASE("psnr fixtures") {
  const Tensor a({10, 10, 3}, 0.5f);
  Tensor b({10, 10, 3}, 0.6f);
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));
  CHECK(psnr(a, a) == kPsnrCap);
  std::mt19937_64 rng(1);
  const Tensor x = oracle::uniform<float>({9, 7, 3}, rng), y = oracle::uniform<float>({9, 7, 3}, rng);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (static_cast<double>(x[i]) - y[i]) * (static_cast<double>(x[i]) - y[i]);
  CHECK(std::abs(psnr(x, y) - 10.0 * std::log10(1.0 / (s / x.size()))) <= 1e-9);
  CHECK(std::abs(mse(x, y) - s / x.size()) <= 1e-12);

  const Tensor base = oracle::uniform<float>({32, 32, 3}, rng, 0.3, 0.7);
  const Tensor noise = oracle::normal<float>({32, 32, 3}, rng);
  double prev = 1e9;
  for (double amp : {0.001, 0.01, 0.03, 0.05, 0.1}) {
    Tensor n = base;
    for (std::size_t i = 0; i < n.size(); ++i) n[i] += static_cast<float>(amp * noise[i]);
    const double p = psnr(base, n);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim fixtures") {
  std::mt19937_64 rng(2);
  const Tensor a = oracle::uniform<float>({24, 20, 3}, rng);
  CHECK(std::abs(ssim(a, a) - 1.0) <= 1e-6);
  Tensor inv = a;
  for (auto& v : inv.values()) v = 1.0f - v;
  CHECK(ssim(a, inv) < 0.2);
  const Tensor b = oracle::uniform<float>({24, 20, 3}, rng);
  CHECK(ssim(a, b) == ssim(b, a));
  CHECK(ssim(a, b) >= -1.0);
  CHECK(ssim(a, b) <= 1.0);

  const double c = 0.4, d = 0.5, c1 = 1e-4;
  const Tensor ca({16, 16, 3}, static_cast<float>(c)), cb({16, 16, 3}, static_cast<float>(d));
  CHECK(ssim(ca, cb) == doctest::Approx((2 * c * d + c1) / (c * c + d * d + c1)).epsilon(1e-5));
  CHECK_THROWS_AS(ssim(Tensor({8, 8, 3}), Tensor({8, 8, 3})), ContractError);
}

TEST_CASE("eval report aggregates per sequence") {
  EvalReport r;
  r.label = "x";
  const Tensor a({12, 12, 3}, 0.5f), b({12, 12, 3}, 0.6f);
  r.add("s0", 0, a, b);
  r.add("s0", 1, a, a);
  r.add("s1", 0, a, b);
  CHECK(r.frames.size() == 3);
  CHECK(r.mean_psnr() == doctest::Approx((20.0 + 100.0 + 20.0) / 3));
  const auto means = r.sequence_means();
  REQUIRE(means.size() == 2);
  CHECK(means[0].psnr == doctest::Approx(60.0));
  std::ostringstream csv;
  r.write_csv(csv);
  CHECK(csv.str().find("s1") != std::string::npos);
}

TEST_CASE("ppm format") {
  const Tensor white({1, 1, 3}, 1.0f);
  const std::string header = "P6\n1 1\n255\n";
  std::vector<std::uint8_t> expected(header.begin(), header.end());
  expected.insert(expected.end(), {255, 255, 255});
  CHECK(encode_ppm(white) == expected);

  std::mt19937_64 rng(4);
  const Tensor f = oracle::uniform<float>({7, 5, 3}, rng);
  const auto dir = scratch_dir("ppm");
  write_ppm(dir / "f.ppm", f);
  const Tensor back = read_ppm(dir / "f.ppm");
  std::filesystem::remove_all(dir);
  CHECK(back.shape() == f.shape());
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(std::abs(back[i] - f[i]) <= 0.5 / 255 + 1e-7);
    CHECK(back[i] == static_cast<float>(std::round(f[i] * 255.0) / 255.0));
  }
  CHECK(quantize_8bit(f) == back);

  auto bytes = encode_ppm(f);
  bytes[1] = '5';
  CHECK_THROWS_AS(decode_ppm(bytes), FormatError);
  bytes = encode_ppm(f);
  bytes.resize(bytes.size() - 1);
  CHECK_THROWS_AS(decode_ppm(bytes), FormatError);
}

TEST_CASE("container format") {
  std::mt19937_64 rng(5);
  const TensorMap m{{"alpha", oracle::normal<float>({2, 3}, rng)}, {"beta.w", oracle::normal<float>({4, 1, 2}, rng)}};
  const auto bytes = encode_container(m);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "DPT1");
  CHECK(decode_container(bytes) == m);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_container(bad), FormatError);

  // Every truncation point fails; payload cuts name their section.
  const std::size_t beta_payload_end = bytes.size();
  const std::size_t beta_payload_begin = beta_payload_end - 8 * 4;
  for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
    const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    CHECK_THROWS_AS(decode_container(part), FormatError);
    if (cut > beta_payload_begin) CHECK_THROWS_WITH(decode_container(part), doctest::Contains("beta.w"));
  }
  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(decode_container(extra), FormatError);
}

TEST_CASE("config text") {
  const ConfigMap c = parse_config("# comment\n  a = 1  \nb=two # trailing\n\n");
  CHECK(c.at("a") == "1");
  CHECK(c.at("b") == "two");
  CHECK(c.size() == 2);
  CHECK(parse_config(format_config(c)) == c);
  CHECK_THROWS_AS(parse_config("novalue\n"), FormatError);
}
