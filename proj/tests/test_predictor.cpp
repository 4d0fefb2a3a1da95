// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "doctest.h"
#include "dp3df/filter.hpp"
#include "dp3df/predictor.hpp"
#include "dp3df/trainer.hpp"
#include "oracles.hpp"

using namespace dp3df;

namespace {

PredictorConfig tiny() {
  PredictorConfig c;
  c.levels = 1;
  c.channels = {8};
  c.blocks_per_level = 1;
  return c;
}

}  // namespace

TEST_CASE("output shapes for the default configuration") {
  const PredictorConfig cfg;
  const auto w = init_weights<float>(cfg, 1);
  std::mt19937_64 rng(1);
  const Tensor clip = oracle::uniform<float>({3, 16, 16, 3}, rng);
  const auto out = forward(clip, w, cfg);
  CHECK(out.raw_filters.shape() == Shape{16, 16, 448});
  CHECK(out.residual.shape() == Shape{64, 64, 3});
  CHECK(out.raw_filters.all_finite());
  CHECK(out.residual.all_finite());
  const auto again = forward(clip, w, cfg);
  CHECK(again.raw_filters == out.raw_filters);
  CHECK(again.residual == out.residual);
  CHECK_THROWS_AS(forward(Tensor({3, 12, 12, 3}), w, cfg), ContractError);
  CHECK_THROWS_AS(forward(Tensor({2, 16, 16, 3}), w, cfg), ContractError);
}

TEST_CASE("zero input gives uniform kernels") {
  const PredictorConfig cfg;
  const auto w = init_weights<float>(cfg, 3);
  const auto out = forward(Tensor({3, 16, 16, 3}), w, cfg);
  CHECK(out.raw_filters.all_finite());
  const auto f = normalize_filters(out.raw_filters, cfg.geom);
  for (float t : f.taps.values()) CHECK(t == doctest::Approx(1.0 / 27).epsilon(1e-5));
  for (float l : f.illumination.values()) CHECK(l == doctest::Approx(cfg.illumination_init).epsilon(1e-5));
}

TEST_CASE("init: seeds, biases and Kaiming spread") {
  PredictorConfig cfg;
  CHECK(init_weights<float>(cfg, 5) == init_weights<float>(cfg, 5));
  const auto a = init_weights<float>(cfg, 5), b = init_weights<float>(cfg, 6);
  double diff = 0.0;
  for (const auto& [name, t] : a) diff = std::max(diff, max_abs_diff(t, b.at(name)));
  CHECK(diff > 0.0);
  const std::size_t tap_channels = cfg.geom.kernels() * cfg.geom.taps();
  for (const auto& [name, t] : a) {
    if (name == "filter_head.out.b") {
      // Illumination logits start at -log(L0 - 1).
      for (std::size_t i = 0; i < t.size(); ++i)
        CHECK(t[i] == doctest::Approx(i < tap_channels ? 0.0 : -std::log(cfg.illumination_init - 1.0)));
    } else if (name.ends_with(".b") || name.ends_with(".beta")) {
      for (float v : t.values()) CHECK(v == 0.0f);
    }
    if (name.ends_with(".gamma"))
      for (float v : t.values()) CHECK(v == 1.0f);
  }

  cfg.levels = 1;
  cfg.channels = {128};
  cfg.blocks_per_level = 1;
  const auto big = init_weights<double>(cfg, 11);
  const TensorD& conv = big.at("mid.block0.conv1.w");
  REQUIRE(conv.size() >= 100000);
  const std::size_t fan_in = 128 * 9;
  double s = 0.0, s2 = 0.0;
  for (double v : conv.values()) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(conv.size());
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  const double expected = std::sqrt(2.0 / (1.0 + 0.2 * 0.2)) / std::sqrt(static_cast<double>(fan_in));
  CHECK(kaiming_std(fan_in, 0.2) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(sd / expected - 1.0) <= 0.05);
}

TEST_CASE("backward: zero upstream, frozen layers, single-weight probe") {
  const PredictorConfig cfg = tiny();
  std::mt19937_64 rng(9);
  auto w = init_weights<double>(cfg, 2);
  const TensorD clip = oracle::uniform<double>({3, 8, 8, 3}, rng);
  PredictorTape<double> tape;
  const auto out = forward(clip, w, cfg, &tape);
  const auto zero = backward(tape, w, cfg, TensorD(out.raw_filters.shape()), TensorD(out.residual.shape()));
  for (const auto& [name, g] : zero)
    for (double v : g.values()) CHECK(v == 0.0);

  const TensorD gr = oracle::normal<double>(out.raw_filters.shape(), rng), ge = oracle::normal<double>(out.residual.shape(), rng);
  const std::string frozen[] = {"enc0", "stem"};
  const auto masked = backward(tape, w, cfg, gr, ge, frozen);
  const auto full = backward(tape, w, cfg, gr, ge);
  for (const auto& [name, g] : masked) {
    if (name.starts_with("enc0") || name.starts_with("stem")) {
      for (double v : g.values()) CHECK(v == 0.0);
    } else {
      CHECK(g == full.at(name));
    }
  }

  auto objective = [&] {
    const auto o = forward(clip, w, cfg);
    double s = 0.0;
    for (std::size_t i = 0; i < o.raw_filters.size(); ++i) s += o.raw_filters[i] * gr[i];
    for (std::size_t i = 0; i < o.residual.size(); ++i) s += o.residual[i] * ge[i];
    return s;
  };
  for (const char* name : {"filter_head.out.w", "residual_head.conv.b", "dec0.fuse.w"}) {
    const std::size_t idx = 3;
    const double x0 = w.at(name)[idx], h = 1e-5;
    w.at(name)[idx] = x0 + h;
    const double fp = objective();
    w.at(name)[idx] = x0 - h;
    const double fm = objective();
    w.at(name)[idx] = x0;
    const double num = (fp - fm) / (2 * h), an = full.at(name)[idx];
    CHECK(std::abs(num - an) / std::max({std::abs(num), std::abs(an), 1e-6}) <= 1e-4);
  }
}

TEST_CASE("no_temporal equals a 2D pipeline on the center frame") {
  PredictorConfig cfg = tiny();
  cfg.ablation = Ablation::no_temporal;
  const auto w = init_weights<float>(cfg, 4);
  std::mt19937_64 rng(10);
  const Tensor clip = oracle::uniform<float>({3, 8, 8, 3}, rng);
  const auto inf = infer(clip, w, cfg);
  const FilterGeometry g = cfg.filter_geometry();
  CHECK(g.kt == 1);

  FilterGeometry g2 = g;
  g2.frames = 1;
  Tensor centre({1, 8, 8, 3});
  std::copy(clip.data() + 8 * 8 * 3, clip.data() + 2 * 8 * 8 * 3, centre.data());
  const auto raw = forward(clip, w, cfg).raw_filters;
  const Tensor z2 = apply_dp3df(centre, normalize_filters(raw, g2));
  CHECK(z2 == inf.z);
}

TEST_CASE("ablation geometry and parsing") {
  PredictorConfig cfg;
  cfg.ablation = Ablation::no_spatial;
  CHECK(cfg.filter_geometry().kh == 1);
  CHECK(cfg.filter_geometry().kw == 1);
  CHECK(cfg.filter_geometry().kt == 3);
  cfg.ablation = Ablation::no_residual;
  CHECK_FALSE(cfg.residual_enabled());
  for (const auto& [name, t] : init_weights<float>(cfg, 1)) CHECK_FALSE(name.starts_with("residual_head"));
  CHECK(parse_ablation("no_temporal") == Ablation::no_temporal);
  CHECK(to_string(parse_ablation("full")) == "full");
  CHECK_THROWS_AS(parse_ablation("bogus"), ContractError);
  cfg = PredictorConfig{};
  cfg.channels = {16, 32};
  CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("checkpoint round trip is bit-identical") {
  const PredictorConfig cfg = tiny();
  const auto w = init_weights<float>(cfg, 21);
  const auto path = std::filesystem::temp_directory_path() / "dp3df_test_ckpt.dpt";
  save_checkpoint(path, w);
  const auto back = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(back == w);
  std::mt19937_64 rng(3);
  const Tensor clip = oracle::uniform<float>({3, 8, 8, 3}, rng);
  const auto a = infer(clip, w, cfg), b = infer(clip, back, cfg);
  CHECK(a.y == b.y);
  CHECK(a.z == b.z);
}
