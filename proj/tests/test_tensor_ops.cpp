// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "dp3df/ops.hpp"
#include "dp3df/tensor.hpp"
#include "oracles.hpp"

using namespace dp3df;

TEST_CASE("tensor shape and indexing") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  t(1, 2, 3) = 5.0f;
  CHECK(t[23] == 5.0f);
  CHECK_THROWS_AS(t.dim(3), ContractError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), ContractError);
  CHECK_THROWS_AS(t.reshape({5, 5}), ContractError);
  const Tensor r = t.reshaped({4, 6});
  CHECK(r[23] == 5.0f);
  CHECK(shape_string(r.shape()) == "[4,6]");
}

TEST_CASE("tensor finiteness and grad pairs") {
  Tensor t({3});
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(t.check_finite("probe"), NumericError);
  CHECK_THROWS_AS(GradPair<float>(Tensor({2}), Tensor({3})), ContractError);
  GradPair<float> ok(Tensor({2}), Tensor({2}));
  CHECK(ok.grad.size() == 2);
}

TEST_CASE("conv2d of ones sums the window") {
  const Tensor x({1, 1, 3, 3}, 1.0f), w({1, 1, 3, 3}, 1.0f);
  const Tensor y = conv2d(x, w, Tensor{}, 1, Padding::zero);
  CHECK(y(0, 0, 1, 1) == doctest::Approx(9.0));
  CHECK(y(0, 0, 0, 0) == doctest::Approx(4.0));
}

TEST_CASE("conv2d identity kernel") {
  std::mt19937_64 rng(3);
  const Tensor x = oracle::uniform<float>({1, 1, 5, 4}, rng);
  Tensor w({1, 1, 3, 3});
  w(0, 0, 1, 1) = 1.0f;
  CHECK(conv2d(x, w, Tensor{}, 1, Padding::zero) == x);
  CHECK(conv2d(x, w, Tensor{}, 1, Padding::replicate) == x);
}

TEST_CASE("conv2d matches the brute-force loop") {
  std::mt19937_64 rng(11);
  struct Case {
    std::size_t n, c, h, w, o, kh, kw;
    int stride;
    Padding pad;
  };
  const Case cases[] = {{1, 2, 5, 5, 3, 3, 3, 1, Padding::zero},   {2, 3, 7, 6, 4, 3, 3, 2, Padding::zero},
                        {1, 2, 6, 7, 2, 5, 3, 1, Padding::replicate}, {1, 4, 9, 8, 3, 3, 3, 2, Padding::replicate},
                        {2, 5, 4, 4, 6, 1, 1, 1, Padding::zero},   {1, 3, 5, 5, 2, 1, 1, 2, Padding::zero}};
  for (const Case& cs : cases) {
    const Tensor x = oracle::normal<float>({cs.n, cs.c, cs.h, cs.w}, rng);
    const Tensor w = oracle::normal<float>({cs.o, cs.c, cs.kh, cs.kw}, rng);
    const Tensor b = oracle::normal<float>({cs.o}, rng);
    const Tensor y = conv2d(x, w, b, cs.stride, cs.pad);
    const TensorD ref = oracle::conv2d(x, w, b, cs.stride, cs.pad == Padding::replicate);
    REQUIRE(y.shape() == ref.shape());
    CHECK(oracle::max_diff(y, ref) <= 1e-5);
  }
}

TEST_CASE("conv2d shape contracts") {
  CHECK_THROWS_AS(conv2d(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor{}, 1, Padding::zero), ContractError);
  CHECK_THROWS_AS(conv2d(Tensor({1, 2, 4, 4}), Tensor({1, 2, 2, 2}), Tensor{}, 1, Padding::zero), ContractError);
  CHECK_THROWS_AS(conv2d(Tensor({1, 2, 4, 4}), Tensor({1, 2, 3, 3}), Tensor{}, 3, Padding::zero), ContractError);
  CHECK_THROWS_AS(conv2d(Tensor({1, 2, 4, 4}), Tensor({2, 2, 3, 3}), Tensor({3}), 1, Padding::zero), ContractError);
  try {
    conv2d(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor{}, 1, Padding::zero);
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("channel") != std::string::npos);
  }
}

TEST_CASE("pixel_shuffle convention") {
  const Tensor x({1, 4, 1, 1}, std::vector<float>{1, 2, 3, 4});
  const Tensor y = pixel_shuffle(x, 2);
  CHECK(y.shape() == Shape({1, 1, 2, 2}));
  CHECK(oracle::vec(y) == std::vector<float>{1, 2, 3, 4});
  std::mt19937_64 rng(5);
  const Tensor z = oracle::uniform<float>({2, 3, 4, 5}, rng);
  CHECK(pixel_shuffle(z, 1) == z);
  CHECK_THROWS_AS(pixel_shuffle(Tensor({1, 6, 2, 2}), 2), ContractError);
}

TEST_CASE("pixel_shuffle matches the index formula and inverts exactly") {
  std::mt19937_64 rng(9);
  const int r = 2;
  const Tensor x = oracle::uniform<float>({1, 8, 3, 3}, rng);
  const Tensor y = pixel_shuffle(x, r);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b) CHECK(y(0, c, i * 2 + a, j * 2 + b) == x(0, c * 4 + a * 2 + b, i, j));
  CHECK(pixel_unshuffle(y, r) == x);
  const Tensor big = oracle::uniform<float>({2, 3 * 16, 2, 3}, rng);
  CHECK(pixel_unshuffle(pixel_shuffle(big, 4), 4) == big);
}

TEST_CASE("softmax values") {
  const TensorD a({3}, std::vector<double>{0, 0, 0});
  const TensorD sa = softmax_axis(a, 0);
  for (double v : sa.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  const TensorD b({2}, std::vector<double>{0, std::log(3.0)});
  const TensorD sb = softmax_axis(b, 0);
  CHECK(sb[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(sb[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax sums to one and ignores shifts") {
  std::mt19937_64 rng(21);
  const Tensor x = oracle::normal<float>({27}, rng, 3.0);
  Tensor shifted = x;
  for (float& v : shifted.values()) v += 7.5f;
  const Tensor s = softmax_axis(x, 0), t = softmax_axis(shifted, 0);
  double sum = 0.0;
  for (float v : s.values()) {
    CHECK(v > 0.0f);
    sum += v;
  }
  CHECK(std::abs(sum - 1.0) <= 1e-6);
  CHECK(oracle::max_diff(s, t) <= 1e-6);
  const Tensor m = oracle::normal<float>({4, 5, 6}, rng, 2.0);
  const Tensor sm = softmax_axis(m, 1);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 6; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < 5; ++j) acc += sm(i, j, k);
      CHECK(std::abs(acc - 1.0) <= 1e-6);
    }
}

TEST_CASE("instance_norm cases") {
  const Tensor flat({1, 1, 2, 2}, 1.0f);
  const Tensor z = instance_norm(flat, Tensor{}, Tensor{}, 1e-5);
  for (float v : z.values()) CHECK(v == 0.0f);
  const TensorD two({1, 1, 1, 2}, std::vector<double>{0, 2});
  const TensorD n = instance_norm(two, TensorD{}, TensorD{}, 1e-12);
  CHECK(n[0] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(n[1] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(instance_norm(Tensor({1, 1, 1, 1}), Tensor{}, Tensor{}, 1e-5), ContractError);
}

TEST_CASE("instance_norm moments and affine") {
  std::mt19937_64 rng(4);
  const Tensor x = oracle::normal<float>({2, 3, 8, 9}, rng, 4.0);
  const Tensor y = instance_norm(x, Tensor{}, Tensor{}, 1e-8);
  const std::size_t hw = 72;
  for (std::size_t p = 0; p < 6; ++p) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < hw; ++i) mean += y[p * hw + i];
    mean /= hw;
    for (std::size_t i = 0; i < hw; ++i) var += (y[p * hw + i] - mean) * (y[p * hw + i] - mean);
    var /= hw;
    CHECK(std::abs(mean) <= 1e-6);
    CHECK(std::abs(var - 1.0) <= 1e-4);
  }
  const Tensor gamma({3}, std::vector<float>{2, 3, 4}), beta({3}, std::vector<float>{1, -1, 0.5f});
  const Tensor a = instance_norm(x, gamma, beta, 1e-8);
  for (std::size_t c = 0; c < 3; ++c)
    CHECK(a(1, c, 2, 3) == doctest::Approx(gamma[c] * y(1, c, 2, 3) + beta[c]).epsilon(1e-5));
}

TEST_CASE("leaky_relu and channel concat") {
  const Tensor x({4}, std::vector<float>{-2, -0.5f, 0, 3});
  const Tensor y = leaky_relu(x, 0.2);
  CHECK(oracle::vec(y) == std::vector<float>{-0.4f, -0.1f, 0, 3});
  const Tensor g = leaky_relu_backward(x, Tensor({4}, 1.0f), 0.2);
  CHECK(oracle::vec(g) == std::vector<float>{0.2f, 0.2f, 1, 1});
  std::mt19937_64 rng(1);
  const Tensor a = oracle::uniform<float>({2, 2, 3, 3}, rng), b = oracle::uniform<float>({2, 3, 3, 3}, rng);
  const Tensor ab = concat_channels(a, b);
  CHECK(ab.shape() == Shape({2, 5, 3, 3}));
  CHECK(ab(1, 3, 2, 1) == b(1, 1, 2, 1));
  const auto [a2, b2] = split_channels(ab, 2);
  CHECK(a2 == a);
  CHECK(b2 == b);
}

TEST_CASE("primitive backwards against central differences") {
  std::mt19937_64 rng(77);
  const double h = 1e-3;
  auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); };

  SUBCASE("conv2d") {
    for (Padding pad : {Padding::zero, Padding::replicate})
      for (int stride : {1, 2}) {
        TensorD x = oracle::normal<double>({2, 2, 5, 6}, rng);
        TensorD w = oracle::normal<double>({3, 2, 3, 3}, rng);
        TensorD b = oracle::normal<double>({3}, rng);
        const TensorD y = conv2d(x, w, b, stride, pad);
        const TensorD up = oracle::normal<double>(y.shape(), rng);
        const auto g = conv2d_backward(x, w, true, up, stride, pad);
        auto loss = [&] {
          const TensorD o = conv2d(x, w, b, stride, pad);
          double s = 0.0;
          for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * up[i];
          return s;
        };
        for (auto [t, gt] : {std::pair{&x, &g.input}, std::pair{&w, &g.weights}, std::pair{&b, &g.bias}})
          for (std::size_t i = 0; i < t->size(); i += 3) {
            const double x0 = (*t)[i];
            (*t)[i] = x0 + h;
            const double fp = loss();
            (*t)[i] = x0 - h;
            const double fm = loss();
            (*t)[i] = x0;
            CHECK(rel((*gt)[i], (fp - fm) / (2 * h)) <= 1e-4);
          }
      }
  }
  SUBCASE("softmax and instance_norm") {
    TensorD x = oracle::normal<double>({2, 3, 3, 4}, rng);
    TensorD gamma = oracle::uniform<double>({3}, rng, 0.5, 1.5), beta = oracle::normal<double>({3}, rng);
    const TensorD up = oracle::normal<double>(x.shape(), rng);
    InstanceNormCache<double> cache;
    instance_norm(x, gamma, beta, 1e-5, &cache);
    const auto g = instance_norm_backward(cache, gamma, up);
    const TensorD gs = softmax_axis_backward(softmax_axis(x, 1), up, 1);
    auto dot = [&](const TensorD& o) {
      double s = 0.0;
      for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * up[i];
      return s;
    };
    for (std::size_t i = 0; i < x.size(); i += 2) {
      const double x0 = x[i];
      x[i] = x0 + h;
      const double np = dot(instance_norm(x, gamma, beta, 1e-5)), sp = dot(softmax_axis(x, 1));
      x[i] = x0 - h;
      const double nm = dot(instance_norm(x, gamma, beta, 1e-5)), sm = dot(softmax_axis(x, 1));
      x[i] = x0;
      CHECK(rel(g.input[i], (np - nm) / (2 * h)) <= 1e-4);
      CHECK(rel(gs[i], (sp - sm) / (2 * h)) <= 1e-4);
    }
  }
}
