#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcam/error.hpp"
#include "gradcam/tensor.hpp"
#include "support/reference.hpp"

using gcam::Tensor;

namespace {

double max_abs_diff(const Tensor& a, const ref::Array& b) {
  REQUIRE(a.shape() == b.shape);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b.v[i]));
  return m;
}

}  // namespace

TEST_CASE("tensor construction checks extents") {
  CHECK(Tensor({2, 3}).size() == 6);
  CHECK_THROWS_AS(Tensor({2, 0}), gcam::Error);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), gcam::Error);
  CHECK(Tensor({4}, {1, 2, 3, 4}).reshaped({2, 2}).shape() == gcam::Shape{2, 2});
  CHECK_THROWS_AS(Tensor({4}).reshaped({3}), gcam::Error);
}

TEST_CASE("conv2d small cases") {
  SUBCASE("1x1 kernel of weight 2 doubles the input") {
    const Tensor out = gcam::conv2d(Tensor({1, 3, 3}, 1.0f), Tensor({1, 1, 1, 1}, 2.0f), Tensor({1}), 1, 0);
    CHECK(out == Tensor({1, 3, 3}, 2.0f));
  }
  SUBCASE("full-window sum") {
    const Tensor out = gcam::conv2d(Tensor({1, 2, 2}, {1, 2, 3, 4}), Tensor({1, 1, 2, 2}, 1.0f), Tensor({1}), 1, 0);
    CHECK(out == Tensor({1, 1, 1}, {10}));
  }
  SUBCASE("stride 2, pad 1 against the loop oracle") {
    std::mt19937_64 rng(3);
    const Tensor in = ref::random_tensor({2, 5, 5}, rng);
    const Tensor k = ref::random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = ref::random_tensor({3}, rng);
    CHECK(max_abs_diff(gcam::conv2d(in, k, b, 2, 1), ref::conv2d(ref::from(in), k, b, 2, 1)) <= 1e-6);
  }
  SUBCASE("channel mismatch is a dimension error") {
    try {
      gcam::conv2d(Tensor({2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1}), 1, 0);
      FAIL("expected a throw");
    } catch (const gcam::Error& e) {
      CHECK(e.code() == gcam::ErrorCode::Dimension);
    }
  }
  SUBCASE("kernel larger than the padded input") {
    CHECK_THROWS_AS(gcam::conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 5, 5}), Tensor({1}), 1, 1), gcam::Error);
  }
}

TEST_CASE("maxpool2d") {
  const auto r = gcam::maxpool2d(Tensor({1, 2, 2}, {1, 2, 3, 4}), 2, 2);
  CHECK(r.output == Tensor({1, 1, 1}, {4}));
  CHECK(r.argmax == std::vector<std::size_t>{3});

  SUBCASE("ties go to the first element of the window") {
    const auto c = gcam::maxpool2d(Tensor({1, 4, 4}, 7.0f), 2, 2);
    CHECK(c.output == Tensor({1, 2, 2}, 7.0f));
    CHECK(c.argmax == std::vector<std::size_t>{0, 2, 8, 10});
  }
  SUBCASE("window larger than input") {
    CHECK_THROWS_AS(gcam::maxpool2d(Tensor({1, 2, 2}), 3, 1), gcam::Error);
  }
}

TEST_CASE("global_avg_pool and dense") {
  CHECK(gcam::global_avg_pool(Tensor({1, 2, 2}, {1, 2, 3, 4})) == Tensor({1}, {2.5f}));
  Tensor maps({3, 2, 2});
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < 4; ++i) maps[k * 4 + i] = static_cast<float>(k) + 0.5f;
  CHECK(gcam::global_avg_pool(maps) == Tensor({3}, {0.5f, 1.5f, 2.5f}));

  const Tensor x({3}, {1, -2, 3});
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0f;
  CHECK(gcam::dense(x, eye, Tensor({3})) == x);
  CHECK(gcam::dense(x, Tensor({2, 3}), Tensor({2}, {4, 5})) == Tensor({2}, {4, 5}));
  CHECK_THROWS_AS(gcam::dense(x, Tensor({2, 4}), Tensor({2})), gcam::Error);
}

TEST_CASE("relu and softmax") {
  CHECK(gcam::relu(Tensor({3}, {-1, 0, 2})) == Tensor({3}, {0, 0, 2}));
  const Tensor half = gcam::softmax(Tensor({2}, {0, 0}));
  CHECK(half[0] == doctest::Approx(0.5));
  CHECK(half[1] == doctest::Approx(0.5));
  const Tensor big = gcam::softmax(Tensor({3}, {1000, 1000, 1000}));
  for (float v : big.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor logits = ref::random_tensor({7}, rng, -20, 20);
    Tensor shifted = logits;
    for (auto& v : shifted.data()) v += 13.0f;
    const Tensor p = gcam::softmax(logits), q = gcam::softmax(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      sum += p[i];
      CHECK(std::abs(p[i] - q[i]) <= 1e-6);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("ops match loop oracles on 100 randomized shapes") {
  std::mt19937_64 rng(2024);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = pick(1, 4), h = pick(3, 12), w = pick(3, 12);
    const Tensor in = ref::random_tensor({c, h, w}, rng);

    const std::size_t k = pick(1, 4), kh = pick(1, 3), kw = pick(1, 3);
    const std::size_t stride = pick(1, 3), pad = pick(0, 2);
    const Tensor kern = ref::random_tensor({k, c, kh, kw}, rng);
    const Tensor bias = ref::random_tensor({k}, rng);
    worst = std::max(worst, max_abs_diff(gcam::conv2d(in, kern, bias, stride, pad),
                                         ref::conv2d(ref::from(in), kern, bias, stride, pad)));

    const std::size_t window = pick(1, std::min<std::size_t>(3, std::min(h, w)));
    const std::size_t pstride = pick(1, 3);
    worst = std::max(worst, max_abs_diff(gcam::maxpool2d(in, window, pstride).output,
                                         ref::maxpool(ref::from(in), window, pstride)));

    worst = std::max(worst, max_abs_diff(gcam::global_avg_pool(in), ref::gap(ref::from(in))));

    const std::size_t n = c * h * w, m = pick(1, 6);
    const Tensor flat = in.reshaped({n});
    const Tensor dw = ref::random_tensor({m, n}, rng);
    const Tensor db = ref::random_tensor({m}, rng);
    worst = std::max(worst, max_abs_diff(gcam::dense(flat, dw, db), ref::dense(ref::from(flat), dw, db)));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("ops are deterministic") {
  std::mt19937_64 rng(5);
  const Tensor in = ref::random_tensor({3, 9, 9}, rng);
  const Tensor k = ref::random_tensor({4, 3, 3, 3}, rng);
  const Tensor b = ref::random_tensor({4}, rng);
  CHECK(gcam::conv2d(in, k, b, 1, 1) == gcam::conv2d(in, k, b, 1, 1));
}
