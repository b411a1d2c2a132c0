#include <doctest.h>

#include <random>
#include <string>

#include "gradcam/fixtures.hpp"
#include "gradcam/occlusion.hpp"
#include "support/checks.hpp"
#include "support/reference.hpp"

using gcam::Tensor;
using support::error_of;

namespace {

// The GAP fixture's layer stack on a 4x4 input.
gcam::ModelSpec small_gap_spec() {
  std::string text = gcam::fixture_spec_text(gcam::FixtureArch::Gap);
  const std::string from = "height=32 width=32";
  text.replace(text.find(from), from.size(), "height=4 width=4");
  return gcam::parse_model_spec(text);
}

}  // namespace

TEST_CASE("default patch and channel mean") {
  CHECK(gcam::default_patch(32) == 5);
  CHECK(gcam::default_patch(64) == 11);
  CHECK(gcam::default_patch(24) == 5);
  CHECK(gcam::default_patch(2) == 1);
  const std::vector<Tensor> imgs{Tensor({2, 1, 2}, {0, 1, 2, 3}), Tensor({2, 1, 2}, {1, 2, 3, 4})};
  CHECK(gcam::channel_mean(imgs) == std::vector<float>{1.0f, 3.0f});
  CHECK(error_of([] { gcam::channel_mean({}); }) == gcam::ErrorCode::InvalidArgument);
}

TEST_CASE("occlusion map small cases") {
  const auto spec = small_gap_spec();
  const auto weights = gcam::init_weights(spec, 4);
  std::mt19937_64 rng(8);
  const Tensor image = ref::random_tensor({3, 4, 4}, rng, 0, 1);
  auto score = [&](const Tensor& x) { return gcam::predict(spec, weights, x)[1]; };

  SUBCASE("fill equal to the image changes nothing") {
    gcam::OcclusionConfig cfg;
    cfg.patch = 3;
    cfg.fill = {0.4f};
    const auto r = gcam::occlusion_map(spec, weights, Tensor({3, 4, 4}, 0.4f), 1, cfg);
    for (float v : r.map.values()) CHECK(v == 0.0f);
  }
  SUBCASE("patch covering the whole image") {
    gcam::OcclusionConfig cfg;
    cfg.patch = 7;
    cfg.fill = {0.2f, 0.5f, 0.8f};
    Tensor filled({3, 4, 4});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 16; ++i) filled[c * 16 + i] = cfg.fill[c];
    const float expected = score(image) - score(filled);
    const auto r = gcam::occlusion_map(spec, weights, image, 1, cfg);
    for (float v : r.map.values()) CHECK(v == expected);
  }
  SUBCASE("patch 1, stride 1: sixteen independent differences") {
    gcam::OcclusionConfig cfg;
    cfg.patch = 1;
    cfg.fill = {0.0f};
    const auto r = gcam::occlusion_map(spec, weights, image, 1, cfg);
    CHECK(r.masked_passes == 16);
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t x = 0; x < 4; ++x) {
        Tensor masked = image;
        for (std::size_t c = 0; c < 3; ++c) masked.at(c, y, x) = 0.0f;
        CHECK(r.map.at(x, y) == score(image) - score(masked));
      }
    }
  }
  SUBCASE("post-softmax scoring") {
    gcam::OcclusionConfig cfg;
    cfg.patch = 7;
    cfg.fill = {0.0f};
    cfg.score_point = gcam::ScorePoint::PostSoftmax;
    const float expected =
        gcam::softmax(gcam::predict(spec, weights, image))[1] - gcam::softmax(gcam::predict(spec, weights, Tensor({3, 4, 4})))[1];
    CHECK(gcam::occlusion_map(spec, weights, image, 1, cfg).map.at(2, 2) == expected);
  }
  SUBCASE("argument checks") {
    gcam::OcclusionConfig cfg;
    cfg.fill = {0.0f};
    cfg.patch = 4;
    CHECK(error_of([&] { gcam::occlusion_map(spec, weights, image, 1, cfg); }) == gcam::ErrorCode::InvalidArgument);
    cfg.patch = 3;
    cfg.stride = 0;
    CHECK(error_of([&] { gcam::occlusion_map(spec, weights, image, 1, cfg); }) == gcam::ErrorCode::InvalidArgument);
    cfg.stride = 1;
    cfg.fill = {0, 0};
    CHECK(error_of([&] { gcam::occlusion_map(spec, weights, image, 1, cfg); }) == gcam::ErrorCode::InvalidArgument);
    cfg.fill = {0};
    CHECK(error_of([&] { gcam::occlusion_map(spec, weights, image, 3, cfg); }) == gcam::ErrorCode::InvalidArgument);
  }
}

TEST_CASE("stride grid and threads") {
  const auto spec = gcam::fixture_spec(gcam::FixtureArch::Gap);
  const auto weights = gcam::init_weights(spec, 9);
  const auto ex = gcam::make_shapes_example({1, 32, 3, 0.0}, 0);
  gcam::OcclusionConfig cfg;
  cfg.patch = 5;
  cfg.stride = 4;
  cfg.fill = {0.5f};
  cfg.threads = 1;
  const auto one = gcam::occlusion_map(spec, weights, ex.image, 0, cfg);
  CHECK(one.masked_passes == 64);

  SUBCASE("thread count does not change the map") {
    for (std::size_t t : {2u, 3u, 8u}) {
      cfg.threads = t;
      CHECK(gcam::occlusion_map(spec, weights, ex.image, 0, cfg).map == one.map);
    }
  }
  SUBCASE("grid points hold their own difference, neighbours copy the nearest") {
    const float base = gcam::predict(spec, weights, ex.image)[0];
    for (std::size_t gy : {0u, 3u, 7u}) {
      for (std::size_t gx : {0u, 5u}) {
        Tensor masked = ex.image;
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t y = (gy * 4 >= 2 ? gy * 4 - 2 : 0); y <= std::min<std::size_t>(gy * 4 + 2, 31); ++y)
            for (std::size_t x = (gx * 4 >= 2 ? gx * 4 - 2 : 0); x <= std::min<std::size_t>(gx * 4 + 2, 31); ++x)
              masked.at(c, y, x) = 0.5f;
        const float expected = base - gcam::predict(spec, weights, masked)[0];
        CHECK(one.map.at(gx * 4, gy * 4) == expected);
        CHECK(one.map.at(gx * 4 + 1, gy * 4) == expected);
        CHECK(one.map.at(gx * 4, gy * 4 + 1) == expected);
      }
    }
    // (2,2) is nearer to grid point (4,4) under round-half-up
    CHECK(one.map.at(2, 2) == one.map.at(4, 4));
    CHECK(one.map.at(31, 31) == one.map.at(28, 28));
  }
}
