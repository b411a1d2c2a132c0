#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcam/eval.hpp"
#include "support/checks.hpp"

using gcam::BBox;
using gcam::Heatmap;
using support::error_of;

namespace {

gcam::BinaryMask mask_from(std::size_t w, std::size_t h, std::initializer_list<std::pair<std::size_t, std::size_t>> xy) {
  gcam::BinaryMask m{w, h, std::vector<std::uint8_t>(w * h, 0)};
  for (auto [x, y] : xy) m.bits[y * w + x] = 1;
  return m;
}

// Spearman rho straight from the definition: Pearson correlation of average
// ranks, with ranks found by counting.
double brute_spearman(const std::vector<float>& a, const std::vector<float>& b) {
  auto ranks = [](const std::vector<float>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (float u : v) {
        less += u < v[i];
        equal += u == v[i];
      }
      r[i] = less + (equal + 1) / 2;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i] / n;
    mb += rb[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("IoU arithmetic") {
  CHECK(gcam::iou({0, 0, 9, 9}, {0, 0, 9, 9}) == 1.0);
  CHECK(gcam::iou({0, 0, 4, 4}, {5, 5, 9, 9}) == 0.0);
  CHECK(gcam::iou({0, 0, 9, 9}, {5, 5, 14, 14}) == doctest::Approx(25.0 / 175.0).epsilon(1e-12));
  CHECK(gcam::iou({2, 2, 2, 2}, {0, 0, 4, 4}) == doctest::Approx(1.0 / 25.0));
}

TEST_CASE("bounding box extraction") {
  SUBCASE("single pixel") {
    Heatmap h(8, 8);
    h.at(5, 3) = 1.0f;
    CHECK(gcam::extract_bbox(h) == BBox{5, 3, 5, 3});
  }
  SUBCASE("largest of two components wins") {
    // six pixels at rows 1-2, columns 1-3 (value 0.5) and a diagonal run of
    // three stronger pixels that only connects through corners
    Heatmap h(8, 8);
    for (std::size_t y = 1; y <= 2; ++y)
      for (std::size_t x = 1; x <= 3; ++x) h.at(x, y) = 0.5f;
    h.at(5, 5) = 1.0f;
    h.at(6, 6) = 1.0f;
    h.at(7, 7) = 0.9f;
    CHECK(gcam::extract_bbox(h) == BBox{1, 1, 3, 2});
    const auto [labels, count] = gcam::label_components(h, 0.15f);
    CHECK(count == 2);
    CHECK(labels[1 * 8 + 1] == 1);
    CHECK(labels[5 * 8 + 5] == 2);
    CHECK(labels[7 * 8 + 7] == 2);

    SUBCASE("pixels below the threshold drop out") {
      h.at(1, 1) = 0.1f;  // below 0.15 * 1.0
      h.at(2, 1) = 0.1f;
      h.at(3, 1) = 0.1f;
      h.at(1, 2) = 0.1f;
      CHECK(gcam::extract_bbox(h) == BBox{5, 5, 7, 7});
    }
  }
  SUBCASE("equal sizes: the component met first in row-major order") {
    Heatmap h(6, 6);
    h.at(4, 1) = 1.0f;
    h.at(5, 1) = 1.0f;
    h.at(0, 4) = 1.0f;
    h.at(1, 4) = 1.0f;
    CHECK(gcam::extract_bbox(h) == BBox{4, 1, 5, 1});
  }
  SUBCASE("uniform positive map covers the grid") {
    CHECK(gcam::extract_bbox(Heatmap(7, 5, 0.3f)) == BBox{0, 0, 6, 4});
  }
  SUBCASE("threshold fraction") {
    Heatmap h(4, 1, {1.0f, 0.5f, 0.2f, 0.0f});
    CHECK(gcam::extract_bbox(h, 0.15) == BBox{0, 0, 2, 0});
    CHECK(gcam::extract_bbox(h, 0.6) == BBox{0, 0, 0, 0});
  }
  SUBCASE("no segment") {
    CHECK(error_of([] { gcam::extract_bbox(Heatmap(3, 3)); }) == gcam::ErrorCode::NoSegment);
    CHECK(error_of([] { gcam::extract_bbox(Heatmap(3, 3, -1.0f)); }) == gcam::ErrorCode::NoSegment);
  }
}

TEST_CASE("mask bounding box") {
  CHECK(mask_from(5, 5, {{1, 2}, {3, 4}}).bounding_box() == BBox{1, 2, 3, 4});
  CHECK_FALSE(mask_from(5, 5, {}).bounding_box().has_value());
  CHECK(mask_from(5, 5, {{0, 0}, {4, 4}, {2, 2}}).count() == 3);
}

TEST_CASE("localization error counts top-1 and top-k") {
  gcam::EvalRecord hit{"a", 1, {{1, BBox{0, 0, 9, 9}}}, BBox{0, 0, 9, 9}, {}, {}, {}};
  gcam::EvalRecord far{"b", 0, {{0, BBox{0, 0, 4, 4}}}, BBox{5, 5, 9, 9}, {}, {}, {}};
  gcam::EvalRecord overlap{"c", 0, {{0, BBox{0, 0, 9, 9}}}, BBox{5, 5, 14, 14}, {}, {}, {}};
  gcam::EvalRecord second{"d", 2, {{1, BBox{0, 0, 9, 9}}, {2, BBox{0, 0, 9, 9}}}, BBox{0, 0, 9, 9}, {}, {}, {}};
  gcam::EvalRecord empty{"e", 0, {{0, std::nullopt}}, BBox{0, 0, 1, 1}, {}, {}, {}};

  CHECK(gcam::localized(hit, 1));
  CHECK_FALSE(gcam::localized(far, 5));
  CHECK_FALSE(gcam::localized(overlap, 1));
  CHECK(gcam::localized(overlap, 1, 0.1));
  CHECK_FALSE(gcam::localized(second, 1));
  CHECK(gcam::localized(second, 5));
  CHECK_FALSE(gcam::localized(empty, 5));

  const std::vector<gcam::EvalRecord> all{hit, far, overlap, second, empty};
  const auto err = gcam::localization_error(all);
  CHECK(err.top1 == doctest::Approx(4.0 / 5.0));
  CHECK(err.top5 == doctest::Approx(3.0 / 5.0));
}

TEST_CASE("pointing game") {
  Heatmap h(4, 4);
  h.at(2, 1) = 5.0f;
  CHECK(gcam::pointing_game(h, mask_from(4, 4, {{2, 1}})) == gcam::PointOutcome::Hit);
  CHECK(gcam::pointing_game(h, mask_from(4, 4, {{1, 2}})) == gcam::PointOutcome::Miss);

  gcam::BinaryMask full{4, 4, std::vector<std::uint8_t>(16, 1)};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-1, 1);
  for (int t = 0; t < 20; ++t) {
    Heatmap r(4, 4);
    for (auto& v : r.values()) v = u(rng);
    CHECK(gcam::pointing_game(r, full) == gcam::PointOutcome::Hit);
  }

  const Heatmap flat(4, 4, 0.5f);
  CHECK(gcam::argmax_pixel(flat) == std::pair<std::size_t, std::size_t>{0, 0});
  CHECK(gcam::pointing_game(flat, mask_from(4, 4, {{0, 0}})) == gcam::PointOutcome::Hit);
  CHECK(gcam::pointing_game(flat, mask_from(4, 4, {{1, 0}})) == gcam::PointOutcome::Miss);

  CHECK(error_of([&] { gcam::pointing_game(h, mask_from(4, 4, {})); }) == gcam::ErrorCode::Protocol);
  CHECK(error_of([&] { gcam::pointing_game(h, mask_from(3, 4, {{0, 0}})); }) == gcam::ErrorCode::Dimension);
}

TEST_CASE("modified pointing with rejection") {
  SUBCASE("calibration averages the two class means") {
    const std::vector<double> present{0.8, 0.6}, absent{0.2, 0.0};
    CHECK(gcam::calibrate_rejection_threshold(present, absent) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(error_of([&] { gcam::calibrate_rejection_threshold({}, absent); }) == gcam::ErrorCode::Protocol);
  }
  SUBCASE("four hand-built maps") {
    // two present categories (maxima 0.8 and 0.6) and two absent ones
    // (maxima 0.2 and 0).
    Heatmap a(3, 3), b(3, 3), c(3, 3), d(3, 3);
    a.at(0, 0) = 0.8f;
    b.at(2, 2) = 0.6f;
    c.at(1, 1) = 0.2f;
    const std::vector<double> present{a.max(), b.max()}, absent{c.max(), d.max()};
    const double threshold = gcam::calibrate_rejection_threshold(present, absent);
    CHECK(threshold == doctest::Approx(0.4).epsilon(1e-7));

    const std::vector<gcam::BinaryMask> masks{mask_from(3, 3, {{0, 0}}), mask_from(3, 3, {{0, 0}}),
                                              mask_from(3, 3, {}), mask_from(3, 3, {})};
    const std::vector<gcam::ModifiedPointInput> heats{{0, &a}, {1, &b}, {2, &c}, {3, &d}};
    const auto out = gcam::modified_pointing(heats, masks, threshold);
    REQUIRE(out.size() == 4);
    CHECK(out[0].present);
    CHECK(out[0].outcome == gcam::PointOutcome::Hit);
    // present and above threshold, but the argmax is outside the mask
    CHECK(out[1].outcome == gcam::PointOutcome::Miss);
    CHECK_FALSE(out[1].rejected);
    CHECK_FALSE(out[2].present);
    CHECK(out[2].rejected);
    CHECK(out[2].outcome == gcam::PointOutcome::Hit);
    CHECK(out[3].outcome == gcam::PointOutcome::Hit);

    SUBCASE("present category below threshold is wrongly rejected") {
      const auto high = gcam::modified_pointing(heats, masks, 0.9);
      CHECK(high[0].rejected);
      CHECK(high[0].outcome == gcam::PointOutcome::Miss);
    }
  }
}

TEST_CASE("rank correlation") {
  const Heatmap a(4, 1, {1, 2, 3, 4});
  CHECK(gcam::rank_correlation(a, Heatmap(4, 1, {1, 3, 2, 4})).value() == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(gcam::rank_correlation(a, a).value() == doctest::Approx(1.0));
  CHECK(gcam::rank_correlation(a, Heatmap(4, 1, {-1, -2, -3, -4})).value() == doctest::Approx(-1.0));
  CHECK_FALSE(gcam::rank_correlation(a, Heatmap(4, 1, 2.0f)).has_value());
  CHECK_FALSE(gcam::rank_correlation(Heatmap(4, 1, 0.0f), a).has_value());

  CHECK(gcam::average_ranks(std::vector<float>{10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});

  SUBCASE("matches the brute-force oracle with ties") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> level(0, 6);
    double worst = 0;
    for (int t = 0; t < 50; ++t) {
      Heatmap x(6, 5), y(6, 5);
      for (auto& v : x.values()) v = static_cast<float>(level(rng));
      for (auto& v : y.values()) v = static_cast<float>(level(rng)) * 0.5f;
      worst = std::max(worst, std::abs(*gcam::rank_correlation(x, y) - brute_spearman(x.values(), y.values())));
    }
    CHECK(worst <= 1e-9);
  }
  SUBCASE("the first map is resized to the second") {
    const Heatmap small(2, 1, {0, 1});
    const Heatmap big(4, 1, {0, 1, 2, 3});
    CHECK(gcam::rank_correlation(small, big).value() == doctest::Approx(1.0));
  }
}
