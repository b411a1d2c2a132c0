#include <doctest.h>

#include <cmath>
#include <cstring>

#include "gradcam/imaging.hpp"
#include "support/checks.hpp"

using gcam::Heatmap;
using support::error_of;

namespace {

const std::filesystem::path kGolden = std::filesystem::path(GRADCAM_SOURCE_DIR) / "tests" / "golden";

void check_table(const Heatmap& got, const std::vector<double>& expected) {
  REQUIRE(got.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CAPTURE(i);
    CHECK(std::abs(got[i] - expected[i]) <= 1e-6);
  }
}

}  // namespace

TEST_CASE("bilinear resize") {
  SUBCASE("hand tables for 2x2 -> 4x4") {
    // Output pixel d samples source (d + 0.5) / 2 - 0.5, i.e. -0.25, 0.25,
    // 0.75, 1.25 with the ends clamped: weights 0, 0.25, 0.75, 1 on the
    // second row/column.
    check_table(gcam::bilinear_resize(Heatmap(2, 2, {0, 0, 0, 1}), 4, 4),
                {0, 0, 0, 0,  //
                 0, 0.0625, 0.1875, 0.25,
                 0, 0.1875, 0.5625, 0.75,
                 0, 0.25, 0.75, 1});
    check_table(gcam::bilinear_resize(Heatmap(2, 2, {0, 1, 1, 0}), 4, 4),
                {0, 0.25, 0.75, 1,  //
                 0.25, 0.375, 0.625, 0.75,
                 0.75, 0.625, 0.375, 0.25,
                 1, 0.75, 0.25, 0});
  }
  SUBCASE("identity size is bit-identical") {
    const Heatmap m(3, 2, {0.1f, -2, 3.5f, 1e-8f, 7, 0});
    CHECK(gcam::bilinear_resize(m, 3, 2) == m);
  }
  SUBCASE("constant maps stay constant") {
    for (auto [w, h] : {std::pair{1, 1}, {5, 3}, {32, 32}, {7, 64}}) {
      const Heatmap out = gcam::bilinear_resize(Heatmap(3, 4, 0.37f), w, h);
      for (float v : out.values()) CHECK(v == 0.37f);
    }
  }
  SUBCASE("downsampling by two averages neighbours") {
    const Heatmap out = gcam::bilinear_resize(Heatmap(4, 1, {0, 1, 2, 3}), 2, 1);
    check_table(out, {0.5, 2.5});
  }
  SUBCASE("bad sizes") {
    CHECK(error_of([] { gcam::bilinear_resize(Heatmap(2, 2), 0, 3); }) == gcam::ErrorCode::InvalidArgument);
  }
}

TEST_CASE("heatmap normalization") {
  const Heatmap pos = Heatmap(2, 2, {0, 1, 2, 4}).normalized();
  CHECK(pos == Heatmap(2, 2, {0, 0.25f, 0.5f, 1}));
  CHECK(Heatmap(3, 1, 0.0f).normalized() == Heatmap(3, 1, 0.0f));
  const Heatmap signed_map = Heatmap(3, 1, {-2, 0, 2}).normalized();
  CHECK(signed_map == Heatmap(3, 1, {0, 0.5f, 1}));
  CHECK(Heatmap(2, 1, {-3, -3}).normalized() == Heatmap(2, 1, 0.0f));
}

TEST_CASE("jet colormap") {
  CHECK(gcam::jet(0.0f) == gcam::Rgb{0, 0, 131});
  CHECK(gcam::jet(0.25f) == gcam::Rgb{0, 60, 170});
  CHECK(gcam::jet(0.5f) == gcam::Rgb{5, 255, 255});
  CHECK(gcam::jet(0.75f) == gcam::Rgb{255, 255, 0});
  CHECK(gcam::jet(1.0f) == gcam::Rgb{255, 0, 0});
  // halfway between the 0.25 and 0.5 control points: (2.5, 157.5, 212.5) rounded
  CHECK(gcam::jet(0.375f) == gcam::Rgb{3, 158, 213});
  CHECK(gcam::jet(-1.0f) == gcam::jet(0.0f));
  CHECK(gcam::jet(2.0f) == gcam::jet(1.0f));
  CHECK(gcam::jet(std::nanf("")) == gcam::jet(0.0f));

  const gcam::Image8 img = gcam::colormap_jet(Heatmap(2, 1, {0, 1}));
  CHECK(img.pixels == std::vector<std::uint8_t>{0, 0, 131, 255, 0, 0});
}

TEST_CASE("overlay blends with rounding") {
  const gcam::Image8 base{1, 1, 3, {100, 0, 255}};
  const gcam::Image8 heat{1, 1, 3, {255, 1, 0}};
  CHECK(gcam::overlay(base, heat).pixels == std::vector<std::uint8_t>{178, 1, 128});
  CHECK(gcam::overlay(base, heat, 1.0).pixels == heat.pixels);
  CHECK(gcam::overlay(base, heat, 0.0).pixels == base.pixels);
  const gcam::Image8 grey{1, 1, 1, {10}};
  CHECK(gcam::overlay(grey, heat).pixels == std::vector<std::uint8_t>{133, 6, 5});
  CHECK(error_of([&] { gcam::overlay(base, gcam::Image8{2, 1, 3, std::vector<std::uint8_t>(6)}); }) ==
        gcam::ErrorCode::Dimension);
}

TEST_CASE("PNM encoding") {
  SUBCASE("1x1 white pixel round-trips") {
    const gcam::Image8 white{1, 1, 3, {255, 255, 255}};
    const std::string bytes = gcam::encode_pnm(white);
    CHECK(bytes == std::string("P6\n1 1\n255\n\xff\xff\xff"));
    CHECK(gcam::decode_pnm(bytes) == white);
  }
  SUBCASE("golden files decode and re-encode byte for byte") {
    const std::string ppm = support::slurp(kGolden / "rgb_2x2.ppm");
    const gcam::Image8 rgb = gcam::decode_pnm(ppm);
    CHECK(rgb == gcam::Image8{2, 2, 3, {255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255}});
    CHECK(gcam::encode_pnm(rgb) == ppm);

    const std::string pgm = support::slurp(kGolden / "gray_3x1.pgm");
    const gcam::Image8 grey = gcam::decode_pnm(pgm);
    CHECK(grey == gcam::Image8{3, 1, 1, {0, 128, 255}});
    CHECK(gcam::encode_pnm(grey) == pgm);
  }
  SUBCASE("header comments are skipped") {
    CHECK(gcam::decode_pnm(std::string("P5\n# made by hand\n1 1\n255\n\x07")) == gcam::Image8{1, 1, 1, {7}});
  }
  SUBCASE("truncated payload reports the offset") {
    const std::string bytes = "P6\n2 2\n255\n" + std::string(11, 'x');
    try {
      gcam::decode_pnm(bytes);
      FAIL("expected a parse error");
    } catch (const gcam::Error& e) {
      CHECK(e.code() == gcam::ErrorCode::Parse);
      CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
  }
  SUBCASE("malformed headers") {
    CHECK(error_of([] { gcam::decode_pnm("P3\n1 1\n255\n000"); }) == gcam::ErrorCode::Parse);
    CHECK(error_of([] { gcam::decode_pnm("P6\n1 1\n65535\n000000"); }) == gcam::ErrorCode::Parse);
    CHECK(error_of([] { gcam::decode_pnm("P6\n0 1\n255\n"); }) == gcam::ErrorCode::Parse);
    CHECK(error_of([] { gcam::decode_pnm("P6\n1 1\n255\n" + std::string(4, 'x')); }) == gcam::ErrorCode::Parse);
  }
  SUBCASE("files") {
    support::TempDir dir("imaging");
    const gcam::Image8 img{3, 2, 3, std::vector<std::uint8_t>(18, 42)};
    gcam::write_pnm(img, dir / "a.ppm");
    CHECK(gcam::read_pnm(dir / "a.ppm") == img);
    CHECK(error_of([&] { gcam::read_pnm(dir / "missing.ppm"); }) == gcam::ErrorCode::Io);
  }
}

TEST_CASE("FMAP encoding") {
  SUBCASE("all zeros round-trip bit-exactly") {
    const Heatmap zeros(5, 3, 0.0f);
    CHECK(gcam::decode_fmap(gcam::encode_fmap(zeros)) == zeros);
  }
  SUBCASE("golden file") {
    const std::string bytes = support::slurp(kGolden / "map_3x2.fmap");
    const Heatmap m = gcam::decode_fmap(bytes);
    CHECK(m == Heatmap(3, 2, {0.0f, 0.25f, -1.5f, 3.0e-7f, 1.0f, 65504.0f}));
    CHECK(gcam::encode_fmap(m) == bytes);
  }
  SUBCASE("special values keep their bits") {
    const Heatmap odd(2, 2, {-0.0f, std::numeric_limits<float>::denorm_min(), std::numeric_limits<float>::infinity(),
                             std::numeric_limits<float>::max()});
    const Heatmap back = gcam::decode_fmap(gcam::encode_fmap(odd));
    CHECK(std::memcmp(back.values().data(), odd.values().data(), 16) == 0);
  }
  SUBCASE("corrupt payloads") {
    const std::string good = gcam::encode_fmap(Heatmap(2, 2, 1.0f));
    CHECK(error_of([&] { gcam::decode_fmap(good.substr(0, good.size() - 1)); }) == gcam::ErrorCode::Parse);
    CHECK(error_of([&] { gcam::decode_fmap(good + "x"); }) == gcam::ErrorCode::Parse);
    CHECK(error_of([&] { gcam::decode_fmap("FMAP2\n1 1\n" + std::string(4, '\0')); }) == gcam::ErrorCode::Parse);
  }
}

TEST_CASE("tensor and 8-bit conversions") {
  const gcam::Tensor t({3, 1, 2}, {0.0f, 1.0f, 0.5f, 0.2f, 2.0f, -1.0f});
  const gcam::Image8 img = gcam::to_image8(t);
  CHECK(img.pixels == std::vector<std::uint8_t>{0, 128, 255, 255, 51, 0});
  const gcam::Tensor back = gcam::to_tensor(img);
  CHECK(back.shape() == t.shape());
  CHECK(back[1] == 1.0f);
  CHECK(gcam::to_image8(back) == img);
}
