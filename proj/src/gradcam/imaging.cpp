#include "gradcam/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "gradcam/byte_order.hpp"
#include "gradcam/error.hpp"
#include "gradcam/file_util.hpp"

namespace gcam {

// ---------------------------------------------------------------------------
// Heatmap

Heatmap::Heatmap(std::size_t width, std::size_t height, float fill)
    : width_(width), height_(height), values_(width * height, fill) {}

Heatmap::Heatmap(std::size_t width, std::size_t height, std::vector<float> values)
    : width_(width), height_(height), values_(std::move(values)) {
  if (values_.size() != width * height) {
    fail(ErrorCode::Dimension, "heatmap " + std::to_string(width) + "x" + std::to_string(height) +
                                   " needs " + std::to_string(width * height) + " values, got " +
                                   std::to_string(values_.size()));
  }
}

Heatmap Heatmap::from_tensor(const Tensor& t) {
  if (t.rank() == 2) return Heatmap(t.extent(1), t.extent(0), t.values());
  if (t.rank() == 3 && t.extent(0) == 1) return Heatmap(t.extent(2), t.extent(1), t.values());
  fail(ErrorCode::Dimension, "cannot view tensor " + shape_to_string(t.shape()) + " as a heatmap");
}

float Heatmap::max() const {
  if (values_.empty()) fail(ErrorCode::Dimension, "max of an empty heatmap");
  return *std::max_element(values_.begin(), values_.end());
}

float Heatmap::min() const {
  if (values_.empty()) fail(ErrorCode::Dimension, "min of an empty heatmap");
  return *std::min_element(values_.begin(), values_.end());
}

Heatmap Heatmap::normalized() const {
  Heatmap out(width_, height_);
  if (values_.empty()) return out;
  const float lo = min();
  const float hi = max();
  if (lo >= 0.0f) {
    if (hi <= 0.0f) return out;
    for (std::size_t i = 0; i < values_.size(); ++i) out.values_[i] = values_[i] / hi;
    return out;
  }
  const float range = hi - lo;
  if (!(range > 0.0f)) return out;
  for (std::size_t i = 0; i < values_.size(); ++i) out.values_[i] = (values_[i] - lo) / range;
  return out;
}

// ---------------------------------------------------------------------------
// Resampling and colour

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> taps(std::size_t in, std::size_t out) {
  std::vector<Tap> result(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double last = static_cast<double>(in - 1);
  for (std::size_t d = 0; d < out; ++d) {
    const double src = std::clamp((static_cast<double>(d) + 0.5) * scale - 0.5, 0.0, last);
    const auto lo = static_cast<std::size_t>(std::floor(src));
    result[d] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return result;
}

}  // namespace

Heatmap bilinear_resize(const Heatmap& map, std::size_t new_width, std::size_t new_height) {
  if (new_width == 0 || new_height == 0) {
    fail(ErrorCode::InvalidArgument, "resize target must be at least 1x1");
  }
  if (map.empty()) fail(ErrorCode::InvalidArgument, "cannot resize an empty heatmap");
  const auto xs = taps(map.width(), new_width);
  const auto ys = taps(map.height(), new_height);
  Heatmap out(new_width, new_height);
  for (std::size_t y = 0; y < new_height; ++y) {
    const Tap& ty = ys[y];
    for (std::size_t x = 0; x < new_width; ++x) {
      const Tap& tx = xs[x];
      const double top = (1.0 - tx.frac) * map.at(tx.lo, ty.lo) + tx.frac * map.at(tx.hi, ty.lo);
      const double bottom = (1.0 - tx.frac) * map.at(tx.lo, ty.hi) + tx.frac * map.at(tx.hi, ty.hi);
      out.at(x, y) = static_cast<float>((1.0 - ty.frac) * top + ty.frac * bottom);
    }
  }
  return out;
}

Rgb jet(float value) {
  struct Stop {
    double at;
    double r, g, b;
  };
  static constexpr Stop kStops[] = {
      {0.0, 0, 0, 131}, {0.25, 0, 60, 170}, {0.5, 5, 255, 255}, {0.75, 255, 255, 0}, {1.0, 255, 0, 0},
  };
  const double v = std::isnan(value) ? 0.0 : std::clamp(static_cast<double>(value), 0.0, 1.0);
  std::size_t seg = 0;
  while (seg + 2 < std::size(kStops) && v > kStops[seg + 1].at) ++seg;
  const Stop& a = kStops[seg];
  const Stop& b = kStops[seg + 1];
  const double t = (v - a.at) / (b.at - a.at);
  auto mix = [t](double lo, double hi) {
    return static_cast<std::uint8_t>(std::lround(lo + t * (hi - lo)));
  };
  return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}

Image8 colormap_jet(const Heatmap& normalized) {
  Image8 img{normalized.width(), normalized.height(), 3, {}};
  img.pixels.reserve(normalized.size() * 3);
  for (float v : normalized.values()) {
    const Rgb c = jet(v);
    img.pixels.insert(img.pixels.end(), c.begin(), c.end());
  }
  return img;
}

Image8 overlay(const Image8& image, const Image8& heat_rgb, double alpha) {
  if (image.width != heat_rgb.width || image.height != heat_rgb.height || heat_rgb.channels != 3) {
    fail(ErrorCode::Dimension, "overlay: image and heat raster sizes differ");
  }
  Image8 out{image.width, image.height, 3, std::vector<std::uint8_t>(image.width * image.height * 3)};
  for (std::size_t p = 0; p < image.width * image.height; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double base = image.pixels[p * image.channels + (image.channels == 3 ? c : 0)];
      const double heat = heat_rgb.pixels[p * 3 + c];
      out.pixels[p * 3 + c] =
          static_cast<std::uint8_t>(std::lround(alpha * heat + (1.0 - alpha) * base));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// PNM

std::string encode_pnm(const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    fail(ErrorCode::InvalidArgument, "PNM supports 1 or 3 channels");
  }
  if (image.pixels.size() != image.width * image.height * image.channels) {
    fail(ErrorCode::Dimension, "image pixel buffer does not match its dimensions");
  }
  std::string out = (image.channels == 3 ? "P6\n" : "P5\n") + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorCode::Parse, source_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      error(std::string("expected ") + what);
    }
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > (1u << 24)) error(std::string(what) + " too large");
      ++pos_;
    }
    return v;
  }

  void single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      error("expected a single whitespace before the payload");
    }
    ++pos_;
  }

  void literal(std::string_view text, const char* what) {
    if (bytes_.compare(pos_, text.size(), text) != 0) error(std::string("expected ") + what);
    pos_ += text.size();
  }

  std::size_t pos() const noexcept { return pos_; }
  const std::string& source() const noexcept { return source_; }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

void check_payload(const HeaderReader& r, std::size_t available, std::size_t needed) {
  if (available < needed) {
    fail(ErrorCode::Parse, r.source() + ": truncated payload at byte offset " +
                               std::to_string(r.pos() + available) + ", expected " +
                               std::to_string(needed) + " payload bytes, found " + std::to_string(available));
  }
  if (available > needed) {
    fail(ErrorCode::Parse, r.source() + ": " + std::to_string(available - needed) +
                               " unexpected trailing bytes at byte offset " +
                               std::to_string(r.pos() + needed));
  }
}

}  // namespace

Image8 decode_pnm(const std::string& bytes, const std::string& source) {
  HeaderReader r(bytes, source);
  Image8 img;
  if (bytes.compare(0, 2, "P6") == 0) {
    img.channels = 3;
  } else if (bytes.compare(0, 2, "P5") == 0) {
    img.channels = 1;
  } else {
    r.error("bad magic (expected P5 or P6)");
  }
  r.literal(bytes.substr(0, 2), "magic");
  img.width = r.number("width");
  img.height = r.number("height");
  if (img.width == 0 || img.height == 0) r.error("zero image dimension");
  const std::size_t maxval = r.number("maxval");
  if (maxval != 255) r.error("unsupported maxval " + std::to_string(maxval) + " (only 255)");
  r.single_whitespace();
  const std::size_t needed = img.width * img.height * img.channels;
  check_payload(r, bytes.size() - r.pos(), needed);
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos()), bytes.end());
  return img;
}

void write_pnm(const Image8& image, const std::filesystem::path& path) {
  detail::write_file(path, encode_pnm(image));
}

Image8 read_pnm(const std::filesystem::path& path) {
  return decode_pnm(detail::read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// FMAP

std::string encode_fmap(const Heatmap& map) {
  std::string out = "FMAP1\n" + std::to_string(map.width()) + " " + std::to_string(map.height()) + "\n";
  detail::append_f32le(out, map.values());
  return out;
}

Heatmap decode_fmap(const std::string& bytes, const std::string& source) {
  HeaderReader r(bytes, source);
  r.literal("FMAP1\n", "FMAP1 magic");
  const std::size_t w = r.number("width");
  r.literal(" ", "a space between width and height");
  const std::size_t h = r.number("height");
  r.literal("\n", "newline after dimensions");
  if (w == 0 || h == 0) r.error("zero map dimension");
  check_payload(r, bytes.size() - r.pos(), w * h * 4);
  return Heatmap(w, h, detail::read_f32le(bytes.data() + r.pos(), w * h));
}

void write_fmap(const Heatmap& map, const std::filesystem::path& path) {
  detail::write_file(path, encode_fmap(map));
}

Heatmap read_fmap(const std::filesystem::path& path) {
  return decode_fmap(detail::read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Tensor conversion

Image8 to_image8(const Tensor& image) {
  if (image.rank() != 3 || (image.extent(0) != 1 && image.extent(0) != 3)) {
    fail(ErrorCode::Dimension, "expected a [1|3,H,W] image tensor, got " + shape_to_string(image.shape()));
  }
  const std::size_t c = image.extent(0), h = image.extent(1), w = image.extent(2);
  Image8 img{w, h, c, std::vector<std::uint8_t>(c * h * w)};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        const double v = std::clamp(static_cast<double>(image.at(k, y, x)), 0.0, 1.0);
        img.pixels[(y * w + x) * c + k] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return img;
}

Tensor to_tensor(const Image8& image) {
  Tensor t({image.channels, image.height, image.width});
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t k = 0; k < image.channels; ++k) {
        t.at(k, y, x) = static_cast<float>(image.pixels[(y * image.width + x) * image.channels + k]) / 255.0f;
      }
    }
  }
  return t;
}

}  // namespace gcam
