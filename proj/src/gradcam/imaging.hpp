#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gradcam/heatmap.hpp"
#include "gradcam/tensor.hpp"

namespace gcam {

/// 8-bit raster: 1 channel (PGM, P5) or 3 channels (PPM, P6), interleaved.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const Image8&, const Image8&) = default;
};

using Rgb = std::array<std::uint8_t, 3>;

/// Half-pixel-centre bilinear resampling with clamped borders:
/// src = (dst + 0.5) * in/out - 0.5.
Heatmap bilinear_resize(const Heatmap& map, std::size_t new_width, std::size_t new_height);

/// Fixed piecewise-linear jet: 0 -> (0,0,131), 0.25 -> (0,60,170),
/// 0.5 -> (5,255,255), 0.75 -> (255,255,0), 1 -> (255,0,0). Input clamped to [0,1].
Rgb jet(float value);
Image8 colormap_jet(const Heatmap& normalized);

/// round(alpha * heat + (1 - alpha) * image), per channel. Grayscale images
/// are expanded to RGB first.
Image8 overlay(const Image8& image, const Image8& heat_rgb, double alpha = 0.5);

std::string encode_pnm(const Image8& image);
Image8 decode_pnm(const std::string& bytes, const std::string& source = "<memory>");
void write_pnm(const Image8& image, const std::filesystem::path& path);
Image8 read_pnm(const std::filesystem::path& path);

/// FMAP1 container: "FMAP1\n<w> <h>\n" then w*h little-endian float32.
std::string encode_fmap(const Heatmap& map);
Heatmap decode_fmap(const std::string& bytes, const std::string& source = "<memory>");
void write_fmap(const Heatmap& map, const std::filesystem::path& path);
Heatmap read_fmap(const std::filesystem::path& path);

/// [C,H,W] floats in [0,1] <-> 8-bit raster (round to nearest, clamped).
Image8 to_image8(const Tensor& image);
Tensor to_tensor(const Image8& image);

}  // namespace gcam
