#pragma once

#include <cstddef>
#include <vector>

#include "gradcam/tensor.hpp"

namespace gcam {

/// Single-channel map, row-major with `height` rows of `width` values.
class Heatmap {
 public:
  Heatmap() = default;
  Heatmap(std::size_t width, std::size_t height, float fill = 0.0f);
  Heatmap(std::size_t width, std::size_t height, std::vector<float> values);

  /// Channel 0 of a [1,H,W] tensor, or a [H,W] tensor.
  static Heatmap from_tensor(const Tensor& t);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  float at(std::size_t x, std::size_t y) const { return values_[y * width_ + x]; }
  float& at(std::size_t x, std::size_t y) { return values_[y * width_ + x]; }
  float operator[](std::size_t i) const { return values_[i]; }
  float& operator[](std::size_t i) { return values_[i]; }

  const std::vector<float>& values() const noexcept { return values_; }
  std::vector<float>& values() noexcept { return values_; }

  float max() const;
  float min() const;

  /// View scaled into [0,1] with the maximum mapped to 1. Non-negative maps
  /// are divided by their maximum, so zero stays zero and all-zero maps stay
  /// all-zero. Maps with negative values are min-max rescaled.
  Heatmap normalized() const;

  friend bool operator==(const Heatmap&, const Heatmap&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<float> values_;
};

}  // namespace gcam
