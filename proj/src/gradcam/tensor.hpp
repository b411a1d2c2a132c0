#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <algorithm>
#include <utility>
#include <vector>

namespace gcam {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major float array. Every extent is at least one and the data
/// length always equals the product of the extents.
class Tensor {
 public:
  /// A single zero; exists so aggregates holding tensors stay regular.
  Tensor();
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  // [C,H,W] accessors.
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  /// Same data, new shape of equal size.
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Output of max pooling plus, for each output element, the flat input index
/// that supplied the maximum (first occurrence in row-major window order).
struct PoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;
};

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t padding);
PoolResult maxpool2d(const Tensor& input, std::size_t window, std::size_t stride);
Tensor global_avg_pool(const Tensor& input);
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);
Tensor relu(const Tensor& input);
Tensor softmax(const Tensor& logits);

/// Output spatial extent of a sliding window.
std::size_t window_output_extent(std::size_t in, std::size_t window,
                                 std::size_t stride, std::size_t padding);

namespace detail {

/// Output positions [first, last) whose tap at kernel offset `k` lands inside
/// an input of extent `in`.
inline std::pair<std::size_t, std::size_t> valid_taps(std::size_t out, std::size_t in, std::size_t k,
                                                      std::size_t stride, std::size_t padding) {
  const std::size_t first = k >= padding ? 0 : (padding - k + stride - 1) / stride;
  const std::size_t limit = in + padding;  // need o * stride + k < limit
  const std::size_t last = k >= limit ? 0 : std::min(out, (limit - k - 1) / stride + 1);
  return {first, std::max(first, last)};
}

}  // namespace detail

}  // namespace gcam
