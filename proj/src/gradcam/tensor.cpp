#include "gradcam/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gradcam/error.hpp"

namespace gcam {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::Dimension: return "dimension error";
    case ErrorCode::Lookup: return "lookup error";
    case ErrorCode::Contract: return "contract violation";
    case ErrorCode::ArchitectureIncompatible: return "architecture incompatible";
    case ErrorCode::NoSegment: return "no segment";
    case ErrorCode::AttackFailed: return "attack failed";
    case ErrorCode::Training: return "training error";
    case ErrorCode::Protocol: return "protocol error";
  }
  return "unknown error";
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out << 'x';
    out << shape[i];
  }
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

namespace {

void check_extents(const Shape& shape) {
  if (shape.empty()) fail(ErrorCode::Dimension, "tensor shape must have at least one axis");
  for (auto e : shape) {
    if (e == 0) fail(ErrorCode::Dimension, "tensor extents must be >= 1, got " + shape_to_string(shape));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    fail(ErrorCode::Dimension, std::string(what) + ": expected rank " + std::to_string(rank) +
                                   ", got shape " + shape_to_string(t.shape()));
  }
}

}  // namespace

Tensor::Tensor() : shape_{1}, data_(1, 0.0f) {}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (shape_size(shape_) != data_.size()) {
    fail(ErrorCode::Dimension, "shape " + shape_to_string(shape_) + " needs " +
                                   std::to_string(shape_size(shape_)) + " values, got " +
                                   std::to_string(data_.size()));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

std::size_t window_output_extent(std::size_t in, std::size_t window, std::size_t stride,
                                 std::size_t padding) {
  if (stride == 0) fail(ErrorCode::InvalidArgument, "stride must be positive");
  if (window == 0) fail(ErrorCode::InvalidArgument, "window must be positive");
  if (window > in + 2 * padding) {
    fail(ErrorCode::Dimension, "window " + std::to_string(window) + " exceeds padded extent " +
                                   std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - window) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  const std::size_t channels = input.extent(0), height = input.extent(1), width = input.extent(2);
  const std::size_t out_channels = kernels.extent(0), kh = kernels.extent(2), kw = kernels.extent(3);
  if (kernels.extent(1) != channels) {
    fail(ErrorCode::Dimension, "conv2d: input has " + std::to_string(channels) +
                                   " channels, kernels expect " + std::to_string(kernels.extent(1)));
  }
  if (bias.rank() != 1 || bias.extent(0) != out_channels) {
    fail(ErrorCode::Dimension, "conv2d: bias shape " + shape_to_string(bias.shape()) +
                                   " does not match " + std::to_string(out_channels) + " kernels");
  }
  const std::size_t out_h = window_output_extent(height, kh, stride, padding);
  const std::size_t out_w = window_output_extent(width, kw, stride, padding);

  Tensor out({out_channels, out_h, out_w});
  const float* in = input.data().data();
  const float* w = kernels.data().data();
  std::vector<double> acc(out_h * out_w);
  for (std::size_t k = 0; k < out_channels; ++k) {
    std::fill(acc.begin(), acc.end(), static_cast<double>(bias[k]));
    for (std::size_t c = 0; c < channels; ++c) {
      const float* ic = in + c * height * width;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const auto [oy0, oy1] = detail::valid_taps(out_h, height, ky, stride, padding);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const auto [ox0, ox1] = detail::valid_taps(out_w, width, kx, stride, padding);
          const double wv = w[((k * channels + c) * kh + ky) * kw + kx];
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            const float* row = ic + (oy * stride + ky - padding) * width + kx - padding;
            double* dst = acc.data() + oy * out_w;
            for (std::size_t ox = ox0; ox < ox1; ++ox) dst[ox] += wv * static_cast<double>(row[ox * stride]);
          }
        }
      }
    }
    float* o = out.data().data() + k * out_h * out_w;
    for (std::size_t i = 0; i < acc.size(); ++i) o[i] = static_cast<float>(acc[i]);
  }
  return out;
}

PoolResult maxpool2d(const Tensor& input, std::size_t window, std::size_t stride) {
  require_rank(input, 3, "maxpool2d input");
  const std::size_t channels = input.extent(0), height = input.extent(1), width = input.extent(2);
  if (window > height || window > width) {
    fail(ErrorCode::Dimension, "maxpool2d: window " + std::to_string(window) +
                                   " larger than input " + shape_to_string(input.shape()));
  }
  const std::size_t out_h = window_output_extent(height, window, stride, 0);
  const std::size_t out_w = window_output_extent(width, window, stride, 0);

  PoolResult result{Tensor({channels, out_h, out_w}), {}};
  result.argmax.resize(result.output.size());
  std::size_t o = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox, ++o) {
        std::size_t best = (c * height + oy * stride) * width + ox * stride;
        float best_value = input[best];
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t idx = (c * height + oy * stride + dy) * width + ox * stride + dx;
            // Strict comparison keeps the first maximum in row-major order.
            if (input[idx] > best_value) {
              best_value = input[idx];
              best = idx;
            }
          }
        }
        result.output[o] = best_value;
        result.argmax[o] = best;
      }
    }
  }
  return result;
}

Tensor global_avg_pool(const Tensor& input) {
  require_rank(input, 3, "global_avg_pool input");
  const std::size_t channels = input.extent(0);
  const std::size_t area = input.extent(1) * input.extent(2);
  Tensor out({channels});
  for (std::size_t k = 0; k < channels; ++k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < area; ++i) sum += input[k * area + i];
    out[k] = static_cast<float>(sum / static_cast<double>(area));
  }
  return out;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(weights, 2, "dense weights");
  const std::size_t rows = weights.extent(0), cols = weights.extent(1);
  if (input.size() != cols) {
    fail(ErrorCode::Dimension, "dense: input has " + std::to_string(input.size()) +
                                   " elements, weights expect " + std::to_string(cols));
  }
  if (bias.rank() != 1 || bias.extent(0) != rows) {
    fail(ErrorCode::Dimension, "dense: bias shape " + shape_to_string(bias.shape()) +
                                   " does not match " + std::to_string(rows) + " outputs");
  }
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = bias[r];
    const float* row = weights.data().data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += static_cast<double>(row[c]) * input[c];
    out[r] = static_cast<float>(acc);
  }
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.data()) v = std::max(v, 0.0f);
  return out;
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 1, "softmax input");
  const float peak = *std::max_element(logits.data().begin(), logits.data().end());
  std::vector<double> e(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(static_cast<double>(logits[i]) - peak);
    total += e[i];
  }
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<float>(e[i] / total);
  return out;
}

}  // namespace gcam
