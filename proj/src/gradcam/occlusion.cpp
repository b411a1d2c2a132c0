#include "gradcam/occlusion.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "gradcam/error.hpp"

namespace gcam {

std::size_t default_patch(std::size_t image_side) {
  auto p = static_cast<std::size_t>(std::lround(static_cast<double>(image_side) / 6.0));
  if (p == 0) p = 1;
  if (p % 2 == 0) ++p;
  return p;
}

std::vector<float> channel_mean(std::span<const Tensor> images) {
  if (images.empty()) fail(ErrorCode::InvalidArgument, "channel_mean of no images");
  const std::size_t channels = images.front().extent(0);
  std::vector<double> sum(channels, 0.0);
  std::size_t count = 0;
  for (const auto& img : images) {
    if (img.rank() != 3 || img.extent(0) != channels) {
      fail(ErrorCode::Dimension, "channel_mean: inconsistent image shapes");
    }
    const std::size_t area = img.extent(1) * img.extent(2);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < area; ++i) sum[c] += img[c * area + i];
    }
    count += area;
  }
  std::vector<float> mean(channels);
  for (std::size_t c = 0; c < channels; ++c) mean[c] = static_cast<float>(sum[c] / static_cast<double>(count));
  return mean;
}

namespace {

float score_of(const Tensor& scores, std::size_t category, ScorePoint point) {
  return point == ScorePoint::PreSoftmax ? scores[category] : softmax(scores)[category];
}

std::size_t nearest_grid(std::size_t p, std::size_t stride, std::size_t grid_count) {
  return std::min((p + stride / 2) / stride, grid_count - 1);
}

}  // namespace

OcclusionResult occlusion_map(const ModelSpec& spec, const WeightStore& weights,
                              const Tensor& image, std::size_t category,
                              const OcclusionConfig& config) {
  if (config.patch == 0 || config.patch % 2 == 0) {
    fail(ErrorCode::InvalidArgument, "occlusion patch must be an odd positive size, got " +
                                         std::to_string(config.patch));
  }
  if (config.stride == 0) fail(ErrorCode::InvalidArgument, "occlusion stride must be positive");
  if (category >= spec.categories) {
    fail(ErrorCode::InvalidArgument, "category " + std::to_string(category) + " out of range");
  }
  const std::size_t channels = image.extent(0), height = image.extent(1), width = image.extent(2);
  if (config.fill.size() != 1 && config.fill.size() != channels) {
    fail(ErrorCode::InvalidArgument, "occlusion fill needs 1 or " + std::to_string(channels) + " values");
  }
  auto fill_for = [&](std::size_t c) { return config.fill.size() == 1 ? config.fill[0] : config.fill[c]; };

  const float base = score_of(predict(spec, weights, image), category, config.score_point);
  const std::size_t grid_w = (width + config.stride - 1) / config.stride;
  const std::size_t grid_h = (height + config.stride - 1) / config.stride;
  std::vector<float> grid(grid_w * grid_h);
  const auto half = static_cast<std::ptrdiff_t>(config.patch / 2);

  auto run_rows = [&](std::size_t row_begin, std::size_t row_end) {
    Tensor masked = image;
    for (std::size_t gy = row_begin; gy < row_end; ++gy) {
      for (std::size_t gx = 0; gx < grid_w; ++gx) {
        const auto cy = static_cast<std::ptrdiff_t>(gy * config.stride);
        const auto cx = static_cast<std::ptrdiff_t>(gx * config.stride);
        const std::size_t y0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(cy - half, 0));
        const std::size_t x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(cx - half, 0));
        const std::size_t y1 = std::min<std::size_t>(static_cast<std::size_t>(cy + half), height - 1);
        const std::size_t x1 = std::min<std::size_t>(static_cast<std::size_t>(cx + half), width - 1);
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t y = y0; y <= y1; ++y) {
            for (std::size_t x = x0; x <= x1; ++x) masked.at(c, y, x) = fill_for(c);
          }
        }
        grid[gy * grid_w + gx] = base - score_of(predict(spec, weights, masked), category, config.score_point);
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t y = y0; y <= y1; ++y) {
            for (std::size_t x = x0; x <= x1; ++x) masked.at(c, y, x) = image.at(c, y, x);
          }
        }
      }
    }
  };

  std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, grid_h);
  if (threads <= 1) {
    run_rows(0, grid_h);
  } else {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (grid_h + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk, end = std::min(grid_h, begin + chunk);
      if (begin < end) workers.emplace_back(run_rows, begin, end);
    }
  }

  OcclusionResult result{Heatmap(width, height), grid_w * grid_h};
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t gy = nearest_grid(y, config.stride, grid_h);
    for (std::size_t x = 0; x < width; ++x) {
      result.map.at(x, y) = grid[gy * grid_w + nearest_grid(x, config.stride, grid_w)];
    }
  }
  return result;
}

}  // namespace gcam
