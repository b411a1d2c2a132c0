#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gradcam/autodiff.hpp"
#include "gradcam/heatmap.hpp"
#include "gradcam/nn.hpp"

namespace gcam {

struct OcclusionConfig {
  std::size_t patch = 5;    // odd side length in pixels
  std::size_t stride = 1;
  std::vector<float> fill;  // one value, or one per channel
  ScorePoint score_point = ScorePoint::PreSoftmax;
  std::size_t threads = 0;  // 0: hardware concurrency
};

/// Odd patch size near image_side / 6.
std::size_t default_patch(std::size_t image_side);

/// Per-channel mean over a set of [C,H,W] images.
std::vector<float> channel_mean(std::span<const Tensor> images);

struct OcclusionResult {
  /// score(image) - score(masked at p); positive means evidence for the category.
  Heatmap map;
  std::size_t masked_passes = 0;
};

/// Slides a patch x patch square filled with `config.fill` over the image,
/// centred on every stride-grid point (clipped at the border), and records the
/// score drop. Pixels between grid points take the nearest grid value. The
/// result does not depend on the thread count.
OcclusionResult occlusion_map(const ModelSpec& spec, const WeightStore& weights,
                              const Tensor& image, std::size_t category,
                              const OcclusionConfig& config);

}  // namespace gcam
