#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradcam/heatmap.hpp"

namespace gcam {

/// Inclusive pixel box.
struct BBox {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  std::size_t width() const noexcept { return x1 - x0 + 1; }
  std::size_t height() const noexcept { return y1 - y0 + 1; }
  std::size_t area() const noexcept { return width() * height(); }
  friend bool operator==(const BBox&, const BBox&) = default;
};

double iou(const BBox& a, const BBox& b);

struct BinaryMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1, row-major

  bool at(std::size_t x, std::size_t y) const { return bits[y * width + x] != 0; }
  std::size_t count() const;
  /// Tight box around the set pixels; nullopt when empty.
  std::optional<BBox> bounding_box() const;
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

inline constexpr double kDefaultThresholdFrac = 0.15;
inline constexpr double kDefaultIou = 0.5;

/// Binarizes at threshold_frac * max, labels 8-connected components and
/// returns the tight box of the largest one (ties: smallest top-left corner
/// in row-major order). Throws a no-segment error when max <= 0.
BBox extract_bbox(const Heatmap& heat, double threshold_frac = kDefaultThresholdFrac);

/// Connected components (8-connectivity) of the pixels with value >= threshold;
/// returns a label per pixel (0 = background, components numbered from 1 in
/// row-major discovery order) and the number of components.
std::pair<std::vector<std::size_t>, std::size_t> label_components(const Heatmap& heat, float threshold);

enum class PointOutcome { Hit, Miss };

struct Prediction {
  std::size_t category = 0;
  std::optional<BBox> box;  // nullopt: the map had no segment
};

/// Per-image result. Optional fields are filled only for protocols that ran.
struct EvalRecord {
  std::string image_id;
  std::size_t true_category = 0;
  std::vector<Prediction> predictions;  // top-k, best first
  std::optional<BBox> gt_box;
  std::optional<double> iou;  // true-category box vs ground truth
  std::optional<PointOutcome> pointing;
  std::optional<double> rank_correlation;
};

struct LocalizationErrors {
  double top1 = 0.0;
  double top5 = 0.0;
};

/// Correct at top-k when one of the first k predictions names the true
/// category and its box overlaps the ground truth with IoU >= iou_threshold.
bool localized(const EvalRecord& record, std::size_t k, double iou_threshold = kDefaultIou);
LocalizationErrors localization_error(std::span<const EvalRecord> records,
                                      double iou_threshold = kDefaultIou);

/// (x, y) of the maximum; ties go to the first pixel in row-major order.
std::pair<std::size_t, std::size_t> argmax_pixel(const Heatmap& heat);

/// Hit iff the argmax pixel lies inside the mask. Throws a protocol error for
/// empty masks and a dimension error when resolutions differ.
PointOutcome pointing_game(const Heatmap& heat, const BinaryMask& gt_mask);

struct ModifiedPointInput {
  std::size_t category = 0;
  const Heatmap* heat = nullptr;  // raw (unnormalized) map
};

struct ModifiedPointOutcome {
  std::size_t category = 0;
  bool present = false;
  bool rejected = false;
  PointOutcome outcome = PointOutcome::Miss;
};

/// Average of the mean map maximum over present categories and the mean map
/// maximum over absent ones. Throws a protocol error if either list is empty.
double calibrate_rejection_threshold(std::span<const double> present_maxima,
                                     std::span<const double> absent_maxima);

/// Pointing with rejection: absent categories hit iff max < threshold;
/// present categories hit iff max >= threshold and the argmax is in their mask.
/// `masks` is indexed by category; empty masks mark absent categories.
std::vector<ModifiedPointOutcome> modified_pointing(std::span<const ModifiedPointInput> heats,
                                                    std::span<const BinaryMask> masks,
                                                    double threshold);

/// Spearman rho with average ranks for ties. `a` is bilinearly resized to b's
/// resolution first. nullopt when either map is constant.
std::optional<double> rank_correlation(const Heatmap& a, const Heatmap& b);

/// Average ranks (1-based) of a sequence.
std::vector<double> average_ranks(std::span<const float> values);

}  // namespace gcam
