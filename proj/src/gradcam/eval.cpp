#include "gradcam/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcam/error.hpp"
#include "gradcam/imaging.hpp"

namespace gcam {

double iou(const BBox& a, const BBox& b) {
  const std::size_t ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
  const std::size_t ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
  const std::size_t inter = (ix0 > ix1 || iy0 > iy1) ? 0 : (ix1 - ix0 + 1) * (iy1 - iy0 + 1);
  const std::size_t uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

std::optional<BBox> BinaryMask::bounding_box() const {
  std::optional<BBox> box;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      if (!at(x, y)) continue;
      if (!box) {
        box = BBox{x, y, x, y};
      } else {
        box->x0 = std::min(box->x0, x);
        box->x1 = std::max(box->x1, x);
        box->y1 = std::max(box->y1, y);
      }
    }
  }
  return box;
}

std::pair<std::vector<std::size_t>, std::size_t> label_components(const Heatmap& heat, float threshold) {
  const std::size_t w = heat.width(), h = heat.height();
  std::vector<std::size_t> labels(w * h, 0);
  std::size_t next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < w * h; ++start) {
    if (labels[start] != 0 || !(heat[start] >= threshold)) continue;
    labels[start] = ++next;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const auto px = static_cast<std::ptrdiff_t>(p % w), py = static_cast<std::ptrdiff_t>(p / w);
      for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
          const auto nx = px + dx, ny = py + dy;
          if (nx < 0 || ny < 0 || nx >= static_cast<std::ptrdiff_t>(w) || ny >= static_cast<std::ptrdiff_t>(h)) continue;
          const std::size_t q = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
          if (labels[q] == 0 && heat[q] >= threshold) {
            labels[q] = next;
            stack.push_back(q);
          }
        }
      }
    }
  }
  return {std::move(labels), next};
}

BBox extract_bbox(const Heatmap& heat, double threshold_frac) {
  if (heat.empty()) fail(ErrorCode::NoSegment, "empty heatmap has no segment");
  const float peak = heat.max();
  if (!(peak > 0.0f)) fail(ErrorCode::NoSegment, "heatmap has no positive values");
  const auto threshold = static_cast<float>(threshold_frac * static_cast<double>(peak));
  auto [labels, count] = label_components(heat, threshold);

  struct Component {
    std::size_t size = 0;
    BBox box{};
    bool seen = false;
  };
  std::vector<Component> comps(count + 1);
  const std::size_t w = heat.width();
  for (std::size_t p = 0; p < labels.size(); ++p) {
    if (labels[p] == 0) continue;
    Component& c = comps[labels[p]];
    const std::size_t x = p % w, y = p / w;
    if (!c.seen) {
      c.box = {x, y, x, y};
      c.seen = true;
    }
    ++c.size;
    c.box.x0 = std::min(c.box.x0, x);
    c.box.x1 = std::max(c.box.x1, x);
    c.box.y0 = std::min(c.box.y0, y);
    c.box.y1 = std::max(c.box.y1, y);
  }
  const Component* best = nullptr;
  for (std::size_t i = 1; i <= count; ++i) {
    const Component& c = comps[i];
    if (!best || c.size > best->size ||
        (c.size == best->size && std::pair(c.box.y0, c.box.x0) < std::pair(best->box.y0, best->box.x0))) {
      best = &c;
    }
  }
  return best->box;
}

bool localized(const EvalRecord& record, std::size_t k, double iou_threshold) {
  if (!record.gt_box) fail(ErrorCode::Protocol, "record '" + record.image_id + "' has no ground-truth box");
  for (std::size_t i = 0; i < std::min(k, record.predictions.size()); ++i) {
    const Prediction& p = record.predictions[i];
    if (p.category == record.true_category && p.box && iou(*p.box, *record.gt_box) >= iou_threshold) {
      return true;
    }
  }
  return false;
}

LocalizationErrors localization_error(std::span<const EvalRecord> records, double iou_threshold) {
  if (records.empty()) return {};
  std::size_t top1 = 0, top5 = 0;
  for (const auto& r : records) {
    if (localized(r, 1, iou_threshold)) ++top1;
    if (localized(r, 5, iou_threshold)) ++top5;
  }
  const auto n = static_cast<double>(records.size());
  return {1.0 - static_cast<double>(top1) / n, 1.0 - static_cast<double>(top5) / n};
}

std::pair<std::size_t, std::size_t> argmax_pixel(const Heatmap& heat) {
  if (heat.empty()) fail(ErrorCode::Dimension, "argmax of an empty heatmap");
  const auto it = std::max_element(heat.values().begin(), heat.values().end());
  const auto i = static_cast<std::size_t>(it - heat.values().begin());
  return {i % heat.width(), i / heat.width()};
}

PointOutcome pointing_game(const Heatmap& heat, const BinaryMask& gt_mask) {
  if (gt_mask.count() == 0) fail(ErrorCode::Protocol, "pointing game needs a non-empty mask");
  if (heat.width() != gt_mask.width || heat.height() != gt_mask.height) {
    fail(ErrorCode::Dimension, "pointing game: heatmap " + std::to_string(heat.width()) + "x" +
                                   std::to_string(heat.height()) + " vs mask " + std::to_string(gt_mask.width) +
                                   "x" + std::to_string(gt_mask.height));
  }
  const auto [x, y] = argmax_pixel(heat);
  return gt_mask.at(x, y) ? PointOutcome::Hit : PointOutcome::Miss;
}

double calibrate_rejection_threshold(std::span<const double> present_maxima,
                                     std::span<const double> absent_maxima) {
  if (present_maxima.empty() || absent_maxima.empty()) {
    fail(ErrorCode::Protocol, "threshold calibration needs maps for both present and absent categories");
  }
  auto mean = [](std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  return (mean(present_maxima) + mean(absent_maxima)) / 2.0;
}

std::vector<ModifiedPointOutcome> modified_pointing(std::span<const ModifiedPointInput> heats,
                                                    std::span<const BinaryMask> masks,
                                                    double threshold) {
  std::vector<ModifiedPointOutcome> out;
  for (const auto& in : heats) {
    ModifiedPointOutcome r;
    r.category = in.category;
    r.present = in.category < masks.size() && masks[in.category].count() > 0;
    const double peak = in.heat->max();
    r.rejected = peak < threshold;
    if (!r.present) {
      r.outcome = r.rejected ? PointOutcome::Hit : PointOutcome::Miss;
    } else if (r.rejected) {
      r.outcome = PointOutcome::Miss;
    } else {
      r.outcome = pointing_game(*in.heat, masks[in.category]);
    }
    out.push_back(r);
  }
  return out;
}

std::vector<double> average_ranks(std::span<const float> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> rank_correlation(const Heatmap& a, const Heatmap& b) {
  const Heatmap a_resized =
      (a.width() == b.width() && a.height() == b.height()) ? a : bilinear_resize(a, b.width(), b.height());
  const auto ra = average_ranks(a_resized.values());
  const auto rb = average_ranks(b.values());
  const double n = static_cast<double>(ra.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean, db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace gcam
