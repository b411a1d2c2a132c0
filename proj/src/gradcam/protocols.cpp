#include "gradcam/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gradcam/error.hpp"
#include "gradcam/file_util.hpp"
#include "gradcam/imaging.hpp"

namespace gcam {

Heatmap image_map(const Tape& tape, const ExplainRequest& request, std::size_t width, std::size_t height) {
  Explanation e = explain(tape, request);
  if (e.heat.width() == width && e.heat.height() == height) return std::move(e.heat);
  return bilinear_resize(e.heat, width, height);
}

namespace {

std::size_t image_width(const ShapesExample& ex) { return ex.image.extent(2); }
std::size_t image_height(const ShapesExample& ex) { return ex.image.extent(1); }

Heatmap map_for(const Model& model, const ShapesExample& ex, const Tape& tape, ExplainRequest request,
                std::size_t category, std::size_t rank, const MapProvider& provider) {
  (void)model;
  if (provider) {
    if (auto external = provider(ex, category, rank)) {
      if (external->width() == image_width(ex) && external->height() == image_height(ex)) return std::move(*external);
      return bilinear_resize(*external, image_width(ex), image_height(ex));
    }
  }
  request.category = category;
  return image_map(tape, request, image_width(ex), image_height(ex));
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed << v;
  return out.str();
}

}  // namespace

LocalizationReport run_localization(const Model& model, const std::vector<ShapesExample>& examples,
                                    const LocalizationOptions& options, const MapProvider& provider) {
  LocalizationReport report;
  for (const auto& ex : examples) {
    const ForwardResult fwd = forward(model.spec, model.weights, ex.image);
    EvalRecord rec;
    rec.image_id = ex.id;
    rec.true_category = ex.label();
    rec.gt_box = ex.objects.front().box;
    const auto ranked = top_k(fwd.scores, options.top_k);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      Prediction p{ranked[r], std::nullopt};
      const Heatmap heat = map_for(model, ex, fwd.tape, options.request, ranked[r], r, provider);
      try {
        p.box = extract_bbox(heat.normalized(), options.threshold_frac);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoSegment) throw;
        ++report.no_segment;
      }
      if (p.category == rec.true_category && p.box) rec.iou = iou(*p.box, *rec.gt_box);
      rec.predictions.push_back(p);
    }
    report.records.push_back(std::move(rec));
  }
  report.errors = localization_error(report.records, options.iou_threshold);
  return report;
}

PointingReport run_pointing(const Model& model, const std::vector<ShapesExample>& examples,
                            const ExplainRequest& request, const MapProvider& provider) {
  PointingReport report;
  std::size_t hits = 0, center_hits = 0;
  for (const auto& ex : examples) {
    const ForwardResult fwd = forward(model.spec, model.weights, ex.image);
    for (std::size_t k = 0; k < ex.objects.size(); ++k) {
      const auto& obj = ex.objects[k];
      const Heatmap heat = map_for(model, ex, fwd.tape, request, obj.label, k, provider);
      EvalRecord rec;
      rec.image_id = ex.id;
      rec.true_category = obj.label;
      rec.gt_box = obj.box;
      rec.pointing = pointing_game(heat, obj.mask);
      if (*rec.pointing == PointOutcome::Hit) ++hits;
      if (obj.mask.at(obj.mask.width / 2, obj.mask.height / 2)) ++center_hits;
      report.records.push_back(std::move(rec));
    }
  }
  if (!report.records.empty()) {
    const auto n = static_cast<double>(report.records.size());
    report.accuracy = static_cast<double>(hits) / n;
    report.center_baseline_accuracy = static_cast<double>(center_hits) / n;
  }
  return report;
}

ModifiedPointingReport run_modified_pointing(const Model& model,
                                             const std::vector<ShapesExample>& calibration,
                                             const std::vector<ShapesExample>& test,
                                             const ExplainRequest& request, std::size_t top_k_count) {
  auto maps_for = [&](const ShapesExample& ex) {
    const ForwardResult fwd = forward(model.spec, model.weights, ex.image);
    std::vector<std::pair<std::size_t, Heatmap>> out;
    for (std::size_t c : top_k(fwd.scores, top_k_count)) {
      ExplainRequest r = request;
      r.category = c;
      out.emplace_back(c, image_map(fwd.tape, r, image_width(ex), image_height(ex)));
    }
    return out;
  };

  std::vector<double> present, absent;
  for (const auto& ex : calibration) {
    for (const auto& [c, heat] : maps_for(ex)) {
      (ex.object_for(c) ? present : absent).push_back(heat.max());
    }
  }
  ModifiedPointingReport report;
  report.threshold = calibrate_rejection_threshold(present, absent);

  for (const auto& ex : test) {
    const auto maps = maps_for(ex);
    std::vector<BinaryMask> masks(model.spec.categories);
    for (const auto& obj : ex.objects) masks[obj.label] = obj.mask;
    std::vector<ModifiedPointInput> inputs;
    for (const auto& [c, heat] : maps) inputs.push_back({c, &heat});
    for (const auto& r : modified_pointing(inputs, masks, report.threshold)) {
      (r.outcome == PointOutcome::Hit ? report.hits : report.misses)++;
      report.lines.push_back(ex.id + " category=" + std::to_string(r.category) +
                             " present=" + (r.present ? "1" : "0") + " rejected=" + (r.rejected ? "1" : "0") +
                             " outcome=" + (r.outcome == PointOutcome::Hit ? "hit" : "miss"));
    }
  }
  const std::size_t total = report.hits + report.misses;
  report.accuracy = total ? static_cast<double>(report.hits) / static_cast<double>(total) : 0.0;
  return report;
}

FaithfulnessReport run_faithfulness(const Model& model, const std::vector<ShapesExample>& examples,
                                    const std::vector<Method>& methods, const ExplainRequest& request,
                                    const OcclusionConfig& occlusion) {
  FaithfulnessReport report;
  for (Method m : methods) report.methods.push_back({m, {}, 0.0, 0.0, 0});
  for (const auto& ex : examples) {
    report.image_ids.push_back(ex.id);
    const ForwardResult fwd = forward(model.spec, model.weights, ex.image);
    const OcclusionResult occ = occlusion_map(model.spec, model.weights, ex.image, ex.label(), occlusion);
    report.masked_passes += occ.masked_passes;
    for (auto& mf : report.methods) {
      ExplainRequest r = request;
      r.method = mf.method;
      r.category = ex.label();
      mf.rho.push_back(rank_correlation(image_map(fwd.tape, r, image_width(ex), image_height(ex)), occ.map));
    }
  }
  for (auto& mf : report.methods) {
    double sum = 0.0;
    std::size_t defined = 0, positive = 0;
    for (const auto& rho : mf.rho) {
      if (!rho) {
        ++mf.undefined;
        continue;
      }
      sum += *rho;
      ++defined;
      if (*rho > 0.0) ++positive;
    }
    mf.mean_rho = defined ? sum / static_cast<double>(defined) : 0.0;
    mf.positive_fraction = mf.rho.empty() ? 0.0 : static_cast<double>(positive) / static_cast<double>(mf.rho.size());
  }
  return report;
}

std::optional<std::pair<double, double>> centroid(const Heatmap& heat) {
  double mass = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t y = 0; y < heat.height(); ++y) {
    for (std::size_t x = 0; x < heat.width(); ++x) {
      const double v = std::max(0.0f, heat.at(x, y));
      mass += v;
      sx += v * (static_cast<double>(x) + 0.5);
      sy += v * (static_cast<double>(y) + 0.5);
    }
  }
  if (mass <= 0.0) return std::nullopt;
  return std::pair{sx / mass, sy / mass};
}

RateReport run_counterfactual(const Model& model, const std::vector<ShapesExample>& examples) {
  RateReport report;
  for (const auto& ex : examples) {
    if (ex.objects.size() != 2) continue;
    const ForwardResult fwd = forward(model.spec, model.weights, ex.image);
    const auto top2 = top_k(fwd.scores, 2);
    const double half = static_cast<double>(image_width(ex)) / 2.0;
    for (std::size_t a = 0; a < 2; ++a) {
      const auto& obj_a = ex.objects[a];
      const auto& obj_b = ex.objects[1 - a];
      if (std::find(top2.begin(), top2.end(), obj_a.label) == top2.end()) continue;
      const bool b_left = obj_b.box.x1 < image_width(ex) / 2;
      ExplainRequest r{Method::Counterfactual, obj_a.label, {}, {}};
      const auto c = centroid(image_map(fwd.tape, r, image_width(ex), image_height(ex)));
      const bool ok = c && ((c->first < half) == b_left);
      ++report.cases;
      if (ok) ++report.successes;
      report.lines.push_back(ex.id + " category=" + std::to_string(obj_a.label) + " other_side=" +
                             (b_left ? "left" : "right") + " centroid_x=" + (c ? fmt(c->first) : "none") +
                             " outcome=" + (ok ? "hit" : "miss"));
    }
  }
  return report;
}

RateReport run_discrimination(const Model& model, const std::vector<ShapesExample>& examples) {
  RateReport report;
  for (const auto& ex : examples) {
    if (ex.objects.size() != 2) continue;
    const ForwardResult fwd = forward(model.spec, model.weights, ex.image);
    auto top2 = top_k(fwd.scores, 2);
    std::vector<std::size_t> labels{ex.objects[0].label, ex.objects[1].label};
    std::sort(top2.begin(), top2.end());
    std::sort(labels.begin(), labels.end());
    if (top2 != labels) continue;
    for (const auto& obj : ex.objects) {
      ExplainRequest r{Method::GradCam, obj.label, {}, {}};
      const auto [x, y] = argmax_pixel(image_map(fwd.tape, r, image_width(ex), image_height(ex)));
      const bool ok = x >= obj.box.x0 && x <= obj.box.x1 && y >= obj.box.y0 && y <= obj.box.y1;
      ++report.cases;
      if (ok) ++report.successes;
      report.lines.push_back(ex.id + " category=" + std::to_string(obj.label) + " argmax=" +
                             std::to_string(x) + "," + std::to_string(y) + " outcome=" + (ok ? "hit" : "miss"));
    }
  }
  return report;
}

RobustnessReport run_attack_robustness(const Model& model, const std::vector<ShapesExample>& examples,
                                       const AttackOptions& attack, const ExplainRequest& request) {
  RobustnessReport report;
  std::size_t clean_hits = 0, attacked_hits = 0;
  for (const auto& ex : examples) {
    const std::size_t truth = ex.label();
    // Target the strongest category that is absent from the image.
    const ForwardResult clean = forward(model.spec, model.weights, ex.image);
    std::size_t target = truth;
    for (std::size_t c : top_k(clean.scores, model.spec.categories)) {
      const bool present = std::any_of(ex.objects.begin(), ex.objects.end(), [&](const auto& o) { return o.label == c; });
      if (!present) {
        target = c;
        break;
      }
    }
    if (target == truth) fail(ErrorCode::InvalidArgument, ex.id + " has no absent category to attack towards");
    const auto& obj = ex.objects.front();
    ExplainRequest r = request;
    r.category = truth;

    ++report.attempts;
    const AttackResult res = adversarial_attack(model.spec, model.weights, ex.image, target, attack, truth);
    std::string line = ex.id + " true=" + std::to_string(truth) + " target=" + std::to_string(target) +
                       " target_prob=" + fmt(res.target_probability);
    if (res.success) {
      ++report.successes;
      const ForwardResult fooled = forward(model.spec, model.weights, res.image);
      const bool clean_hit =
          pointing_game(image_map(clean.tape, r, image_width(ex), image_height(ex)), obj.mask) == PointOutcome::Hit;
      const bool attacked_hit =
          pointing_game(image_map(fooled.tape, r, image_width(ex), image_height(ex)), obj.mask) == PointOutcome::Hit;
      clean_hits += clean_hit;
      attacked_hits += attacked_hit;
      line += std::string(" clean=") + (clean_hit ? "hit" : "miss") + " attacked=" + (attacked_hit ? "hit" : "miss");
    } else {
      line += " attack=failed";
    }
    report.lines.push_back(std::move(line));
  }
  if (report.attempts) report.success_rate = static_cast<double>(report.successes) / static_cast<double>(report.attempts);
  if (report.successes) {
    report.clean_pointing = static_cast<double>(clean_hits) / static_cast<double>(report.successes);
    report.attacked_pointing = static_cast<double>(attacked_hits) / static_cast<double>(report.successes);
  }
  return report;
}

void write_report(const std::filesystem::path& path, const std::vector<std::string>& lines,
                  const std::filesystem::path& summary_path,
                  const std::vector<std::pair<std::string, std::string>>& summary) {
  std::string body;
  for (const auto& l : lines) body += l + '\n';
  detail::write_file(path, body);
  std::string kv;
  for (const auto& [k, v] : summary) kv += k + '=' + v + '\n';
  detail::write_file(summary_path, kv);
}

std::string format_record(const EvalRecord& record, double iou_threshold) {
  std::ostringstream out;
  out << record.image_id << " true=" << record.true_category;
  if (!record.predictions.empty()) {
    out << " predicted=";
    for (std::size_t i = 0; i < record.predictions.size(); ++i) {
      if (i) out << ',';
      out << record.predictions[i].category;
    }
    const auto& p = record.predictions.front();
    if (p.box) {
      out << " box=" << p.box->x0 << ',' << p.box->y0 << ',' << p.box->x1 << ',' << p.box->y1;
    } else {
      out << " box=none";
    }
  }
  if (record.gt_box) {
    out << " gt=" << record.gt_box->x0 << ',' << record.gt_box->y0 << ',' << record.gt_box->x1 << ','
        << record.gt_box->y1;
  }
  if (record.iou) out << " iou=" << fmt(*record.iou);
  if (!record.predictions.empty() && record.gt_box) {
    out << " top1=" << (localized(record, 1, iou_threshold) ? "correct" : "wrong");
  }
  if (record.pointing) out << " pointing=" << (*record.pointing == PointOutcome::Hit ? "hit" : "miss");
  if (record.rank_correlation) out << " rho=" << fmt(*record.rank_correlation);
  return out.str();
}

}  // namespace gcam
