#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gradcam/eval.hpp"
#include "gradcam/explain.hpp"
#include "gradcam/fixtures.hpp"
#include "gradcam/nn.hpp"
#include "gradcam/occlusion.hpp"

namespace gcam {

struct Model {
  ModelSpec spec;
  WeightStore weights;
};

/// Explanation map for `category` resampled to the image resolution (not
/// normalized). Pixel-space methods are already at image resolution.
Heatmap image_map(const Tape& tape, const ExplainRequest& request, std::size_t width, std::size_t height);

/// Optional source of precomputed maps (e.g. FMAP files); returning nullopt
/// falls back to computing the map in process.
using MapProvider = std::function<std::optional<Heatmap>(const ShapesExample&, std::size_t category, std::size_t rank)>;

struct LocalizationOptions {
  ExplainRequest request;  // method, layer and config; category is filled per prediction
  double threshold_frac = kDefaultThresholdFrac;
  double iou_threshold = kDefaultIou;
  std::size_t top_k = 5;
};

struct LocalizationReport {
  std::vector<EvalRecord> records;
  LocalizationErrors errors;
  std::size_t no_segment = 0;
};

LocalizationReport run_localization(const Model& model, const std::vector<ShapesExample>& examples,
                                    const LocalizationOptions& options, const MapProvider& provider = {});

struct PointingReport {
  std::vector<EvalRecord> records;  // one per annotated object
  double accuracy = 0.0;
  double center_baseline_accuracy = 0.0;
};

/// Plain pointing game for every annotated object, plus the centre-pixel
/// baseline on the same objects.
PointingReport run_pointing(const Model& model, const std::vector<ShapesExample>& examples,
                            const ExplainRequest& request, const MapProvider& provider = {});

struct ModifiedPointingReport {
  double threshold = 0.0;
  std::size_t hits = 0;
  std::size_t misses = 0;
  double accuracy = 0.0;
  std::vector<std::string> lines;
};

/// Calibrates the rejection threshold on `calibration` (mean of present-map
/// maxima and mean of absent-map maxima, averaged) and scores `test`.
ModifiedPointingReport run_modified_pointing(const Model& model,
                                             const std::vector<ShapesExample>& calibration,
                                             const std::vector<ShapesExample>& test,
                                             const ExplainRequest& request, std::size_t top_k = 5);

struct MethodFaithfulness {
  Method method = Method::GradCam;
  std::vector<std::optional<double>> rho;  // per image
  double mean_rho = 0.0;                   // over defined values
  double positive_fraction = 0.0;          // rho > 0 among all images
  std::size_t undefined = 0;
};

struct FaithfulnessReport {
  std::vector<std::string> image_ids;
  std::vector<MethodFaithfulness> methods;
  std::size_t masked_passes = 0;
};

FaithfulnessReport run_faithfulness(const Model& model, const std::vector<ShapesExample>& examples,
                                    const std::vector<Method>& methods, const ExplainRequest& request,
                                    const OcclusionConfig& occlusion);

struct RateReport {
  std::size_t cases = 0;
  std::size_t successes = 0;
  double rate() const { return cases ? static_cast<double>(successes) / static_cast<double>(cases) : 0.0; }
  std::vector<std::string> lines;
};

/// Two-object images: for every object A among the top-2 predictions, the
/// mass centroid of the counterfactual map for A must fall in the other
/// object's half of the image.
RateReport run_counterfactual(const Model& model, const std::vector<ShapesExample>& examples);

/// Two-object images whose top-2 predictions are exactly the two objects: the
/// Grad-CAM argmax for each object must fall inside that object's box.
RateReport run_discrimination(const Model& model, const std::vector<ShapesExample>& examples);

struct RobustnessReport {
  std::size_t attempts = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  double clean_pointing = 0.0;     // on the successfully attacked images
  double attacked_pointing = 0.0;  // same images, after the attack
  std::vector<std::string> lines;
};

/// Attacks each image towards its highest-scoring absent category and plays
/// the pointing game for the true label before and after.
RobustnessReport run_attack_robustness(const Model& model, const std::vector<ShapesExample>& examples,
                                       const AttackOptions& attack, const ExplainRequest& request);

/// Mass centroid (pixel centres) of a non-negative map; nullopt for zero maps.
std::optional<std::pair<double, double>> centroid(const Heatmap& heat);

/// Writes `lines` to `path` and `key=value` pairs to `summary_path`.
void write_report(const std::filesystem::path& path, const std::vector<std::string>& lines,
                  const std::filesystem::path& summary_path,
                  const std::vector<std::pair<std::string, std::string>>& summary);

std::string format_record(const EvalRecord& record, double iou_threshold = kDefaultIou);

}  // namespace gcam
