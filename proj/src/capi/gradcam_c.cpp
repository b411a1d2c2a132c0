#include "gradcam/gradcam.h"

#include <algorithm>
#include <cstring>
#include <exception>
#include <filesystem>
#include <new>
#include <sstream>
#include <string>

#include "gradcam/error.hpp"
#include "gradcam/explain.hpp"
#include "gradcam/fixtures.hpp"
#include "gradcam/imaging.hpp"
#include "gradcam/occlusion.hpp"
#include "gradcam/protocols.hpp"
#include "gradcam/train.hpp"

struct gc_model {
  gcam::Model model;
};

struct gc_image {
  gcam::Tensor pixels;
};

struct gc_heatmap {
  gcam::Heatmap heat;
};

namespace {

thread_local std::string last_error;

gc_status status_for(gcam::ErrorCode code) {
  using gcam::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return GC_ERR_INVALID_ARGUMENT;
    case ErrorCode::Io: return GC_ERR_IO;
    case ErrorCode::Parse: return GC_ERR_PARSE;
    case ErrorCode::Dimension: return GC_ERR_DIMENSION;
    case ErrorCode::Lookup: return GC_ERR_LOOKUP;
    case ErrorCode::Contract: return GC_ERR_CONTRACT;
    case ErrorCode::ArchitectureIncompatible: return GC_ERR_ARCHITECTURE;
    case ErrorCode::NoSegment: return GC_ERR_NO_SEGMENT;
    case ErrorCode::AttackFailed: return GC_ERR_ATTACK_FAILED;
    case ErrorCode::Training: return GC_ERR_TRAINING;
    case ErrorCode::Protocol: return GC_ERR_PROTOCOL;
  }
  return GC_ERR_INTERNAL;
}

gc_status set_error(gc_status status, std::string message) {
  last_error = std::move(message);
  return status;
}

template <class F>
gc_status guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return GC_OK;
  } catch (const gcam::Error& e) {
    return set_error(status_for(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(GC_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(GC_ERR_INTERNAL, e.what());
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) gcam::fail(gcam::ErrorCode::InvalidArgument, std::string(what) + " must not be null");
}

gcam::ExplainRequest to_request(const gc_explain_options* o) {
  gcam::ExplainRequest r;
  if (o == nullptr) return r;
  switch (o->method) {
    case GC_METHOD_GRADCAM: r.method = gcam::Method::GradCam; break;
    case GC_METHOD_CAM: r.method = gcam::Method::Cam; break;
    case GC_METHOD_COUNTERFACTUAL: r.method = gcam::Method::Counterfactual; break;
    case GC_METHOD_GUIDED_BACKPROP: r.method = gcam::Method::GuidedBackprop; break;
    case GC_METHOD_DECONV: r.method = gcam::Method::Deconv; break;
    case GC_METHOD_GUIDED_GRADCAM: r.method = gcam::Method::GuidedGradCam; break;
    case GC_METHOD_BACKPROP: r.method = gcam::Method::Backprop; break;
    default:
      gcam::fail(gcam::ErrorCode::InvalidArgument, "unknown method " + std::to_string(o->method));
  }
  r.category = o->category;
  if (o->layer) r.layer = o->layer;
  r.config.weight_pooling = o->max_pool_weights ? gcam::WeightPooling::Max : gcam::WeightPooling::Average;
  r.config.apply_relu = !o->no_relu;
  r.config.absolute_gradients = o->abs_grads != 0;
  switch (o->relu_policy) {
    case GC_RELU_STANDARD: r.config.relu_policy_for_gradients = gcam::ReluPolicy::Standard; break;
    case GC_RELU_GUIDED: r.config.relu_policy_for_gradients = gcam::ReluPolicy::Guided; break;
    case GC_RELU_DECONV: r.config.relu_policy_for_gradients = gcam::ReluPolicy::Deconv; break;
    default:
      gcam::fail(gcam::ErrorCode::InvalidArgument, "unknown relu policy " + std::to_string(o->relu_policy));
  }
  r.config.score_point = o->post_softmax ? gcam::ScorePoint::PostSoftmax : gcam::ScorePoint::PreSoftmax;
  return r;
}

gcam::OcclusionConfig to_occlusion(const gc_occlusion_options* o) {
  require(o, "occlusion options");
  gcam::OcclusionConfig c;
  c.patch = o->patch;
  c.stride = o->stride;
  if (o->fill_count > 0) {
    require(o->fill, "occlusion fill");
    c.fill.assign(o->fill, o->fill + o->fill_count);
  }
  c.score_point = o->post_softmax ? gcam::ScorePoint::PostSoftmax : gcam::ScorePoint::PreSoftmax;
  c.threads = o->threads;
  return c;
}

gcam::MapProvider map_directory(const char* maps_dir) {
  if (maps_dir == nullptr || *maps_dir == '\0') return {};
  const std::filesystem::path dir(maps_dir);
  if (!std::filesystem::is_directory(dir)) {
    gcam::fail(gcam::ErrorCode::Io, "maps directory '" + dir.string() + "' does not exist");
  }
  return [dir](const gcam::ShapesExample& ex, std::size_t category,
               std::size_t rank) -> std::optional<gcam::Heatmap> {
    const auto per_category = dir / (ex.id + "_c" + std::to_string(category) + ".fmap");
    if (std::filesystem::exists(per_category)) return gcam::read_fmap(per_category);
    const auto single = dir / (ex.id + ".fmap");
    if (rank == 0 && std::filesystem::exists(single)) return gcam::read_fmap(single);
    gcam::fail(gcam::ErrorCode::Io, "missing map '" + per_category.string() + "'");
  };
}

std::string fixed(double v) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed << v;
  return out.str();
}

std::filesystem::path summary_path(const char* report) { return std::string(report) + ".summary"; }

void copy_mean(const std::vector<float>& mean, float* out, std::size_t capacity) {
  require(out, "mean");
  if (capacity < mean.size()) {
    gcam::fail(gcam::ErrorCode::InvalidArgument, "mean buffer holds " + std::to_string(capacity) +
                                                     " values, need " + std::to_string(mean.size()));
  }
  std::copy(mean.begin(), mean.end(), out);
}

}  // namespace

extern "C" {

const char* gc_last_error(void) { return last_error.c_str(); }

const char* gc_status_name(gc_status status) {
  switch (status) {
    case GC_OK: return "ok";
    case GC_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case GC_ERR_IO: return "io";
    case GC_ERR_PARSE: return "parse";
    case GC_ERR_DIMENSION: return "dimension";
    case GC_ERR_LOOKUP: return "lookup";
    case GC_ERR_CONTRACT: return "contract";
    case GC_ERR_ARCHITECTURE: return "architecture-incompatible";
    case GC_ERR_NO_SEGMENT: return "no-segment";
    case GC_ERR_ATTACK_FAILED: return "attack-failed";
    case GC_ERR_TRAINING: return "training";
    case GC_ERR_PROTOCOL: return "protocol";
    case GC_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

gc_status gc_model_load(const char* spec_path, const char* weights_prefix, gc_model** out) {
  return guarded([&] {
    require(spec_path, "spec path");
    require(weights_prefix, "weights prefix");
    require(out, "out");
    *out = nullptr;
    auto spec = gcam::load_model_spec(spec_path);
    auto weights = gcam::load_weights(weights_prefix, spec);
    *out = new gc_model{{std::move(spec), std::move(weights)}};
  });
}

void gc_model_free(gc_model* model) { delete model; }

size_t gc_model_categories(const gc_model* model) { return model ? model->model.spec.categories : 0; }

gc_status gc_model_predict(const gc_model* model, const gc_image* image, float* scores, size_t capacity) {
  return guarded([&] {
    require(model, "model");
    require(image, "image");
    require(scores, "scores");
    const auto s = gcam::predict(model->model.spec, model->model.weights, image->pixels);
    if (capacity < s.size()) {
      gcam::fail(gcam::ErrorCode::InvalidArgument, "score buffer holds " + std::to_string(capacity) +
                                                       " values, need " + std::to_string(s.size()));
    }
    std::copy(s.values().begin(), s.values().end(), scores);
  });
}

gc_status gc_model_top_k(const gc_model* model, const gc_image* image, size_t k, size_t* categories,
                         size_t* count) {
  return guarded([&] {
    require(model, "model");
    require(image, "image");
    require(categories, "categories");
    require(count, "count");
    const auto ranked = gcam::top_k(gcam::predict(model->model.spec, model->model.weights, image->pixels), k);
    std::copy(ranked.begin(), ranked.end(), categories);
    *count = ranked.size();
  });
}

gc_status gc_image_read(const char* path, gc_image** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    *out = new gc_image{gcam::to_tensor(gcam::read_pnm(path))};
  });
}

gc_status gc_image_write(const gc_image* image, const char* path) {
  return guarded([&] {
    require(image, "image");
    require(path, "path");
    gcam::write_pnm(gcam::to_image8(image->pixels), path);
  });
}

void gc_image_free(gc_image* image) { delete image; }

void gc_image_size(const gc_image* image, size_t* channels, size_t* height, size_t* width) {
  const bool ok = image != nullptr;
  if (channels) *channels = ok ? image->pixels.extent(0) : 0;
  if (height) *height = ok ? image->pixels.extent(1) : 0;
  if (width) *width = ok ? image->pixels.extent(2) : 0;
}

gc_status gc_image_channel_mean(const gc_image* image, float* mean, size_t capacity) {
  return guarded([&] {
    require(image, "image");
    copy_mean(gcam::channel_mean(std::span(&image->pixels, 1)), mean, capacity);
  });
}

void gc_heatmap_free(gc_heatmap* heat) { delete heat; }

void gc_heatmap_size(const gc_heatmap* heat, size_t* width, size_t* height) {
  if (width) *width = heat ? heat->heat.width() : 0;
  if (height) *height = heat ? heat->heat.height() : 0;
}

const float* gc_heatmap_values(const gc_heatmap* heat) { return heat ? heat->heat.values().data() : nullptr; }

gc_status gc_heatmap_read_fmap(const char* path, gc_heatmap** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    *out = new gc_heatmap{gcam::read_fmap(path)};
  });
}

gc_status gc_heatmap_write_fmap(const gc_heatmap* heat, const char* path) {
  return guarded([&] {
    require(heat, "heatmap");
    require(path, "path");
    gcam::write_fmap(heat->heat, path);
  });
}

gc_status gc_heatmap_write_overlay(const gc_heatmap* heat, const gc_image* image, const char* path) {
  return guarded([&] {
    require(heat, "heatmap");
    require(image, "image");
    require(path, "path");
    const auto base = gcam::to_image8(image->pixels);
    const auto resized = gcam::bilinear_resize(heat->heat, base.width, base.height);
    gcam::write_pnm(gcam::overlay(base, gcam::colormap_jet(resized.normalized())), path);
  });
}

gc_status gc_method_from_name(const char* name, gc_method* out) {
  return guarded([&] {
    require(name, "method name");
    require(out, "out");
    const auto m = gcam::method_from_string(name);
    if (!m) gcam::fail(gcam::ErrorCode::InvalidArgument, std::string("unknown method '") + name + "'");
    *out = static_cast<gc_method>(*m);
  });
}

const char* gc_method_name(gc_method method) {
  if (method < GC_METHOD_GRADCAM || method > GC_METHOD_BACKPROP) return "unknown";
  return gcam::to_string(static_cast<gcam::Method>(method));
}

void gc_explain_options_init(gc_explain_options* options) {
  if (options == nullptr) return;
  *options = gc_explain_options{GC_METHOD_GRADCAM, 0, nullptr, 0, 0, 0, GC_RELU_STANDARD, 0};
}

gc_status gc_explain(const gc_model* model, const gc_image* image, const gc_explain_options* options,
                     gc_heatmap** out) {
  return guarded([&] {
    require(model, "model");
    require(image, "image");
    require(out, "out");
    *out = nullptr;
    const auto request = to_request(options);
    const auto fwd = gcam::forward(model->model.spec, model->model.weights, image->pixels);
    *out = new gc_heatmap{gcam::explain(fwd.tape, request).heat};
  });
}

void gc_occlusion_options_init(gc_occlusion_options* options) {
  if (options == nullptr) return;
  *options = gc_occlusion_options{5, 1, nullptr, 0, 0, 0};
}

size_t gc_default_patch(size_t image_side) { return gcam::default_patch(image_side); }

gc_status gc_occlude(const gc_model* model, const gc_image* image, size_t category,
                     const gc_occlusion_options* options, gc_heatmap** out) {
  return guarded([&] {
    require(model, "model");
    require(image, "image");
    require(out, "out");
    *out = nullptr;
    auto config = to_occlusion(options);
    auto result = gcam::occlusion_map(model->model.spec, model->model.weights, image->pixels, category, config);
    *out = new gc_heatmap{std::move(result.map)};
  });
}

gc_status gc_dataset_make(const char* dir, size_t count, size_t side, uint64_t seed, double two_object_fraction) {
  return guarded([&] {
    require(dir, "directory");
    if (!(two_object_fraction >= 0.0 && two_object_fraction <= 1.0)) {
      gcam::fail(gcam::ErrorCode::InvalidArgument, "two-object fraction must lie in [0,1]");
    }
    gcam::save_dataset(gcam::make_shapes_dataset({count, side, seed, two_object_fraction}), dir);
  });
}

gc_status gc_dataset_channel_mean(const char* dir, float* mean, size_t capacity) {
  return guarded([&] {
    require(dir, "directory");
    const auto examples = gcam::load_dataset(dir);
    std::vector<gcam::Tensor> images;
    images.reserve(examples.size());
    for (const auto& ex : examples) images.push_back(ex.image);
    copy_mean(gcam::channel_mean(images), mean, capacity);
  });
}

gc_status gc_train(const char* spec_path, const char* data_dir, const char* weights_prefix, size_t epochs,
                   double learning_rate, uint64_t seed, double* train_accuracy) {
  return guarded([&] {
    require(spec_path, "spec path");
    require(data_dir, "data directory");
    require(weights_prefix, "weights prefix");
    const auto spec = gcam::load_model_spec(spec_path);
    const auto data = gcam::labeled_images(gcam::load_dataset(data_dir));
    gcam::TrainOptions options;
    options.epochs = epochs;
    options.learning_rate = learning_rate;
    options.seed = seed;
    const auto report = gcam::train_fixture(spec, data, options);
    gcam::save_weights(report.weights, weights_prefix);
    if (train_accuracy) *train_accuracy = report.train_accuracy;
  });
}

void gc_attack_options_init(gc_attack_options* options) {
  if (options == nullptr) return;
  const gcam::AttackOptions d;
  *options = gc_attack_options{0, d.epsilon, d.steps, d.step_size};
}

gc_status gc_attack(const gc_model* model, const gc_image* image, const gc_attack_options* options,
                    gc_image** out, double* target_probability) {
  bool succeeded = false;
  double prob = 0.0;
  const gc_status status = guarded([&] {
    require(model, "model");
    require(image, "image");
    require(options, "attack options");
    require(out, "out");
    *out = nullptr;
    gcam::AttackOptions a;
    a.epsilon = options->epsilon;
    a.steps = options->steps;
    a.step_size = options->step_size;
    auto result = gcam::adversarial_attack(model->model.spec, model->model.weights, image->pixels,
                                           options->target, a);
    succeeded = result.success;
    prob = result.target_probability;
    *out = new gc_image{std::move(result.image)};
  });
  if (target_probability) *target_probability = prob;
  if (status != GC_OK) return status;
  if (!succeeded) {
    return set_error(GC_ERR_ATTACK_FAILED, "target probability " + fixed(prob) + " below " +
                                               fixed(gcam::AttackOptions{}.success_probability));
  }
  return GC_OK;
}

gc_status gc_eval_localize(const gc_model* model, const char* data_dir, const gc_explain_options* options,
                           double threshold_frac, double iou, const char* maps_dir, const char* report_path,
                           gc_localize_result* out) {
  return guarded([&] {
    require(model, "model");
    require(data_dir, "data directory");
    require(report_path, "report path");
    gcam::LocalizationOptions lo;
    lo.request = to_request(options);
    lo.threshold_frac = threshold_frac;
    lo.iou_threshold = iou;
    const auto examples = gcam::load_dataset(data_dir);
    const auto report = gcam::run_localization(model->model, examples, lo, map_directory(maps_dir));
    std::vector<std::string> lines;
    for (const auto& r : report.records) lines.push_back(gcam::format_record(r, iou));
    gcam::write_report(report_path, lines, summary_path(report_path),
                       {{"images", std::to_string(report.records.size())},
                        {"top1_error", fixed(report.errors.top1)},
                        {"top5_error", fixed(report.errors.top5)},
                        {"no_segment", std::to_string(report.no_segment)}});
    if (out) *out = {report.records.size(), report.errors.top1, report.errors.top5, report.no_segment};
  });
}

gc_status gc_eval_point(const gc_model* model, const char* data_dir, const gc_explain_options* options,
                        const char* maps_dir, const char* report_path, gc_point_result* out) {
  return guarded([&] {
    require(model, "model");
    require(data_dir, "data directory");
    require(report_path, "report path");
    const auto examples = gcam::load_dataset(data_dir);
    const auto report = gcam::run_pointing(model->model, examples, to_request(options), map_directory(maps_dir));
    std::vector<std::string> lines;
    for (const auto& r : report.records) lines.push_back(gcam::format_record(r));
    gcam::write_report(report_path, lines, summary_path(report_path),
                       {{"objects", std::to_string(report.records.size())},
                        {"accuracy", fixed(report.accuracy)},
                        {"center_baseline", fixed(report.center_baseline_accuracy)}});
    if (out) *out = {report.records.size(), report.accuracy, report.center_baseline_accuracy};
  });
}

gc_status gc_eval_point_modified(const gc_model* model, const char* calibration_dir, const char* data_dir,
                                 const gc_explain_options* options, const char* report_path,
                                 gc_modified_point_result* out) {
  return guarded([&] {
    require(model, "model");
    require(calibration_dir, "calibration directory");
    require(data_dir, "data directory");
    require(report_path, "report path");
    const auto calibration = gcam::load_dataset(calibration_dir);
    const auto test = gcam::load_dataset(data_dir);
    const auto report = gcam::run_modified_pointing(model->model, calibration, test, to_request(options));
    gcam::write_report(report_path, report.lines, summary_path(report_path),
                       {{"threshold", fixed(report.threshold)},
                        {"hits", std::to_string(report.hits)},
                        {"misses", std::to_string(report.misses)},
                        {"accuracy", fixed(report.accuracy)}});
    if (out) *out = {report.threshold, report.hits, report.misses, report.accuracy};
  });
}

gc_status gc_eval_faithfulness(const gc_model* model, const char* data_dir, const gc_method* methods,
                               size_t method_count, const gc_explain_options* options,
                               const gc_occlusion_options* occlusion, const char* report_path,
                               gc_faithfulness_result* results) {
  return guarded([&] {
    require(model, "model");
    require(data_dir, "data directory");
    require(report_path, "report path");
    if (method_count == 0) gcam::fail(gcam::ErrorCode::InvalidArgument, "no methods given");
    require(methods, "methods");
    std::vector<gcam::Method> list;
    for (std::size_t i = 0; i < method_count; ++i) {
      gc_explain_options o;
      gc_explain_options_init(&o);
      o.method = methods[i];
      list.push_back(to_request(&o).method);
    }
    const auto examples = gcam::load_dataset(data_dir);
    const auto report =
        gcam::run_faithfulness(model->model, examples, list, to_request(options), to_occlusion(occlusion));

    std::vector<std::string> lines;
    for (std::size_t i = 0; i < report.image_ids.size(); ++i) {
      std::string line = report.image_ids[i];
      for (const auto& mf : report.methods) {
        line += std::string(" ") + gcam::to_string(mf.method) + "=" + (mf.rho[i] ? fixed(*mf.rho[i]) : "undefined");
      }
      lines.push_back(std::move(line));
    }
    std::vector<std::pair<std::string, std::string>> summary{{"images", std::to_string(report.image_ids.size())},
                                                             {"masked_passes", std::to_string(report.masked_passes)}};
    for (const auto& mf : report.methods) {
      const std::string name = gcam::to_string(mf.method);
      summary.emplace_back(name + ".mean_rho", fixed(mf.mean_rho));
      summary.emplace_back(name + ".positive_fraction", fixed(mf.positive_fraction));
      summary.emplace_back(name + ".undefined", std::to_string(mf.undefined));
    }
    gcam::write_report(report_path, lines, summary_path(report_path), summary);
    if (results) {
      for (std::size_t i = 0; i < report.methods.size(); ++i) {
        const auto& mf = report.methods[i];
        results[i] = {methods[i], mf.mean_rho, mf.positive_fraction, mf.undefined};
      }
    }
  });
}

}  // extern "C"
