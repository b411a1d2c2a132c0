// gcam: command-line front end over the gradcam C API.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gradcam/gradcam.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDomain = 3;

/// Raised with an exit code and a message naming the offending flag or file.
struct CliError {
  int code;
  std::string message;
};

int exit_code_for(gc_status s) {
  switch (s) {
    case GC_OK: return kExitOk;
    case GC_ERR_INVALID_ARGUMENT: return kExitUsage;
    case GC_ERR_ARCHITECTURE:
    case GC_ERR_NO_SEGMENT:
    case GC_ERR_ATTACK_FAILED: return kExitDomain;
    default: return kExitFailure;
  }
}

void check(gc_status s, const std::string& context) {
  if (s == GC_OK) return;
  throw CliError{exit_code_for(s), context + ": " + gc_status_name(s) + ": " + gc_last_error()};
}

struct ModelDeleter {
  void operator()(gc_model* p) const { gc_model_free(p); }
};
struct ImageDeleter {
  void operator()(gc_image* p) const { gc_image_free(p); }
};
struct HeatmapDeleter {
  void operator()(gc_heatmap* p) const { gc_heatmap_free(p); }
};
using ModelPtr = std::unique_ptr<gc_model, ModelDeleter>;
using ImagePtr = std::unique_ptr<gc_image, ImageDeleter>;
using HeatmapPtr = std::unique_ptr<gc_heatmap, HeatmapDeleter>;

const std::vector<std::string> kMethods = {"gradcam", "cam", "counterfactual", "guided-backprop",
                                           "deconv", "guided-gradcam", "backprop"};

struct ModelFlags {
  std::string spec;
  std::string weights;

  void add(CLI::App* app) {
    app->add_option("--spec", spec, "Model spec file")->required()->check(CLI::ExistingFile);
    app->add_option("--weights", weights, "Weight prefix (<prefix>.manifest, <prefix>.bin)")->required();
  }
  ModelPtr load() const {
    gc_model* m = nullptr;
    check(gc_model_load(spec.c_str(), weights.c_str(), &m), "--spec " + spec + " / --weights " + weights);
    return ModelPtr(m);
  }
};

struct ExplainFlags {
  std::string method = "gradcam";
  std::string layer;
  std::string pool = "avg";
  bool no_relu = false;
  bool abs_grads = false;
  std::string relu_policy = "standard";
  std::string score = "pre";

  void add(CLI::App* app, bool with_method = true) {
    if (with_method) {
      app->add_option("--method", method, "Explanation method")->check(CLI::IsMember(kMethods));
    }
    app->add_option("--layer", layer, "Checkpoint to explain (default: last conv layer)");
    app->add_option("--pool", pool, "Gradient pooling")->check(CLI::IsMember({"avg", "max"}));
    app->add_flag("--no-relu", no_relu, "Keep negative map values");
    app->add_flag("--abs-grads", abs_grads, "Pool absolute gradients");
    app->add_option("--relu-policy", relu_policy, "ReLU backward rule for Grad-CAM gradients")
        ->check(CLI::IsMember({"standard", "guided", "deconv"}));
    app->add_option("--score", score, "Differentiate the pre- or post-softmax score")
        ->check(CLI::IsMember({"pre", "post"}));
  }

  gc_explain_options options() const {
    gc_explain_options o;
    gc_explain_options_init(&o);
    check(gc_method_from_name(method.c_str(), &o.method), "--method " + method);
    o.layer = layer.empty() ? nullptr : layer.c_str();
    o.max_pool_weights = pool == "max";
    o.no_relu = no_relu;
    o.abs_grads = abs_grads;
    o.relu_policy = relu_policy == "guided" ? GC_RELU_GUIDED : relu_policy == "deconv" ? GC_RELU_DECONV : GC_RELU_STANDARD;
    o.post_softmax = score == "post";
    return o;
  }
};

struct OcclusionFlags {
  std::optional<std::size_t> patch;
  std::size_t stride = 1;
  std::string fill = "auto";
  std::size_t threads = 0;

  void add(CLI::App* app) {
    app->add_option("--patch", patch, "Odd patch side in pixels (default: about side/6)");
    app->add_option("--stride", stride, "Patch stride in pixels")->check(CLI::PositiveNumber);
    app->add_option("--fill", fill, "auto, a single value, or comma-separated per-channel values");
    app->add_option("--threads", threads, "Worker threads (0: all cores)");
  }

  /// Explicit values, or nullopt for auto.
  std::optional<std::vector<float>> explicit_fill() const {
    if (fill == "auto") return std::nullopt;
    std::vector<float> values;
    std::stringstream in(fill);
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stof(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw CliError{kExitUsage, "--fill: cannot parse '" + item + "' as a number"};
      }
    }
    if (values.empty()) throw CliError{kExitUsage, "--fill: no values given"};
    return values;
  }

  gc_occlusion_options options(const std::vector<float>& fill_values, std::size_t image_side) const {
    gc_occlusion_options o;
    gc_occlusion_options_init(&o);
    o.patch = patch.value_or(gc_default_patch(image_side));
    o.stride = stride;
    o.fill = fill_values.data();
    o.fill_count = fill_values.size();
    o.threads = threads;
    return o;
  }
};

ImagePtr read_image(const std::string& path, const std::string& flag) {
  gc_image* img = nullptr;
  check(gc_image_read(path.c_str(), &img), flag + " " + path);
  return ImagePtr(img);
}

/// "dir/name.ext" -> "dir/name_c<category>.ext".
std::string with_category(const std::string& path, std::size_t category) {
  const std::filesystem::path p(path);
  auto out = p.parent_path() / (p.stem().string() + "_c" + std::to_string(category) + p.extension().string());
  return out.string();
}

std::vector<std::size_t> categories_to_explain(gc_model* model, gc_image* image, std::optional<std::size_t> category,
                                               std::optional<std::size_t> top_k) {
  if (category) {
    if (*category >= gc_model_categories(model)) {
      throw CliError{kExitUsage, "--category " + std::to_string(*category) + ": model has " +
                                     std::to_string(gc_model_categories(model)) + " categories"};
    }
    return {*category};
  }
  std::vector<std::size_t> cats(gc_model_categories(model));
  std::size_t count = 0;
  check(gc_model_top_k(model, image, top_k.value_or(1), cats.data(), &count), "--image");
  cats.resize(count);
  return cats;
}

void emit_heat(const gc_heatmap* heat, const gc_image* image, const std::string& out_heat, const std::string& out_png,
               std::size_t category, bool suffix) {
  if (!out_heat.empty()) {
    const auto path = suffix ? with_category(out_heat, category) : out_heat;
    check(gc_heatmap_write_fmap(heat, path.c_str()), "--out-heat " + path);
    std::cout << "category=" << category << " heat=" << path << '\n';
  }
  if (!out_png.empty()) {
    const auto path = suffix ? with_category(out_png, category) : out_png;
    check(gc_heatmap_write_overlay(heat, image, path.c_str()), "--out-png " + path);
    std::cout << "category=" << category << " png=" << path << '\n';
  }
}

/// Side of the first image in a dataset directory (all images share it).
std::size_t dataset_image_side(const std::string& dir) {
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".ppm") continue;
    auto img = read_image(entry.path().string(), "--data");
    std::size_t c = 0, h = 0, w = 0;
    gc_image_size(img.get(), &c, &h, &w);
    return std::min(w, h);
  }
  throw CliError{kExitFailure, "--data " + dir + ": no .ppm images"};
}

void print_summary(const std::string& report) {
  std::cout << "report=" << report << '\n';
  std::FILE* f = std::fopen((report + ".summary").c_str(), "rb");
  if (!f) return;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) std::cout.write(buf, static_cast<std::streamsize>(n));
  std::fclose(f);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-weighted class activation maps for small CNNs", "gcam"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // make-dataset
  auto* make = app.add_subcommand("make-dataset", "Write a synthetic shapes dataset");
  std::string make_out;
  std::size_t make_n = 100, make_side = 32;
  std::uint64_t make_seed = 1;
  double make_two = 0.0;
  make->add_option("--out", make_out, "Output directory")->required();
  make->add_option("--n", make_n, "Number of images")->check(CLI::PositiveNumber);
  make->add_option("--side", make_side, "Image side in pixels")->check(CLI::Range(16, 4096));
  make->add_option("--seed", make_seed, "Generator seed");
  make->add_option("--two-object-frac", make_two, "Fraction of two-object images")->check(CLI::Range(0.0, 1.0));

  // train
  auto* train = app.add_subcommand("train", "Train a model spec on a dataset");
  std::string train_spec, train_data, train_out;
  std::size_t train_epochs = 0;
  double train_lr = 0.0;
  std::uint64_t train_seed = 1;
  train->add_option("--spec", train_spec, "Model spec file")->required()->check(CLI::ExistingFile);
  train->add_option("--data", train_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "Output weight prefix")->required();
  train->add_option("--epochs", train_epochs, "Training epochs")->required()->check(CLI::PositiveNumber);
  train->add_option("--lr", train_lr, "Learning rate")->required()->check(CLI::PositiveNumber);
  train->add_option("--seed", train_seed, "Initialization and shuffling seed");

  // explain
  auto* expl = app.add_subcommand("explain", "Explain a prediction");
  ModelFlags expl_model;
  ExplainFlags expl_flags;
  std::string expl_image, expl_heat, expl_png;
  std::optional<std::size_t> expl_category, expl_top_k;
  expl_model.add(expl);
  expl_flags.add(expl);
  expl->add_option("--image", expl_image, "Input PPM/PGM")->required()->check(CLI::ExistingFile);
  auto* expl_cat_opt = expl->add_option("--category", expl_category, "Category to explain");
  auto* expl_topk_opt = expl->add_option("--top-k", expl_top_k, "Explain the K best categories")->check(CLI::PositiveNumber);
  expl_cat_opt->excludes(expl_topk_opt);
  expl->add_option("--out-heat", expl_heat, "FMAP output");
  expl->add_option("--out-png", expl_png, "PPM overlay output");

  // occlude
  auto* occ = app.add_subcommand("occlude", "Occlusion sensitivity map");
  ModelFlags occ_model;
  OcclusionFlags occ_flags;
  std::string occ_image, occ_heat, occ_png, occ_data, occ_score = "pre";
  std::optional<std::size_t> occ_category;
  occ_model.add(occ);
  occ_flags.add(occ);
  occ->add_option("--image", occ_image, "Input PPM/PGM")->required()->check(CLI::ExistingFile);
  occ->add_option("--category", occ_category, "Category (default: top prediction)");
  occ->add_option("--data", occ_data, "Dataset whose channel mean is the auto fill")->check(CLI::ExistingDirectory);
  occ->add_option("--score", occ_score, "Score measured")->check(CLI::IsMember({"pre", "post"}));
  occ->add_option("--out-heat", occ_heat, "FMAP output");
  occ->add_option("--out-png", occ_png, "PPM overlay output");

  // localize
  auto* loc = app.add_subcommand("localize", "Weakly supervised localization error");
  ModelFlags loc_model;
  ExplainFlags loc_flags;
  std::string loc_data, loc_report, loc_maps;
  double loc_threshold = 0.15, loc_iou = 0.5;
  loc_model.add(loc);
  loc_flags.add(loc);
  loc->add_option("--data", loc_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  loc->add_option("--report", loc_report, "Report file")->required();
  loc->add_option("--threshold-frac", loc_threshold, "Binarization threshold as a fraction of the max")
      ->check(CLI::Range(0.0, 1.0));
  loc->add_option("--iou", loc_iou, "IoU needed for a correct box")->check(CLI::Range(0.0, 1.0));
  loc->add_option("--maps", loc_maps, "Directory of precomputed FMAPs")->check(CLI::ExistingDirectory);

  // point
  auto* point = app.add_subcommand("point", "Pointing game");
  ModelFlags point_model;
  ExplainFlags point_flags;
  std::string point_data, point_report, point_maps, point_calib;
  bool point_modified = false;
  point_model.add(point);
  point_flags.add(point);
  point->add_option("--data", point_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  point->add_option("--report", point_report, "Report file")->required();
  auto* modified_flag = point->add_flag("--modified", point_modified, "Score rejections of absent categories");
  point->add_option("--calibrate-split", point_calib, "Dataset used to calibrate the rejection threshold")
      ->check(CLI::ExistingDirectory)
      ->needs(modified_flag);
  auto* maps_opt = point->add_option("--maps", point_maps, "Directory of precomputed FMAPs")->check(CLI::ExistingDirectory);
  maps_opt->excludes(modified_flag);

  // faithfulness
  auto* faith = app.add_subcommand("faithfulness", "Rank correlation with occlusion maps");
  ModelFlags faith_model;
  ExplainFlags faith_flags;
  OcclusionFlags faith_occ;
  std::string faith_data, faith_report;
  std::vector<std::string> faith_methods{"gradcam", "guided-backprop"};
  faith_model.add(faith);
  faith_flags.add(faith, false);
  faith_occ.add(faith);
  faith->add_option("--data", faith_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  faith->add_option("--report", faith_report, "Report file")->required();
  faith->add_option("--methods", faith_methods, "Comma-separated methods")
      ->delimiter(',')
      ->check(CLI::IsMember(kMethods));

  // attack
  auto* atk = app.add_subcommand("attack", "Targeted sign-gradient attack");
  ModelFlags atk_model;
  std::string atk_image, atk_out;
  gc_attack_options atk_opts;
  gc_attack_options_init(&atk_opts);
  atk_model.add(atk);
  atk->add_option("--image", atk_image, "Input PPM/PGM")->required()->check(CLI::ExistingFile);
  atk->add_option("--target", atk_opts.target, "Target category")->required();
  atk->add_option("--epsilon", atk_opts.epsilon, "Max per-pixel change")->check(CLI::Range(0.0, 1.0));
  atk->add_option("--steps", atk_opts.steps, "Iterations");
  atk->add_option("--step-size", atk_opts.step_size, "Per-step change")->check(CLI::NonNegativeNumber);
  atk->add_option("--out", atk_out, "Output PPM")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    std::cerr << (sub ? sub->help() : app.help());
    return kExitUsage;
  }

  try {
    if (*make) {
      check(gc_dataset_make(make_out.c_str(), make_n, make_side, make_seed, make_two), "--out " + make_out);
      std::cout << "images=" << make_n << " dir=" << make_out << '\n';
    } else if (*train) {
      double acc = 0.0;
      check(gc_train(train_spec.c_str(), train_data.c_str(), train_out.c_str(), train_epochs, train_lr, train_seed, &acc),
            "--spec " + train_spec + " / --data " + train_data + " / --out " + train_out);
      std::cout << "train_accuracy=" << acc << " weights=" << train_out << '\n';
    } else if (*expl) {
      if (expl_heat.empty() && expl_png.empty()) throw CliError{kExitUsage, "explain: give --out-heat and/or --out-png"};
      auto model = expl_model.load();
      auto image = read_image(expl_image, "--image");
      auto opts = expl_flags.options();
      const auto cats = categories_to_explain(model.get(), image.get(), expl_category, expl_top_k);
      for (std::size_t c : cats) {
        opts.category = c;
        gc_heatmap* h = nullptr;
        check(gc_explain(model.get(), image.get(), &opts, &h), "--method " + expl_flags.method);
        HeatmapPtr heat(h);
        emit_heat(heat.get(), image.get(), expl_heat, expl_png, c, expl_top_k.has_value());
      }
    } else if (*occ) {
      if (occ_heat.empty() && occ_png.empty()) throw CliError{kExitUsage, "occlude: give --out-heat and/or --out-png"};
      auto model = occ_model.load();
      auto image = read_image(occ_image, "--image");
      std::size_t channels = 0, height = 0, width = 0;
      gc_image_size(image.get(), &channels, &height, &width);
      std::vector<float> fill;
      if (auto explicit_values = occ_flags.explicit_fill()) {
        fill = *explicit_values;
      } else {
        fill.resize(channels);
        if (!occ_data.empty()) {
          check(gc_dataset_channel_mean(occ_data.c_str(), fill.data(), fill.size()), "--data " + occ_data);
        } else {
          check(gc_image_channel_mean(image.get(), fill.data(), fill.size()), "--image " + occ_image);
        }
      }
      auto opts = occ_flags.options(fill, std::min(width, height));
      opts.post_softmax = occ_score == "post";
      const auto cats = categories_to_explain(model.get(), image.get(), occ_category, std::nullopt);
      gc_heatmap* h = nullptr;
      check(gc_occlude(model.get(), image.get(), cats.front(), &opts, &h), "--patch/--stride/--fill");
      HeatmapPtr heat(h);
      emit_heat(heat.get(), image.get(), occ_heat, occ_png, cats.front(), false);
    } else if (*loc) {
      auto model = loc_model.load();
      auto opts = loc_flags.options();
      gc_localize_result r{};
      check(gc_eval_localize(model.get(), loc_data.c_str(), &opts, loc_threshold, loc_iou,
                             loc_maps.empty() ? nullptr : loc_maps.c_str(), loc_report.c_str(), &r),
            "--data " + loc_data);
      print_summary(loc_report);
    } else if (*point) {
      auto model = point_model.load();
      auto opts = point_flags.options();
      if (point_modified) {
        if (point_calib.empty()) throw CliError{kExitUsage, "--modified needs --calibrate-split DIR"};
        gc_modified_point_result r{};
        check(gc_eval_point_modified(model.get(), point_calib.c_str(), point_data.c_str(), &opts,
                                     point_report.c_str(), &r),
              "--calibrate-split " + point_calib + " / --data " + point_data);
      } else {
        gc_point_result r{};
        check(gc_eval_point(model.get(), point_data.c_str(), &opts, point_maps.empty() ? nullptr : point_maps.c_str(),
                            point_report.c_str(), &r),
              "--data " + point_data);
      }
      print_summary(point_report);
    } else if (*faith) {
      auto model = faith_model.load();
      auto opts = faith_flags.options();
      std::vector<gc_method> methods;
      for (const auto& name : faith_methods) {
        gc_method m;
        check(gc_method_from_name(name.c_str(), &m), "--methods " + name);
        methods.push_back(m);
      }
      std::vector<float> fill;
      if (auto explicit_values = faith_occ.explicit_fill()) {
        fill = *explicit_values;
      } else {
        fill.resize(3);
        check(gc_dataset_channel_mean(faith_data.c_str(), fill.data(), fill.size()), "--data " + faith_data);
      }
      auto occ_opts = faith_occ.options(fill, 0);
      if (!faith_occ.patch) occ_opts.patch = gc_default_patch(dataset_image_side(faith_data));
      std::vector<gc_faithfulness_result> results(methods.size());
      check(gc_eval_faithfulness(model.get(), faith_data.c_str(), methods.data(), methods.size(), &opts, &occ_opts,
                                 faith_report.c_str(), results.data()),
            "--data " + faith_data);
      print_summary(faith_report);
    } else if (*atk) {
      auto model = atk_model.load();
      auto image = read_image(atk_image, "--image");
      gc_image* out = nullptr;
      double prob = 0.0;
      const gc_status s = gc_attack(model.get(), image.get(), &atk_opts, &out, &prob);
      ImagePtr adv(out);
      std::cout << "target=" << atk_opts.target << " target_probability=" << prob << '\n';
      check(s, "--target " + std::to_string(atk_opts.target));
      check(gc_image_write(adv.get(), atk_out.c_str()), "--out " + atk_out);
    }
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << '\n';
    return e.code;
  }
  return kExitOk;
}
