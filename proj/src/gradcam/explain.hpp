#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "gradcam/autodiff.hpp"
#include "gradcam/heatmap.hpp"
#include "gradcam/tensor.hpp"

namespace gcam {

enum class WeightPooling { Average, Max };

/// Knobs for the Grad-CAM family, including the ablation variants.
/// gradient_sign = -1 is the counterfactual mode.
struct GradCamConfig {
  WeightPooling weight_pooling = WeightPooling::Average;
  bool apply_relu = true;
  bool absolute_gradients = false;
  int gradient_sign = +1;
  ReluPolicy relu_policy_for_gradients = ReluPolicy::Standard;
  ScorePoint score_point = ScorePoint::PreSoftmax;
};

/// Per-pixel, per-channel signed input gradient; same shape as the image.
struct SaliencyMap {
  Tensor values;
};

/// Neuron-importance weights, one per feature map, from dy^c/dA ([K,u,v]).
Tensor neuron_weights(const Tensor& grads, const GradCamConfig& config = {});

/// Weighted combination of the feature maps at `layer`, rectified unless
/// config.apply_relu is off. Resolution is the layer's u x v.
Heatmap gradcam(const Tape& tape, std::size_t category, std::string_view layer,
                const GradCamConfig& config = {});

/// Negated-gradient Grad-CAM: regions whose evidence works against `category`.
Heatmap counterfactual(const Tape& tape, std::size_t category, std::string_view layer);

/// Spatial checkpoint feeding a GAP -> dense head. Throws an
/// architecture-incompatible error for any other head.
std::string cam_layer(const Tape& tape);

/// Class activation map sum_k w^c_k A^k with the learned head weights. Raw
/// (no ReLU). Throws an architecture-incompatible error on non-GAP heads.
Heatmap cam(const Tape& tape, std::size_t category);
Heatmap cam(const Tape& tape, std::size_t category, const Tensor& head_weights);

/// Input-space gradient of y^c under a ReLU backward policy (Standard gives
/// the plain backprop baseline).
SaliencyMap pixel_saliency(const Tape& tape, std::size_t category, ReluPolicy policy,
                           ScorePoint score_point = ScorePoint::PreSoftmax);

/// Bilinearly upsamples `heat` to the saliency resolution, normalizes it to
/// [0,1] and multiplies it into every saliency channel.
SaliencyMap guided_gradcam(const SaliencyMap& saliency, const Heatmap& heat);

/// Scalar view of a saliency map: per-pixel max over channels of |value|.
Heatmap saliency_magnitude(const SaliencyMap& saliency);

enum class Method {
  GradCam,
  Cam,
  Counterfactual,
  GuidedBackprop,
  Deconv,
  GuidedGradCam,
  Backprop,
};

const char* to_string(Method method) noexcept;
std::optional<Method> method_from_string(std::string_view name);

struct ExplainRequest {
  Method method = Method::GradCam;
  std::size_t category = 0;
  std::string layer;  // empty: last convolutional checkpoint
  GradCamConfig config;
};

struct Explanation {
  /// Scalar map: feature-map resolution for the CAM family, image
  /// resolution (saliency magnitude) for pixel-space methods.
  Heatmap heat;
  /// Signed per-channel map for pixel-space methods.
  std::optional<SaliencyMap> saliency;
  std::string layer;
};

/// Single entry point over every method and ablation flag.
Explanation explain(const Tape& tape, const ExplainRequest& request);

}  // namespace gcam
