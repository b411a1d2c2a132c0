#include "gradcam/explain.hpp"

#include <algorithm>
#include <cmath>

#include "gradcam/error.hpp"
#include "gradcam/imaging.hpp"

namespace gcam {

Tensor neuron_weights(const Tensor& grads, const GradCamConfig& config) {
  if (grads.rank() != 3) {
    fail(ErrorCode::Dimension, "neuron_weights expects [K,u,v] gradients, got " +
                                   shape_to_string(grads.shape()));
  }
  const std::size_t maps = grads.extent(0);
  const std::size_t area = grads.extent(1) * grads.extent(2);
  const double sign = config.gradient_sign < 0 ? -1.0 : 1.0;
  Tensor alpha({maps});
  for (std::size_t k = 0; k < maps; ++k) {
    double sum = 0.0;
    double peak = -INFINITY;
    for (std::size_t i = 0; i < area; ++i) {
      double g = sign * grads[k * area + i];
      if (config.absolute_gradients) g = std::abs(g);
      sum += g;
      peak = std::max(peak, g);
    }
    alpha[k] = static_cast<float>(config.weight_pooling == WeightPooling::Average
                                      ? sum / static_cast<double>(area)
                                      : peak);
  }
  return alpha;
}

namespace {

Heatmap combine(const Tensor& maps, std::span<const float> weights, bool rectify) {
  const std::size_t k_count = maps.extent(0), h = maps.extent(1), w = maps.extent(2);
  if (weights.size() != k_count) {
    fail(ErrorCode::Dimension, std::to_string(weights.size()) + " weights for " +
                                   std::to_string(k_count) + " feature maps");
  }
  Heatmap out(w, h);
  for (std::size_t i = 0; i < h * w; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) acc += static_cast<double>(weights[k]) * maps[k * h * w + i];
    if (rectify) acc = std::max(acc, 0.0);
    out[i] = static_cast<float>(acc);
  }
  return out;
}

const TapeOp& head_op(const Tape& tape) {
  if (tape.ops().empty()) {
    fail(ErrorCode::ArchitectureIncompatible, "CAM needs a GAP -> dense head; the network has no layers");
  }
  return tape.ops().back();
}

}  // namespace

Heatmap gradcam(const Tape& tape, std::size_t category, std::string_view layer,
                const GradCamConfig& config) {
  const Tensor grads = grad_at_layer(tape, category, layer,
                                     {config.relu_policy_for_gradients, config.score_point});
  const Tensor alpha = neuron_weights(grads, config);
  return combine(tape.checkpoint(layer), alpha.data(), config.apply_relu);
}

Heatmap counterfactual(const Tape& tape, std::size_t category, std::string_view layer) {
  GradCamConfig config;
  config.gradient_sign = -1;
  config.apply_relu = true;
  return gradcam(tape, category, layer, config);
}

std::string cam_layer(const Tape& tape) {
  const TapeOp& head = head_op(tape);
  const TapeOp* pool = tape.producer(head.input);
  if (head.kind != OpKind::Dense || pool == nullptr || pool->kind != OpKind::GlobalAvgPool) {
    fail(ErrorCode::ArchitectureIncompatible,
         "CAM is only defined for networks ending in global average pooling followed by a "
         "dense layer; this network's head is '" + head.layer + "'");
  }
  const TapeOp* features = tape.producer(pool->input);
  return features ? features->layer : std::string(Tape::kInput);
}

Heatmap cam(const Tape& tape, std::size_t category) {
  cam_layer(tape);
  return cam(tape, category, head_op(tape).weight);
}

Heatmap cam(const Tape& tape, std::size_t category, const Tensor& head_weights) {
  const std::string layer = cam_layer(tape);
  if (head_weights.rank() != 2 || category >= head_weights.extent(0)) {
    fail(ErrorCode::InvalidArgument, "category " + std::to_string(category) +
                                         " not covered by head weights " + shape_to_string(head_weights.shape()));
  }
  const std::size_t k_count = head_weights.extent(1);
  return combine(tape.checkpoint(layer), head_weights.data().subspan(category * k_count, k_count), false);
}

SaliencyMap pixel_saliency(const Tape& tape, std::size_t category, ReluPolicy policy,
                           ScorePoint score_point) {
  return {backward(tape, category, Tape::kInput, {policy, score_point})};
}

SaliencyMap guided_gradcam(const SaliencyMap& saliency, const Heatmap& heat) {
  const Tensor& s = saliency.values;
  if (s.rank() != 3) fail(ErrorCode::Dimension, "saliency must be [C,H,W]");
  const std::size_t c = s.extent(0), h = s.extent(1), w = s.extent(2);
  const Heatmap weight = bilinear_resize(heat, w, h).normalized();
  Tensor out = s;
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < h * w; ++i) out[k * h * w + i] = s[k * h * w + i] * weight[i];
  }
  return {std::move(out)};
}

Heatmap saliency_magnitude(const SaliencyMap& saliency) {
  const Tensor& s = saliency.values;
  if (s.rank() != 3) fail(ErrorCode::Dimension, "saliency must be [C,H,W]");
  const std::size_t c = s.extent(0), h = s.extent(1), w = s.extent(2);
  Heatmap out(w, h);
  for (std::size_t i = 0; i < h * w; ++i) {
    float m = 0.0f;
    for (std::size_t k = 0; k < c; ++k) m = std::max(m, std::abs(s[k * h * w + i]));
    out[i] = m;
  }
  return out;
}

const char* to_string(Method method) noexcept {
  switch (method) {
    case Method::GradCam: return "gradcam";
    case Method::Cam: return "cam";
    case Method::Counterfactual: return "counterfactual";
    case Method::GuidedBackprop: return "guided-backprop";
    case Method::Deconv: return "deconv";
    case Method::GuidedGradCam: return "guided-gradcam";
    case Method::Backprop: return "backprop";
  }
  return "?";
}

std::optional<Method> method_from_string(std::string_view name) {
  for (Method m : {Method::GradCam, Method::Cam, Method::Counterfactual, Method::GuidedBackprop,
                   Method::Deconv, Method::GuidedGradCam, Method::Backprop}) {
    if (name == to_string(m)) return m;
  }
  return std::nullopt;
}

Explanation explain(const Tape& tape, const ExplainRequest& request) {
  Explanation out;
  auto target_layer = [&] {
    return request.layer.empty() ? last_conv_checkpoint(tape) : request.layer;
  };
  auto with_saliency = [&](SaliencyMap s) {
    out.heat = saliency_magnitude(s);
    out.saliency = std::move(s);
  };

  switch (request.method) {
    case Method::GradCam:
      out.layer = target_layer();
      out.heat = gradcam(tape, request.category, out.layer, request.config);
      break;
    case Method::Counterfactual: {
      out.layer = target_layer();
      GradCamConfig config = request.config;
      config.gradient_sign = -1;
      config.apply_relu = true;
      out.heat = gradcam(tape, request.category, out.layer, config);
      break;
    }
    case Method::Cam:
      out.layer = cam_layer(tape);
      if (!request.layer.empty() && request.layer != out.layer) {
        fail(ErrorCode::InvalidArgument, "CAM is computed at '" + out.layer + "', not '" + request.layer + "'");
      }
      out.heat = cam(tape, request.category);
      break;
    case Method::GuidedBackprop:
      out.layer = std::string(Tape::kInput);
      with_saliency(pixel_saliency(tape, request.category, ReluPolicy::Guided, request.config.score_point));
      break;
    case Method::Deconv:
      out.layer = std::string(Tape::kInput);
      with_saliency(pixel_saliency(tape, request.category, ReluPolicy::Deconv, request.config.score_point));
      break;
    case Method::Backprop:
      out.layer = std::string(Tape::kInput);
      with_saliency(pixel_saliency(tape, request.category, ReluPolicy::Standard, request.config.score_point));
      break;
    case Method::GuidedGradCam: {
      out.layer = target_layer();
      const Heatmap heat = gradcam(tape, request.category, out.layer, request.config);
      with_saliency(guided_gradcam(
          pixel_saliency(tape, request.category, ReluPolicy::Guided, request.config.score_point), heat));
      break;
    }
  }
  return out;
}

}  // namespace gcam
