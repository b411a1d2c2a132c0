#include "gradcam/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gradcam/error.hpp"

namespace gcam {

double accuracy(const ModelSpec& spec, const WeightStore& weights,
                std::span<const LabeledImage> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : data) {
    const std::size_t top = top_k(predict(spec, weights, ex.image), 1).front();
    if (top == ex.label || top == ex.second_label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainReport train_fixture(const ModelSpec& spec, std::span<const LabeledImage> data,
                          const TrainOptions& options) {
  if (data.empty()) fail(ErrorCode::InvalidArgument, "training set is empty");
  if (options.batch_size == 0) fail(ErrorCode::InvalidArgument, "batch size must be positive");
  if (!(options.learning_rate > 0.0)) fail(ErrorCode::InvalidArgument, "learning rate must be positive");
  for (const auto& ex : data) {
    for (std::size_t label : {ex.label, ex.second_label.value_or(0)}) {
      if (label >= spec.categories) {
        fail(ErrorCode::InvalidArgument, "label " + std::to_string(label) + " >= category count " +
                                             std::to_string(spec.categories));
      }
    }
  }

  std::mt19937_64 rng(options.seed);
  TrainReport report{init_weights(spec, rng()), {}, 0.0};
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::vector<ParamGrad> batch_grad;
      for (std::size_t i = start; i < end; ++i) {
        const LabeledImage& ex = data[order[i]];
        ForwardResult fwd = forward(spec, report.weights, ex.image);
        const Tensor probs = softmax(fwd.scores);
        Tensor target({spec.categories});
        if (ex.second_label && *ex.second_label != ex.label) {
          target[ex.label] = 0.5f;
          target[*ex.second_label] = 0.5f;
        } else {
          target[ex.label] = 1.0f;
        }
        Tensor dlogits = probs;
        for (std::size_t c = 0; c < spec.categories; ++c) {
          if (target[c] > 0.0f) loss_sum -= target[c] * std::log(std::max(static_cast<double>(probs[c]), 1e-30));
          dlogits[c] -= target[c];
        }
        auto grads = parameter_gradients(fwd.tape, dlogits);
        if (batch_grad.empty()) {
          batch_grad = std::move(grads);
        } else {
          for (std::size_t n = 0; n < grads.size(); ++n) {
            for (std::size_t j = 0; j < grads[n].weight.size(); ++j) batch_grad[n].weight[j] += grads[n].weight[j];
            for (std::size_t j = 0; j < grads[n].bias.size(); ++j) batch_grad[n].bias[j] += grads[n].bias[j];
          }
        }
      }
      double scale = options.learning_rate / static_cast<double>(end - start);
      if (options.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& g : batch_grad) {
          for (double v : g.weight) sq += v * v;
          for (double v : g.bias) sq += v * v;
        }
        const double norm = std::sqrt(sq) / static_cast<double>(end - start);
        if (norm > options.clip_norm) scale *= options.clip_norm / norm;
      }
      // Parameterized tape ops line up with spec layers of the same name.
      std::size_t n = 0;
      for (const auto& layer : spec.layers) {
        const std::size_t op = n++;
        if (!layer.has_parameters()) continue;
        auto& p = report.weights.find(layer.name);
        for (std::size_t j = 0; j < p.weight.size(); ++j) {
          p.weight[j] = static_cast<float>(p.weight[j] - scale * batch_grad[op].weight[j]);
        }
        for (std::size_t j = 0; j < p.bias.size(); ++j) {
          p.bias[j] = static_cast<float>(p.bias[j] - scale * batch_grad[op].bias[j]);
        }
      }
    }
    const double mean_loss = loss_sum / static_cast<double>(data.size());
    if (!std::isfinite(mean_loss)) {
      fail(ErrorCode::Training, "loss became non-finite in epoch " + std::to_string(epoch + 1));
    }
    report.epoch_loss.push_back(mean_loss);
  }
  for (const auto& p : report.weights.layers()) {
    for (float v : p.weight.data()) {
      if (!std::isfinite(v)) fail(ErrorCode::Training, "weights diverged in layer '" + p.layer + "'");
    }
  }
  report.train_accuracy = accuracy(spec, report.weights, data);
  return report;
}

}  // namespace gcam
