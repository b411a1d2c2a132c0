#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gradcam/nn.hpp"

namespace gcam {

struct LabeledImage {
  Tensor image;
  std::size_t label = 0;
  // Two-object images carry both categories; the target splits its mass evenly.
  std::optional<std::size_t> second_label;
};

struct TrainOptions {
  std::size_t epochs = 20;
  double learning_rate = 0.02;
  std::uint64_t seed = 1;
  std::size_t batch_size = 1;
  /// Updates whose global gradient norm exceeds this are scaled down to it;
  /// 0 disables clipping.
  double clip_norm = 5.0;
};

struct TrainReport {
  WeightStore weights;
  std::vector<double> epoch_loss;  // mean cross-entropy seen during each epoch
  double train_accuracy = 0.0;     // after the final epoch
};

/// SGD on softmax cross-entropy with a fixed learning rate. Single-threaded and fully
/// deterministic in `options.seed`. Throws a training error naming the epoch
/// if the loss becomes non-finite.
TrainReport train_fixture(const ModelSpec& spec, std::span<const LabeledImage> data,
                          const TrainOptions& options);

double accuracy(const ModelSpec& spec, const WeightStore& weights,
                std::span<const LabeledImage> data);

}  // namespace gcam
