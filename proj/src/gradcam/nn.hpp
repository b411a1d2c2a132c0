#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gradcam/autodiff.hpp"
#include "gradcam/tensor.hpp"

namespace gcam {

enum class LayerKind { Conv2d, Relu, MaxPool, GlobalAvgPool, Flatten, Dense };

const char* to_string(LayerKind kind) noexcept;

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Relu;
  std::size_t out = 0;     // conv2d: kernels, dense: outputs
  std::size_t kernel = 0;  // conv2d
  std::size_t window = 0;  // maxpool
  std::size_t stride = 1;
  std::size_t padding = 0;

  bool has_parameters() const noexcept {
    return kind == LayerKind::Conv2d || kind == LayerKind::Dense;
  }
};

/// Declarative sequential network. Text form, one layer per line:
///
///   input input channels=3 height=32 width=32 categories=3
///   conv1 conv2d out=8 kernel=3 stride=1 pad=1
///   relu1 relu
///   pool1 maxpool window=2 stride=2
///   gap gap
///   fc dense out=3
///
/// '#' starts a comment. Shapes are chain-checked at parse time and the last
/// layer must produce the [categories] score vector.
struct ModelSpec {
  Shape input_shape;  // [C,H,W]
  std::size_t categories = 0;
  std::vector<LayerSpec> layers;

  /// Output shape of every layer, in order. Throws a dimension error if the
  /// chain does not check.
  std::vector<Shape> layer_shapes() const;
  const LayerSpec& layer(std::string_view name) const;
  std::string to_text() const;
};

ModelSpec parse_model_spec(std::string_view text);
ModelSpec load_model_spec(const std::filesystem::path& path);

struct LayerParameters {
  std::string layer;
  Tensor weight;
  Tensor bias;
};

/// Parameters for every conv2d/dense layer, in spec order.
///
/// On disk: `<prefix>.manifest` (text) lists `layer param shape offset` with
/// byte offsets into `<prefix>.bin`, which holds the little-endian float32
/// payloads concatenated in manifest order.
class WeightStore {
 public:
  WeightStore() = default;
  explicit WeightStore(std::vector<LayerParameters> layers) : layers_(std::move(layers)) {}

  const std::vector<LayerParameters>& layers() const noexcept { return layers_; }
  std::vector<LayerParameters>& layers() noexcept { return layers_; }
  const LayerParameters& find(std::string_view layer) const;
  LayerParameters& find(std::string_view layer);
  std::size_t parameter_count() const noexcept;

  /// Throws if any parameterized layer is missing, unknown, or mis-shaped.
  void check_against(const ModelSpec& spec) const;

  friend bool operator==(const WeightStore& a, const WeightStore& b);

 private:
  std::vector<LayerParameters> layers_;
};

inline bool operator==(const LayerParameters& a, const LayerParameters& b) {
  return a.layer == b.layer && a.weight == b.weight && a.bias == b.bias;
}
inline bool operator==(const WeightStore& a, const WeightStore& b) { return a.layers_ == b.layers_; }

/// Expected parameter shapes of a layer given its input shape.
std::pair<Shape, Shape> parameter_shapes(const LayerSpec& layer, const Shape& input);

/// He-normal weights, deterministic in `seed`. Biases are zero except in the
/// first parameterized layer, where they centre [0,1] inputs at 0.5.
WeightStore init_weights(const ModelSpec& spec, std::uint64_t seed);
WeightStore zero_weights(const ModelSpec& spec);

void save_weights(const WeightStore& weights, const std::filesystem::path& prefix);
WeightStore load_weights(const std::filesystem::path& prefix);
WeightStore load_weights(const std::filesystem::path& prefix, const ModelSpec& spec);

struct ForwardResult {
  Tensor scores;  // pre-softmax logits
  Tape tape;
};

ForwardResult forward(const ModelSpec& spec, const WeightStore& weights, const Tensor& image);

/// Scores without recording a tape; bit-identical to forward().scores.
Tensor predict(const ModelSpec& spec, const WeightStore& weights, const Tensor& image);

/// Category indices sorted by descending score (ties: lower index first).
std::vector<std::size_t> top_k(const Tensor& scores, std::size_t k);

}  // namespace gcam
