#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gradcam/eval.hpp"
#include "gradcam/nn.hpp"
#include "gradcam/train.hpp"

namespace gcam {

enum class ShapeKind : std::size_t { Square = 0, Disc = 1, Triangle = 2 };
inline constexpr std::size_t kShapeCategories = 3;

const char* to_string(ShapeKind kind) noexcept;

/// Shape side (or diameter) as a fraction of the image side.
inline constexpr double kMinShapeScale = 0.28;
inline constexpr double kMaxShapeScale = 0.45;

struct ObjectAnnotation {
  std::size_t label = 0;
  BBox box;
  BinaryMask mask;
};

struct ShapesExample {
  std::string id;
  Tensor image;  // [3,S,S], values are multiples of 1/255
  std::vector<ObjectAnnotation> objects;  // objects[0] carries the image label

  std::size_t label() const { return objects.front().label; }
  const ObjectAnnotation* object_for(std::size_t category) const;
};

struct DatasetOptions {
  std::size_t count = 100;
  std::size_t image_side = 32;
  std::uint64_t seed = 1;
  double two_object_fraction = 0.0;
};

/// Filled squares, discs and triangles on a textured background. Two-object
/// images hold two different shapes, one in each horizontal half. Each example
/// depends only on (seed, index).
std::vector<ShapesExample> make_shapes_dataset(const DatasetOptions& options);
ShapesExample make_shapes_example(const DatasetOptions& options, std::size_t index);

/// Directory of `<id>.ppm` images, `<id>_<k>.pgm` masks and `index.txt` with
/// one line per object: `id label x0 y0 x1 y1 maskfile`.
void save_dataset(const std::vector<ShapesExample>& examples, const std::filesystem::path& dir);
std::vector<ShapesExample> load_dataset(const std::filesystem::path& dir);

std::vector<LabeledImage> labeled_images(const std::vector<ShapesExample>& examples);

/// The two shipped architectures: GAP head (CAM-compatible) and a
/// maxpool/flatten/dense head (Grad-CAM only).
enum class FixtureArch { Gap, Fc };
std::string fixture_spec_text(FixtureArch arch);
ModelSpec fixture_spec(FixtureArch arch);

struct AttackOptions {
  double epsilon = 8.0 / 255.0;
  std::size_t steps = 40;
  double step_size = 1.0 / 255.0;
  double success_probability = 0.99;
};

struct AttackResult {
  Tensor image;
  double target_probability = 0.0;
  bool success = false;
};

/// Iterated sign-gradient ascent on the target's log-probability, projected
/// onto the epsilon infinity-ball around the image and onto [0,1].
/// Throws an invalid-argument error if target == true_category.
AttackResult adversarial_attack(const ModelSpec& spec, const WeightStore& weights,
                                const Tensor& image, std::size_t target_category,
                                const AttackOptions& options,
                                std::optional<std::size_t> true_category = std::nullopt);

}  // namespace gcam
