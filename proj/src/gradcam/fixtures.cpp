#include "gradcam/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "gradcam/error.hpp"
#include "gradcam/file_util.hpp"
#include "gradcam/imaging.hpp"

namespace gcam {

const char* to_string(ShapeKind kind) noexcept {
  switch (kind) {
    case ShapeKind::Square: return "square";
    case ShapeKind::Disc: return "disc";
    case ShapeKind::Triangle: return "triangle";
  }
  return "?";
}

const ObjectAnnotation* ShapesExample::object_for(std::size_t category) const {
  for (const auto& o : objects) {
    if (o.label == category) return &o;
  }
  return nullptr;
}

namespace {

struct Placement {
  ShapeKind kind;
  std::size_t x, y, side;
  int orientation = 0;  // triangles: apex up, right, down, left
};

bool covers(const Placement& p, std::size_t px, std::size_t py) {
  const double cx = static_cast<double>(px) + 0.5, cy = static_cast<double>(py) + 0.5;
  const double x0 = static_cast<double>(p.x), y0 = static_cast<double>(p.y);
  const double s = static_cast<double>(p.side);
  if (cx < x0 || cy < y0 || cx > x0 + s || cy > y0 + s) return false;
  switch (p.kind) {
    case ShapeKind::Square:
      return true;
    case ShapeKind::Disc: {
      const double dx = cx - (x0 + s / 2), dy = cy - (y0 + s / 2);
      return dx * dx + dy * dy <= (s / 2) * (s / 2);
    }
    case ShapeKind::Triangle: {
      // Depth runs from the apex to the base; the half-width grows as depth / 2.
      double depth = 0.0, lateral = 0.0;
      switch (p.orientation) {
        case 0: depth = cy - y0; lateral = cx - (x0 + s / 2); break;
        case 1: depth = x0 + s - cx; lateral = cy - (y0 + s / 2); break;
        case 2: depth = y0 + s - cy; lateral = cx - (x0 + s / 2); break;
        default: depth = cx - x0; lateral = cy - (y0 + s / 2); break;
      }
      return std::abs(lateral) <= depth / 2;
    }
  }
  return false;
}

std::string example_id(std::size_t index) {
  std::ostringstream out;
  out << "img" << std::setw(5) << std::setfill('0') << index;
  return out.str();
}

}  // namespace

ShapesExample make_shapes_example(const DatasetOptions& options, std::size_t index) {
  const std::size_t side = options.image_side;
  if (side < 16) fail(ErrorCode::InvalidArgument, "image side must be >= 16, got " + std::to_string(side));

  std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  const bool two = uniform(0.0, 1.0) < options.two_object_fraction;
  std::vector<Placement> placements;
  auto shape_side = [&](std::size_t limit) {
    const auto lo = static_cast<std::size_t>(std::lround(kMinShapeScale * static_cast<double>(side)));
    const auto hi = std::min(limit, static_cast<std::size_t>(std::lround(kMaxShapeScale * static_cast<double>(side))));
    return std::uniform_int_distribution<std::size_t>(std::max<std::size_t>(lo, 3), std::max<std::size_t>(hi, 3))(rng);
  };
  if (!two) {
    const auto kind = static_cast<ShapeKind>(pick(kShapeCategories));
    const std::size_t s = shape_side(side);
    placements.push_back({kind, pick(side - s + 1), pick(side - s + 1), s, 0});
  } else {
    const std::size_t first = pick(kShapeCategories);
    const std::size_t second = (first + 1 + pick(kShapeCategories - 1)) % kShapeCategories;
    const bool first_left = pick(2) == 0;
    const std::size_t half = side / 2;
    for (std::size_t i = 0; i < 2; ++i) {
      const auto kind = static_cast<ShapeKind>(i == 0 ? first : second);
      const bool left = (i == 0) == first_left;
      const std::size_t s = shape_side(half);
      const std::size_t x = (left ? 0 : half) + pick(half - s + 1);
      placements.push_back({kind, x, pick(side - s + 1), s, 0});
    }
  }

  Tensor image({3, side, side});
  double base[3];
  for (double& b : base) b = uniform(0.15, 0.45);
  const double freq = uniform(0.25, 0.7);
  const double angle = uniform(0.0, std::numbers::pi);
  const double phase = uniform(0.0, 2 * std::numbers::pi);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double stripe = 0.12 * std::sin(freq * (static_cast<double>(x) * std::cos(angle) +
                                                    static_cast<double>(y) * std::sin(angle)) + phase);
      for (std::size_t c = 0; c < 3; ++c) {
        image.at(c, y, x) = static_cast<float>(base[c] + stripe + uniform(-0.08, 0.08));
      }
    }
  }

  ShapesExample ex{example_id(index), {}, {}};
  for (const auto& p : placements) {
    double colour[3];
    for (double& v : colour) v = uniform(0.5, 0.95);
    ObjectAnnotation obj;
    obj.label = static_cast<std::size_t>(p.kind);
    obj.mask = BinaryMask{side, side, std::vector<std::uint8_t>(side * side, 0)};
    for (std::size_t y = p.y; y < std::min(side, p.y + p.side + 1); ++y) {
      for (std::size_t x = p.x; x < std::min(side, p.x + p.side + 1); ++x) {
        if (!covers(p, x, y)) continue;
        obj.mask.bits[y * side + x] = 1;
        for (std::size_t c = 0; c < 3; ++c) {
          image.at(c, y, x) = static_cast<float>(colour[c] + uniform(-0.05, 0.05));
        }
      }
    }
    obj.box = *obj.mask.bounding_box();
    ex.objects.push_back(std::move(obj));
  }
  // Quantize so the in-memory image equals its PPM encoding.
  ex.image = to_tensor(to_image8(image));
  return ex;
}

std::vector<ShapesExample> make_shapes_dataset(const DatasetOptions& options) {
  std::vector<ShapesExample> out;
  out.reserve(options.count);
  for (std::size_t i = 0; i < options.count; ++i) out.push_back(make_shapes_example(options, i));
  return out;
}

void save_dataset(const std::vector<ShapesExample>& examples, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create directory '" + dir.string() + "': " + ec.message());
  std::ostringstream index;
  for (const auto& ex : examples) {
    write_pnm(to_image8(ex.image), dir / (ex.id + ".ppm"));
    for (std::size_t k = 0; k < ex.objects.size(); ++k) {
      const auto& obj = ex.objects[k];
      const std::string mask_file = ex.id + "_" + std::to_string(k) + ".pgm";
      Image8 mask{obj.mask.width, obj.mask.height, 1, {}};
      for (auto b : obj.mask.bits) mask.pixels.push_back(b ? 255 : 0);
      write_pnm(mask, dir / mask_file);
      index << ex.id << ' ' << obj.label << ' ' << obj.box.x0 << ' ' << obj.box.y0 << ' ' << obj.box.x1
            << ' ' << obj.box.y1 << ' ' << mask_file << '\n';
    }
  }
  detail::write_file(dir / "index.txt", index.str());
}

std::vector<ShapesExample> load_dataset(const std::filesystem::path& dir) {
  const auto index_path = dir / "index.txt";
  std::istringstream in(detail::read_file(index_path));
  std::vector<ShapesExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string id, mask_file;
    ObjectAnnotation obj;
    if (!(fields >> id >> obj.label >> obj.box.x0 >> obj.box.y0 >> obj.box.x1 >> obj.box.y1 >> mask_file)) {
      fail(ErrorCode::Parse, index_path.string() + " line " + std::to_string(line_no) +
                                 ": expected 'id label x0 y0 x1 y1 maskfile'");
    }
    const Image8 mask = read_pnm(dir / mask_file);
    if (mask.channels != 1) fail(ErrorCode::Parse, (dir / mask_file).string() + ": mask must be a P5 image");
    obj.mask = BinaryMask{mask.width, mask.height, {}};
    for (auto v : mask.pixels) obj.mask.bits.push_back(v >= 128 ? 1 : 0);
    if (out.empty() || out.back().id != id) {
      out.push_back({id, to_tensor(read_pnm(dir / (id + ".ppm"))), {}});
    }
    out.back().objects.push_back(std::move(obj));
  }
  if (out.empty()) fail(ErrorCode::Parse, index_path.string() + ": dataset index is empty");
  return out;
}

std::vector<LabeledImage> labeled_images(const std::vector<ShapesExample>& examples) {
  std::vector<LabeledImage> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    LabeledImage li{ex.image, ex.label(), {}};
    if (ex.objects.size() > 1) li.second_label = ex.objects[1].label;
    out.push_back(std::move(li));
  }
  return out;
}

std::string fixture_spec_text(FixtureArch arch) {
  if (arch == FixtureArch::Gap) {
    return "# FIX-GAP: conv stack -> global average pooling -> dense\n"
           "input input channels=3 height=32 width=32 categories=3\n"
           "conv1 conv2d out=16 kernel=3 stride=1 pad=1\n"
           "relu1 relu\n"
           "pool1 maxpool window=2 stride=2\n"
           "conv2 conv2d out=16 kernel=3 stride=1 pad=1\n"
           "relu2 relu\n"
           "conv3 conv2d out=16 kernel=3 stride=1 pad=1\n"
           "relu3 relu\n"
           "gap gap\n"
           "fc dense out=3\n";
  }
  return "# FIX-FC: conv stack -> maxpool -> flatten -> dense -> relu -> dense\n"
         "input input channels=3 height=32 width=32 categories=3\n"
         "conv1 conv2d out=8 kernel=3 stride=1 pad=1\n"
         "relu1 relu\n"
         "pool1 maxpool window=2 stride=2\n"
         "conv2 conv2d out=16 kernel=3 stride=1 pad=1\n"
         "relu2 relu\n"
         "pool2 maxpool window=2 stride=2\n"
         "flat flatten\n"
         "fc1 dense out=32\n"
         "relu3 relu\n"
         "fc2 dense out=3\n";
}

ModelSpec fixture_spec(FixtureArch arch) { return parse_model_spec(fixture_spec_text(arch)); }

AttackResult adversarial_attack(const ModelSpec& spec, const WeightStore& weights,
                                const Tensor& image, std::size_t target_category,
                                const AttackOptions& options,
                                std::optional<std::size_t> true_category) {
  if (target_category >= spec.categories) {
    fail(ErrorCode::InvalidArgument, "target category " + std::to_string(target_category) + " out of range");
  }
  if (true_category && *true_category == target_category) {
    fail(ErrorCode::InvalidArgument, "attack target must differ from the true category");
  }
  if (options.epsilon < 0.0 || options.step_size < 0.0) {
    fail(ErrorCode::InvalidArgument, "epsilon and step size must be non-negative");
  }
  Tensor adv = image;
  auto target_prob = [&](const Tensor& scores) {
    return static_cast<double>(softmax(scores)[target_category]);
  };
  double prob = target_prob(predict(spec, weights, adv));
  for (std::size_t step = 0; step < options.steps && prob < 0.9999 && options.epsilon > 0.0; ++step) {
    // Ascend log p(target) = y_t - logsumexp(y), one backward pass per category.
    const ForwardResult fwd = forward(spec, weights, adv);
    const Tensor probs = softmax(fwd.scores);
    std::vector<double> grad(adv.size(), 0.0);
    for (std::size_t c = 0; c < spec.categories; ++c) {
      const double w = (c == target_category ? 1.0 : 0.0) - probs[c];
      const Tensor g = backward(fwd.tape, c, Tape::kInput);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += w * g[i];
    }
    for (std::size_t i = 0; i < adv.size(); ++i) {
      const double g = grad[i];
      const double moved = adv[i] + options.step_size * ((g > 0) - (g < 0));
      const double lo = std::max(0.0, static_cast<double>(image[i]) - options.epsilon);
      const double hi = std::min(1.0, static_cast<double>(image[i]) + options.epsilon);
      float v = static_cast<float>(std::clamp(moved, lo, hi));
      // float rounding must not push the perturbation past epsilon
      while (std::abs(static_cast<double>(v) - image[i]) > options.epsilon) {
        v = std::nextafter(v, image[i]);
      }
      adv[i] = v;
    }
    prob = target_prob(predict(spec, weights, adv));
  }
  return {std::move(adv), prob, prob >= options.success_probability};
}

}  // namespace gcam
