#include "gradcam/nn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "gradcam/byte_order.hpp"
#include "gradcam/error.hpp"
#include "gradcam/file_util.hpp"

namespace gcam {

const char* to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::GlobalAvgPool: return "gap";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
  }
  return "?";
}

namespace {

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::size_t parse_size(std::string_view text, const std::string& where) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorCode::Parse, where + ": expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return value;
}

Shape parse_shape(std::string_view text, const std::string& where) {
  Shape shape;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find('x', start), text.size());
    shape.push_back(parse_size(text.substr(start, end - start), where));
    start = end + 1;
  }
  return shape;
}

std::optional<LayerKind> kind_from_string(std::string_view s) {
  if (s == "conv2d") return LayerKind::Conv2d;
  if (s == "relu") return LayerKind::Relu;
  if (s == "maxpool") return LayerKind::MaxPool;
  if (s == "gap") return LayerKind::GlobalAvgPool;
  if (s == "flatten") return LayerKind::Flatten;
  if (s == "dense") return LayerKind::Dense;
  return std::nullopt;
}

Shape layer_output_shape(const LayerSpec& layer, const Shape& in) {
  auto need_spatial = [&] {
    if (in.size() != 3) {
      fail(ErrorCode::Dimension, "layer '" + layer.name + "' (" + to_string(layer.kind) +
                                     ") needs a [C,H,W] input, got " + shape_to_string(in));
    }
  };
  switch (layer.kind) {
    case LayerKind::Conv2d:
      need_spatial();
      return {layer.out, window_output_extent(in[1], layer.kernel, layer.stride, layer.padding),
              window_output_extent(in[2], layer.kernel, layer.stride, layer.padding)};
    case LayerKind::Relu:
      return in;
    case LayerKind::MaxPool:
      need_spatial();
      if (layer.window > in[1] || layer.window > in[2]) {
        fail(ErrorCode::Dimension, "layer '" + layer.name + "': window larger than input " +
                                       shape_to_string(in));
      }
      return {in[0], window_output_extent(in[1], layer.window, layer.stride, 0),
              window_output_extent(in[2], layer.window, layer.stride, 0)};
    case LayerKind::GlobalAvgPool:
      need_spatial();
      return {in[0]};
    case LayerKind::Flatten:
      return {shape_size(in)};
    case LayerKind::Dense:
      if (in.size() != 1) {
        fail(ErrorCode::Dimension, "layer '" + layer.name + "' (dense) needs a flat input, got " +
                                       shape_to_string(in));
      }
      return {layer.out};
  }
  return in;
}

}  // namespace

std::vector<Shape> ModelSpec::layer_shapes() const {
  std::vector<Shape> shapes;
  Shape current = input_shape;
  for (const auto& layer : layers) {
    current = layer_output_shape(layer, current);
    shapes.push_back(current);
  }
  return shapes;
}

const LayerSpec& ModelSpec::layer(std::string_view name) const {
  for (const auto& l : layers) {
    if (l.name == name) return l;
  }
  fail(ErrorCode::Lookup, "model has no layer named '" + std::string(name) + "'");
}

std::string ModelSpec::to_text() const {
  std::ostringstream out;
  out << "input input channels=" << input_shape.at(0) << " height=" << input_shape.at(1)
      << " width=" << input_shape.at(2) << " categories=" << categories << '\n';
  for (const auto& l : layers) {
    out << l.name << ' ' << to_string(l.kind);
    switch (l.kind) {
      case LayerKind::Conv2d:
        out << " out=" << l.out << " kernel=" << l.kernel << " stride=" << l.stride
            << " pad=" << l.padding;
        break;
      case LayerKind::MaxPool:
        out << " window=" << l.window << " stride=" << l.stride;
        break;
      case LayerKind::Dense:
        out << " out=" << l.out;
        break;
      default:
        break;
    }
    out << '\n';
  }
  return out.str();
}

ModelSpec parse_model_spec(std::string_view text) {
  ModelSpec spec;
  bool have_input = false;
  std::set<std::string> names{"input"};
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.resize(hash);
    auto tokens = split_ws(raw);
    if (tokens.empty()) continue;
    const std::string where = "model spec line " + std::to_string(line_no);
    if (tokens.size() < 2) fail(ErrorCode::Parse, where + ": expected 'name kind k=v ...'");

    std::map<std::string, std::size_t> kv;
    for (std::size_t i = 2; i < tokens.size(); ++i) {
      const auto eq = tokens[i].find('=');
      if (eq == std::string::npos || eq == 0) {
        fail(ErrorCode::Parse, where + ": expected key=value, got '" + tokens[i] + "'");
      }
      kv[tokens[i].substr(0, eq)] = parse_size(std::string_view(tokens[i]).substr(eq + 1), where);
    }
    auto take = [&](const char* key, std::optional<std::size_t> fallback = std::nullopt) {
      auto it = kv.find(key);
      if (it == kv.end()) {
        if (fallback) return *fallback;
        fail(ErrorCode::Parse, where + ": missing '" + key + "'");
      }
      const auto v = it->second;
      kv.erase(it);
      return v;
    };

    if (tokens[1] == "input") {
      if (have_input || !spec.layers.empty()) {
        fail(ErrorCode::Parse, where + ": the input line must come first and appear once");
      }
      spec.input_shape = {take("channels"), take("height"), take("width")};
      spec.categories = take("categories");
      for (auto e : spec.input_shape) {
        if (e == 0) fail(ErrorCode::Parse, where + ": input extents must be >= 1");
      }
      have_input = true;
    } else {
      if (!have_input) fail(ErrorCode::Parse, where + ": layer before the input line");
      const auto kind = kind_from_string(tokens[1]);
      if (!kind) fail(ErrorCode::Parse, where + ": unknown layer kind '" + tokens[1] + "'");
      LayerSpec layer;
      layer.name = tokens[0];
      layer.kind = *kind;
      if (!names.insert(layer.name).second) {
        fail(ErrorCode::Parse, where + ": duplicate layer name '" + layer.name + "'");
      }
      switch (layer.kind) {
        case LayerKind::Conv2d:
          layer.out = take("out");
          layer.kernel = take("kernel");
          layer.stride = take("stride", 1);
          layer.padding = take("pad", 0);
          break;
        case LayerKind::MaxPool:
          layer.window = take("window");
          layer.stride = take("stride", layer.window);
          break;
        case LayerKind::Dense:
          layer.out = take("out");
          break;
        default:
          break;
      }
      if ((layer.has_parameters() && layer.out == 0) ||
          (layer.kind == LayerKind::Conv2d && layer.kernel == 0) ||
          (layer.kind == LayerKind::MaxPool && layer.window == 0) || layer.stride == 0) {
        fail(ErrorCode::Parse, where + ": sizes and strides must be positive");
      }
      spec.layers.push_back(std::move(layer));
    }
    if (!kv.empty()) fail(ErrorCode::Parse, where + ": unknown key '" + kv.begin()->first + "'");
  }
  if (!have_input) fail(ErrorCode::Parse, "model spec has no input line");
  if (spec.categories == 0) fail(ErrorCode::Parse, "model spec: categories must be >= 1");

  const auto shapes = spec.layer_shapes();
  const Shape& out = shapes.empty() ? spec.input_shape : shapes.back();
  if (out != Shape{spec.categories}) {
    fail(ErrorCode::Dimension, "model output shape " + shape_to_string(out) +
                                   " is not a score vector of " + std::to_string(spec.categories) +
                                   " categories");
  }
  return spec;
}

ModelSpec load_model_spec(const std::filesystem::path& path) {
  try {
    return parse_model_spec(detail::read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) throw;
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// WeightStore

const LayerParameters& WeightStore::find(std::string_view layer) const {
  for (const auto& l : layers_) {
    if (l.layer == layer) return l;
  }
  fail(ErrorCode::Lookup, "no weights for layer '" + std::string(layer) + "'");
}

LayerParameters& WeightStore::find(std::string_view layer) {
  return const_cast<LayerParameters&>(std::as_const(*this).find(layer));
}

std::size_t WeightStore::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

std::pair<Shape, Shape> parameter_shapes(const LayerSpec& layer, const Shape& input) {
  if (layer.kind == LayerKind::Conv2d) {
    return {{layer.out, input.at(0), layer.kernel, layer.kernel}, {layer.out}};
  }
  if (layer.kind == LayerKind::Dense) return {{layer.out, shape_size(input)}, {layer.out}};
  fail(ErrorCode::InvalidArgument, "layer '" + layer.name + "' has no parameters");
}

namespace {

template <typename Fn>
void for_each_parameterized(const ModelSpec& spec, Fn&& fn) {
  Shape current = spec.input_shape;
  for (const auto& layer : spec.layers) {
    if (layer.has_parameters()) fn(layer, current);
    current = layer_output_shape(layer, current);
  }
}

}  // namespace

void WeightStore::check_against(const ModelSpec& spec) const {
  std::set<std::string> expected;
  for_each_parameterized(spec, [&](const LayerSpec& layer, const Shape& in) {
    expected.insert(layer.name);
    const auto [w_shape, b_shape] = parameter_shapes(layer, in);
    const LayerParameters* found = nullptr;
    for (const auto& l : layers_) {
      if (l.layer == layer.name) found = &l;
    }
    if (!found) fail(ErrorCode::Lookup, "weights missing for layer '" + layer.name + "'");
    if (found->weight.shape() != w_shape || found->bias.shape() != b_shape) {
      fail(ErrorCode::Dimension, "layer '" + layer.name + "': weights " +
                                     shape_to_string(found->weight.shape()) + "/" +
                                     shape_to_string(found->bias.shape()) + " but spec needs " +
                                     shape_to_string(w_shape) + "/" + shape_to_string(b_shape));
    }
  });
  for (const auto& l : layers_) {
    if (!expected.contains(l.layer)) {
      fail(ErrorCode::Lookup, "weights for unknown layer '" + l.layer + "'");
    }
  }
}

WeightStore init_weights(const ModelSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LayerParameters> layers;
  for_each_parameterized(spec, [&](const LayerSpec& layer, const Shape& in) {
    auto [w_shape, b_shape] = parameter_shapes(layer, in);
    const std::size_t fan_in = shape_size(w_shape) / w_shape[0];
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    Tensor w(w_shape);
    for (auto& v : w.data()) v = static_cast<float>(normal(rng));
    Tensor b(b_shape);
    if (layers.empty()) {
      // Inputs live in [0,1]; centre them at 0.5 for the first layer.
      for (std::size_t k = 0; k < w_shape[0]; ++k) {
        double sum = 0.0;
        for (std::size_t j = 0; j < fan_in; ++j) sum += w.data()[k * fan_in + j];
        b[k] = static_cast<float>(-0.5 * sum);
      }
    }
    layers.push_back({layer.name, std::move(w), std::move(b)});
  });
  return WeightStore(std::move(layers));
}

WeightStore zero_weights(const ModelSpec& spec) {
  std::vector<LayerParameters> layers;
  for_each_parameterized(spec, [&](const LayerSpec& layer, const Shape& in) {
    auto [w_shape, b_shape] = parameter_shapes(layer, in);
    layers.push_back({layer.name, Tensor(w_shape), Tensor(b_shape)});
  });
  return WeightStore(std::move(layers));
}

namespace {

constexpr std::string_view kManifestMagic = "WSTORE1";

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
  return std::filesystem::path(prefix.string() + suffix);
}

}  // namespace

void save_weights(const WeightStore& weights, const std::filesystem::path& prefix) {
  std::ostringstream manifest;
  manifest << kManifestMagic << '\n';
  std::string blob;
  for (const auto& l : weights.layers()) {
    manifest << l.layer << " weight " << shape_to_string(l.weight.shape()) << ' ' << blob.size() << '\n';
    detail::append_f32le(blob, l.weight.data());
    manifest << l.layer << " bias " << shape_to_string(l.bias.shape()) << ' ' << blob.size() << '\n';
    detail::append_f32le(blob, l.bias.data());
  }
  detail::write_file(with_suffix(prefix, ".manifest"), manifest.str());
  detail::write_file(with_suffix(prefix, ".bin"), blob);
}

WeightStore load_weights(const std::filesystem::path& prefix) {
  const auto manifest_path = with_suffix(prefix, ".manifest");
  const auto blob_path = with_suffix(prefix, ".bin");
  const std::string manifest = detail::read_file(manifest_path);
  const std::string blob = detail::read_file(blob_path);

  std::istringstream in(manifest);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kManifestMagic) {
    fail(ErrorCode::Parse, manifest_path.string() + ": missing '" + std::string(kManifestMagic) + "' header");
  }
  std::vector<LayerParameters> layers;
  std::size_t expected_offset = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    const std::string where = manifest_path.string() + " line " + std::to_string(line_no);
    if (tokens.size() != 4 || (tokens[1] != "weight" && tokens[1] != "bias")) {
      fail(ErrorCode::Parse, where + ": expected 'layer weight|bias shape offset'");
    }
    const Shape shape = parse_shape(tokens[2], where);
    const std::size_t offset = parse_size(tokens[3], where);
    if (offset != expected_offset) {
      fail(ErrorCode::Parse, where + ": offset " + std::to_string(offset) + ", expected " +
                                 std::to_string(expected_offset));
    }
    const std::size_t bytes = shape_size(shape) * 4;
    if (offset + bytes > blob.size()) {
      fail(ErrorCode::Parse, blob_path.string() + ": truncated at byte " + std::to_string(blob.size()) +
                                 ", '" + tokens[0] + " " + tokens[1] + "' needs bytes " +
                                 std::to_string(offset) + ".." + std::to_string(offset + bytes));
    }
    Tensor t(shape, detail::read_f32le(blob.data() + offset, shape_size(shape)));
    expected_offset += bytes;
    if (tokens[1] == "weight") {
      layers.push_back({tokens[0], std::move(t), Tensor()});
    } else {
      if (layers.empty() || layers.back().layer != tokens[0]) {
        fail(ErrorCode::Parse, where + ": bias for '" + tokens[0] + "' does not follow its weight");
      }
      layers.back().bias = std::move(t);
    }
  }
  if (expected_offset != blob.size()) {
    fail(ErrorCode::Parse, blob_path.string() + ": " + std::to_string(blob.size() - expected_offset) +
                               " trailing bytes after byte " + std::to_string(expected_offset));
  }
  return WeightStore(std::move(layers));
}

WeightStore load_weights(const std::filesystem::path& prefix, const ModelSpec& spec) {
  WeightStore w = load_weights(prefix);
  try {
    w.check_against(spec);
  } catch (const Error& e) {
    throw Error(ErrorCode::Parse, prefix.string() + ".manifest: " + e.what());
  }
  return w;
}

// ---------------------------------------------------------------------------
// Inference

namespace {

void check_input(const ModelSpec& spec, const Tensor& image) {
  if (image.shape() != spec.input_shape) {
    fail(ErrorCode::Dimension, "image shape " + shape_to_string(image.shape()) +
                                   " does not match model input " + shape_to_string(spec.input_shape));
  }
}

}  // namespace

ForwardResult forward(const ModelSpec& spec, const WeightStore& weights, const Tensor& image) {
  check_input(spec, image);
  weights.check_against(spec);
  Tape tape(image);
  TensorId x = 0;
  for (const auto& layer : spec.layers) {
    switch (layer.kind) {
      case LayerKind::Conv2d: {
        const auto& p = weights.find(layer.name);
        x = tape.conv2d(x, p.weight, p.bias, layer.stride, layer.padding, layer.name);
        break;
      }
      case LayerKind::Relu: x = tape.relu(x, layer.name); break;
      case LayerKind::MaxPool: x = tape.maxpool(x, layer.window, layer.stride, layer.name); break;
      case LayerKind::GlobalAvgPool: x = tape.global_avg_pool(x, layer.name); break;
      case LayerKind::Flatten: x = tape.flatten(x, layer.name); break;
      case LayerKind::Dense: {
        const auto& p = weights.find(layer.name);
        x = tape.dense(x, p.weight, p.bias, layer.name);
        break;
      }
    }
  }
  Tensor scores = tape.scores();
  return {std::move(scores), std::move(tape)};
}

Tensor predict(const ModelSpec& spec, const WeightStore& weights, const Tensor& image) {
  check_input(spec, image);
  Tensor x = image;
  for (const auto& layer : spec.layers) {
    switch (layer.kind) {
      case LayerKind::Conv2d: {
        const auto& p = weights.find(layer.name);
        x = conv2d(x, p.weight, p.bias, layer.stride, layer.padding);
        break;
      }
      case LayerKind::Relu: x = relu(x); break;
      case LayerKind::MaxPool: x = maxpool2d(x, layer.window, layer.stride).output; break;
      case LayerKind::GlobalAvgPool: x = global_avg_pool(x); break;
      case LayerKind::Flatten: x = x.reshaped({x.size()}); break;
      case LayerKind::Dense: {
        const auto& p = weights.find(layer.name);
        x = dense(x, p.weight, p.bias);
        break;
      }
    }
  }
  return x;
}

std::vector<std::size_t> top_k(const Tensor& scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

}  // namespace gcam
