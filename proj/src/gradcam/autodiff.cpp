#include "gradcam/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "gradcam/error.hpp"

namespace gcam {

const char* to_string(ReluPolicy policy) noexcept {
  switch (policy) {
    case ReluPolicy::Standard: return "standard";
    case ReluPolicy::Guided: return "guided";
    case ReluPolicy::Deconv: return "deconv";
  }
  return "?";
}

Tape::Tape(Tensor image) {
  tensors_.push_back(std::move(image));
  checkpoints_.emplace(std::string(kInput), 0);
}

TensorId Tape::push(TapeOp op, Tensor out) {
  if (checkpoints_.contains(op.layer)) {
    fail(ErrorCode::InvalidArgument, "duplicate checkpoint name '" + op.layer + "'");
  }
  const TensorId id = tensors_.size();
  op.output = id;
  tensors_.push_back(std::move(out));
  checkpoints_.emplace(op.layer, id);
  ops_.push_back(std::move(op));
  return id;
}

TensorId Tape::conv2d(TensorId in, const Tensor& kernels, const Tensor& bias,
                      std::size_t stride, std::size_t padding, std::string name) {
  Tensor out = gcam::conv2d(tensor(in), kernels, bias, stride, padding);
  TapeOp op{OpKind::Conv2d, in, 0, std::move(name), kernels, bias, stride, padding, {}};
  return push(std::move(op), std::move(out));
}

TensorId Tape::relu(TensorId in, std::string name) {
  Tensor out = gcam::relu(tensor(in));
  return push(TapeOp{OpKind::Relu, in, 0, std::move(name), {}, {}, 1, 0, {}}, std::move(out));
}

TensorId Tape::maxpool(TensorId in, std::size_t window, std::size_t stride, std::string name) {
  PoolResult pooled = maxpool2d(tensor(in), window, stride);
  TapeOp op{OpKind::MaxPool, in, 0, std::move(name), {}, {}, stride, 0, std::move(pooled.argmax)};
  return push(std::move(op), std::move(pooled.output));
}

TensorId Tape::global_avg_pool(TensorId in, std::string name) {
  Tensor out = gcam::global_avg_pool(tensor(in));
  return push(TapeOp{OpKind::GlobalAvgPool, in, 0, std::move(name), {}, {}, 1, 0, {}},
              std::move(out));
}

TensorId Tape::flatten(TensorId in, std::string name) {
  Tensor out = tensor(in).reshaped({tensor(in).size()});
  return push(TapeOp{OpKind::Flatten, in, 0, std::move(name), {}, {}, 1, 0, {}}, std::move(out));
}

TensorId Tape::dense(TensorId in, const Tensor& weights, const Tensor& bias, std::string name) {
  Tensor out = gcam::dense(tensor(in), weights, bias);
  TapeOp op{OpKind::Dense, in, 0, std::move(name), weights, bias, 1, 0, {}};
  return push(std::move(op), std::move(out));
}

bool Tape::has_checkpoint(std::string_view name) const {
  return checkpoints_.find(name) != checkpoints_.end();
}

TensorId Tape::checkpoint_id(std::string_view name) const {
  auto it = checkpoints_.find(name);
  if (it == checkpoints_.end()) {
    fail(ErrorCode::Lookup, "unknown checkpoint '" + std::string(name) + "'");
  }
  return it->second;
}

std::vector<std::string> Tape::checkpoint_names() const {
  std::vector<std::pair<TensorId, std::string>> named;
  for (const auto& [name, id] : checkpoints_) named.emplace_back(id, name);
  std::sort(named.begin(), named.end());
  std::vector<std::string> out;
  for (auto& [id, name] : named) out.push_back(std::move(name));
  return out;
}

const TapeOp* Tape::producer(TensorId id) const {
  if (id == 0) return nullptr;
  return &ops_.at(id - 1);
}

namespace {

using Grad = std::vector<double>;

void conv_backward(const TapeOp& op, const Tensor& input, const Grad& g_out, Grad* g_in,
                   ParamGrad* params) {
  const std::size_t channels = input.extent(0), height = input.extent(1), width = input.extent(2);
  const std::size_t out_channels = op.weight.extent(0), kh = op.weight.extent(2),
                    kw = op.weight.extent(3);
  const std::size_t out_h = window_output_extent(height, kh, op.stride, op.padding);
  const std::size_t out_w = window_output_extent(width, kw, op.stride, op.padding);
  const std::size_t stride = op.stride, padding = op.padding;
  const float* in = input.data().data();

  for (std::size_t k = 0; k < out_channels; ++k) {
    const double* gk = g_out.data() + k * out_h * out_w;
    if (params) {
      for (std::size_t i = 0; i < out_h * out_w; ++i) params->bias[k] += gk[i];
    }
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const auto [oy0, oy1] = detail::valid_taps(out_h, height, ky, stride, padding);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const auto [ox0, ox1] = detail::valid_taps(out_w, width, kx, stride, padding);
          const std::size_t w_idx = ((k * channels + c) * kh + ky) * kw + kx;
          const double wv = op.weight[w_idx];
          double wgrad = 0.0;
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            // Index of the input pixel under output (oy, 0) before the x offset.
            const std::size_t base = (c * height + oy * stride + ky - padding) * width + kx - padding;
            const double* grow = gk + oy * out_w;
            if (g_in) {
              double* irow = g_in->data() + base;
              for (std::size_t ox = ox0; ox < ox1; ++ox) irow[ox * stride] += grow[ox] * wv;
            }
            if (params) {
              const float* xrow = in + base;
              for (std::size_t ox = ox0; ox < ox1; ++ox) wgrad += grow[ox] * static_cast<double>(xrow[ox * stride]);
            }
          }
          if (params) params->weight[w_idx] += wgrad;
        }
      }
    }
  }
}

void dense_backward(const TapeOp& op, const Tensor& input, const Grad& g_out, Grad* g_in,
                    ParamGrad* params) {
  const std::size_t rows = op.weight.extent(0), cols = op.weight.extent(1);
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = g_out[r];
    if (g == 0.0) continue;
    if (params) params->bias[r] += g;
    for (std::size_t c = 0; c < cols; ++c) {
      if (g_in) (*g_in)[c] += g * op.weight[r * cols + c];
      if (params) params->weight[r * cols + c] += g * input[c];
    }
  }
}

void relu_backward(const Tensor& input, const Grad& g_out, Grad& g_in, ReluPolicy policy) {
  for (std::size_t i = 0; i < g_out.size(); ++i) {
    const double g = g_out[i];
    bool pass = false;
    switch (policy) {
      case ReluPolicy::Standard: pass = input[i] > 0.0f; break;
      case ReluPolicy::Guided: pass = input[i] > 0.0f && g > 0.0; break;
      case ReluPolicy::Deconv: pass = g > 0.0; break;
    }
    if (pass) g_in[i] += g;
  }
}

/// Reverse sweep over the ops whose output lies after `stop`. Returns the
/// accumulated gradient per tensor id (empty vectors where nothing flowed).
std::vector<Grad> sweep(const Tape& tape, Grad score_grad, TensorId stop, ReluPolicy policy,
                        std::vector<ParamGrad>* params) {
  std::vector<Grad> grads(tape.tensor_count());
  grads[tape.scores_id()] = std::move(score_grad);
  const auto& ops = tape.ops();
  for (std::size_t n = ops.size(); n-- > 0;) {
    const TapeOp& op = ops[n];
    if (op.output <= stop) break;
    const Grad& g_out = grads[op.output];
    if (g_out.empty()) continue;
    const Tensor& input = tape.tensor(op.input);
    // The trainer never needs the gradient w.r.t. the image itself.
    const bool need_input = op.input > stop || (op.input == stop && params == nullptr);
    Grad* g_in = nullptr;
    if (need_input) {
      if (grads[op.input].empty()) grads[op.input].assign(input.size(), 0.0);
      g_in = &grads[op.input];
    }
    ParamGrad* pg = params ? &(*params)[n] : nullptr;
    switch (op.kind) {
      case OpKind::Conv2d:
        conv_backward(op, input, g_out, g_in, pg);
        break;
      case OpKind::Dense:
        dense_backward(op, input, g_out, g_in, pg);
        break;
      case OpKind::Relu:
        if (g_in) relu_backward(input, g_out, *g_in, policy);
        break;
      case OpKind::MaxPool:
        if (g_in) {
          for (std::size_t i = 0; i < g_out.size(); ++i) (*g_in)[op.argmax[i]] += g_out[i];
        }
        break;
      case OpKind::GlobalAvgPool:
        if (g_in) {
          const std::size_t area = input.extent(1) * input.extent(2);
          for (std::size_t k = 0; k < g_out.size(); ++k) {
            const double g = g_out[k] / static_cast<double>(area);
            for (std::size_t i = 0; i < area; ++i) (*g_in)[k * area + i] += g;
          }
        }
        break;
      case OpKind::Flatten:
        if (g_in) {
          for (std::size_t i = 0; i < g_out.size(); ++i) (*g_in)[i] += g_out[i];
        }
        break;
    }
  }
  return grads;
}

Grad seed_gradient(const Tape& tape, std::size_t category, ScorePoint score_point) {
  const Tensor& scores = tape.scores();
  if (category >= scores.size()) {
    fail(ErrorCode::InvalidArgument, "category " + std::to_string(category) + " out of range for " +
                                         std::to_string(scores.size()) + " scores");
  }
  Grad g(scores.size(), 0.0);
  if (score_point == ScorePoint::PreSoftmax) {
    g[category] = 1.0;
    return g;
  }
  // d p_c / d z_j = p_c (delta_cj - p_j)
  const Tensor probs = softmax(scores);
  const double pc = probs[category];
  for (std::size_t j = 0; j < g.size(); ++j) {
    g[j] = pc * ((j == category ? 1.0 : 0.0) - probs[j]);
  }
  return g;
}

Tensor to_tensor(const Grad& g, const Shape& shape) {
  std::vector<float> data(shape_size(shape), 0.0f);
  for (std::size_t i = 0; i < g.size(); ++i) data[i] = static_cast<float>(g[i]);
  return Tensor(shape, std::move(data));
}

}  // namespace

Tensor backward(const Tape& tape, const Tensor& seed, std::string_view stop_at,
                const BackwardOptions& options) {
  const Tensor& scores = tape.scores();
  if (seed.shape() != scores.shape()) {
    fail(ErrorCode::Contract, "seed shape " + shape_to_string(seed.shape()) +
                                  " does not match score vector " + shape_to_string(scores.shape()));
  }
  std::size_t ones = 0, category = 0;
  for (std::size_t i = 0; i < seed.size(); ++i) {
    if (seed[i] == 1.0f) {
      ++ones;
      category = i;
    } else if (seed[i] != 0.0f) {
      ones = 2;
    }
  }
  if (ones != 1) fail(ErrorCode::Contract, "backward seed must be one-hot");
  return backward(tape, category, stop_at, options);
}

Tensor backward(const Tape& tape, std::size_t category, std::string_view stop_at,
                const BackwardOptions& options) {
  const TensorId stop = tape.checkpoint_id(stop_at);
  auto grads = sweep(tape, seed_gradient(tape, category, options.score_point), stop,
                     options.policy, nullptr);
  return to_tensor(grads[stop], tape.tensor(stop).shape());
}

std::vector<ParamGrad> parameter_gradients(const Tape& tape, const Tensor& output_grad) {
  if (output_grad.shape() != tape.scores().shape()) {
    fail(ErrorCode::Dimension, "output gradient shape " + shape_to_string(output_grad.shape()) +
                                   " does not match scores");
  }
  std::vector<ParamGrad> params(tape.ops().size());
  for (std::size_t n = 0; n < tape.ops().size(); ++n) {
    const TapeOp& op = tape.ops()[n];
    if (op.kind == OpKind::Conv2d || op.kind == OpKind::Dense) {
      params[n].weight.assign(op.weight.size(), 0.0);
      params[n].bias.assign(op.bias.size(), 0.0);
    }
  }
  Grad g(output_grad.values().begin(), output_grad.values().end());
  sweep(tape, std::move(g), 0, ReluPolicy::Standard, &params);
  return params;
}

Tensor grad_at_layer(const Tape& tape, std::size_t category, std::string_view layer,
                     const BackwardOptions& options) {
  const Tensor& maps = tape.checkpoint(layer);
  if (maps.rank() != 3) {
    fail(ErrorCode::Dimension, "layer '" + std::string(layer) + "' is not spatial (shape " +
                                   shape_to_string(maps.shape()) + ")");
  }
  return backward(tape, category, layer, options);
}

std::string last_conv_checkpoint(const Tape& tape) {
  const auto& ops = tape.ops();
  for (std::size_t n = ops.size(); n-- > 0;) {
    if (ops[n].kind != OpKind::Conv2d) continue;
    for (std::size_t m = n + 1; m < ops.size(); ++m) {
      if (ops[m].input == ops[n].output && ops[m].kind == OpKind::Relu) return ops[m].layer;
    }
    return ops[n].layer;
  }
  fail(ErrorCode::Lookup, "network has no convolutional layer");
}

}  // namespace gcam
