#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gradcam/tensor.hpp"

namespace gcam {

/// How a ReLU routes gradient backwards.
///   Standard: where the forward input was positive.
///   Guided:   where the forward input was positive and the incoming gradient is positive.
///   Deconv:   where the incoming gradient is positive (forward input ignored).
enum class ReluPolicy { Standard, Guided, Deconv };

/// Which score the backward pass differentiates.
enum class ScorePoint { PreSoftmax, PostSoftmax };

const char* to_string(ReluPolicy policy) noexcept;

enum class OpKind { Conv2d, Relu, MaxPool, GlobalAvgPool, Flatten, Dense };

using TensorId = std::size_t;

struct TapeOp {
  OpKind kind;
  TensorId input;
  TensorId output;
  std::string layer;
  // Parameters (Conv2d, Dense) and hyperparameters, copied at record time so
  // the tape is self-contained.
  Tensor weight;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::vector<std::size_t> argmax;  // MaxPool routing
};

/// Recorded forward pass. Tensors are appended in execution order, so every
/// op's input id is smaller than its output id. Layer outputs are named
/// checkpoints; the network input is always the checkpoint "input".
class Tape {
 public:
  static constexpr std::string_view kInput = "input";

  explicit Tape(Tensor image);

  TensorId conv2d(TensorId in, const Tensor& kernels, const Tensor& bias, std::size_t stride,
                  std::size_t padding, std::string name);
  TensorId relu(TensorId in, std::string name);
  TensorId maxpool(TensorId in, std::size_t window, std::size_t stride, std::string name);
  TensorId global_avg_pool(TensorId in, std::string name);
  TensorId flatten(TensorId in, std::string name);
  TensorId dense(TensorId in, const Tensor& weights, const Tensor& bias, std::string name);

  const Tensor& tensor(TensorId id) const { return tensors_.at(id); }
  const std::vector<TapeOp>& ops() const noexcept { return ops_; }
  std::size_t tensor_count() const noexcept { return tensors_.size(); }

  bool has_checkpoint(std::string_view name) const;
  /// Throws a lookup error for unknown names.
  TensorId checkpoint_id(std::string_view name) const;
  const Tensor& checkpoint(std::string_view name) const { return tensor(checkpoint_id(name)); }
  std::vector<std::string> checkpoint_names() const;

  /// The last recorded tensor: the score vector once the forward pass is done.
  const Tensor& scores() const { return tensors_.back(); }
  TensorId scores_id() const noexcept { return tensors_.size() - 1; }

  /// Op that produced a tensor; nullptr for the input.
  const TapeOp* producer(TensorId id) const;

 private:
  TensorId push(TapeOp op, Tensor out);

  std::vector<Tensor> tensors_;
  std::vector<TapeOp> ops_;
  std::map<std::string, TensorId, std::less<>> checkpoints_;
};

/// Gradients w.r.t. the parameters of one op, indexed like Tape::ops().
struct ParamGrad {
  std::vector<double> weight;
  std::vector<double> bias;
};

struct BackwardOptions {
  ReluPolicy policy = ReluPolicy::Standard;
  ScorePoint score_point = ScorePoint::PreSoftmax;
};

/// Reverse pass from a one-hot seed on the score vector down to `stop_at`.
/// Throws a contract violation if the seed is not one-hot.
Tensor backward(const Tape& tape, const Tensor& seed, std::string_view stop_at,
                const BackwardOptions& options = {});

Tensor backward(const Tape& tape, std::size_t category, std::string_view stop_at,
                const BackwardOptions& options = {});

/// Full reverse pass to the input that also accumulates parameter gradients
/// for every Conv2d/Dense op (one entry per op; empty for parameterless ops).
/// `output_grad` is an arbitrary cotangent on the scores (used by the trainer).
std::vector<ParamGrad> parameter_gradients(const Tape& tape, const Tensor& output_grad);

/// dy^c / dA for a spatial ([K,u,v]) checkpoint. Throws a dimension error if
/// the checkpoint is not spatial.
Tensor grad_at_layer(const Tape& tape, std::size_t category, std::string_view layer,
                     const BackwardOptions& options = {});

/// Rectified output of the last convolution (the relu directly consuming it,
/// when present). Throws a lookup error for networks without convolutions.
std::string last_conv_checkpoint(const Tape& tape);

}  // namespace gcam
