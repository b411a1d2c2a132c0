#pragma once

// Naive double-precision evaluators used as oracles. Deliberately written as
// plain nested loops with no shared code from the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <vector>

#include "gradcam/nn.hpp"

namespace ref {

struct Array {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  std::size_t size() const { return v.size(); }
};

inline Array from(const gcam::Tensor& t) {
  return {t.shape(), std::vector<double>(t.values().begin(), t.values().end())};
}

inline gcam::Tensor to_tensor(const Array& a) {
  std::vector<float> f(a.v.begin(), a.v.end());
  return gcam::Tensor(a.shape, std::move(f));
}

inline Array conv2d(const Array& in, const gcam::Tensor& w, const gcam::Tensor& b, std::size_t stride,
                    std::size_t pad) {
  const std::size_t C = in.shape[0], H = in.shape[1], W = in.shape[2];
  const std::size_t K = w.extent(0), kh = w.extent(2), kw = w.extent(3);
  const std::size_t OH = (H + 2 * pad - kh) / stride + 1, OW = (W + 2 * pad - kw) / stride + 1;
  Array out{{K, OH, OW}, std::vector<double>(K * OH * OW, 0.0)};
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        double s = b[k];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              const long y = static_cast<long>(oy * stride + i) - static_cast<long>(pad);
              const long x = static_cast<long>(ox * stride + j) - static_cast<long>(pad);
              if (y < 0 || x < 0 || y >= static_cast<long>(H) || x >= static_cast<long>(W)) continue;
              s += static_cast<double>(w[((k * C + c) * kh + i) * kw + j]) *
                   in.v[(c * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(x)];
            }
        out.v[(k * OH + oy) * OW + ox] = s;
      }
  return out;
}

inline Array maxpool(const Array& in, std::size_t window, std::size_t stride) {
  const std::size_t C = in.shape[0], H = in.shape[1], W = in.shape[2];
  const std::size_t OH = (H - window) / stride + 1, OW = (W - window) / stride + 1;
  Array out{{C, OH, OW}, std::vector<double>(C * OH * OW)};
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        double m = -INFINITY;
        for (std::size_t i = 0; i < window; ++i)
          for (std::size_t j = 0; j < window; ++j)
            m = std::max(m, in.v[(c * H + oy * stride + i) * W + ox * stride + j]);
        out.v[(c * OH + oy) * OW + ox] = m;
      }
  return out;
}

inline Array gap(const Array& in) {
  const std::size_t C = in.shape[0], area = in.shape[1] * in.shape[2];
  Array out{{C}, std::vector<double>(C, 0.0)};
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < area; ++i) out.v[c] += in.v[c * area + i];
    out.v[c] /= static_cast<double>(area);
  }
  return out;
}

inline Array dense(const Array& in, const gcam::Tensor& w, const gcam::Tensor& b) {
  const std::size_t M = w.extent(0), N = w.extent(1);
  Array out{{M}, std::vector<double>(M)};
  for (std::size_t m = 0; m < M; ++m) {
    double s = b[m];
    for (std::size_t n = 0; n < N; ++n) s += static_cast<double>(w[m * N + n]) * in.v[n];
    out.v[m] = s;
  }
  return out;
}

inline Array relu(Array a) {
  for (double& x : a.v) x = std::max(x, 0.0);
  return a;
}

/// Runs layers [first, end) of `spec` on `x` (the output of layer first-1,
/// or the image when first == 0).
inline Array run_from(const gcam::ModelSpec& spec, const gcam::WeightStore& weights, std::size_t first, Array x) {
  for (std::size_t i = first; i < spec.layers.size(); ++i) {
    const auto& L = spec.layers[i];
    switch (L.kind) {
      case gcam::LayerKind::Conv2d: {
        const auto& p = weights.find(L.name);
        x = conv2d(x, p.weight, p.bias, L.stride, L.padding);
        break;
      }
      case gcam::LayerKind::Relu: x = relu(std::move(x)); break;
      case gcam::LayerKind::MaxPool: x = maxpool(x, L.window, L.stride); break;
      case gcam::LayerKind::GlobalAvgPool: x = gap(x); break;
      case gcam::LayerKind::Flatten: x.shape = {x.size()}; break;
      case gcam::LayerKind::Dense: {
        const auto& p = weights.find(L.name);
        x = dense(x, p.weight, p.bias);
        break;
      }
    }
  }
  return x;
}

/// Output of every layer, computed in double.
inline std::vector<Array> activations(const gcam::ModelSpec& spec, const gcam::WeightStore& weights,
                                      const gcam::Tensor& image) {
  std::vector<Array> out;
  Array x = from(image);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    gcam::ModelSpec one = spec;
    one.layers = {spec.layers[i]};
    x = run_from(one, weights, 0, x);
    out.push_back(x);
  }
  return out;
}

/// Relative error used by the gradient oracle: |a-f| / max(|a|,|f|) where
/// that exceeds `floor`, else the absolute difference.
inline double gradient_error(double analytic, double numeric, double floor = 1e-4) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  const double diff = std::abs(analytic - numeric);
  return scale > floor ? diff / scale : diff;
}

/// Central difference of a piecewise-linear function at `x`. Returns nullopt
/// when the one-sided differences disagree, i.e. a ReLU or max-pool switch
/// lies within [x - eps, x + eps] and the difference is not a derivative.
template <class F>
std::optional<double> central_difference(F&& f, double x, double eps) {
  const double up = f(x + eps), mid = f(x), down = f(x - eps);
  const double right = (up - mid) / eps, left = (mid - down) / eps;
  if (std::abs(right - left) > 1e-7 * std::max(1.0, std::abs(right) + std::abs(left))) return std::nullopt;
  return (up - down) / (2 * eps);
}

inline gcam::Tensor random_tensor(gcam::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  gcam::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = static_cast<float>(u(rng));
  return t;
}

}  // namespace ref
