// Copyright 2026 The deepgmm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Scalar-output multilayer perceptrons with leaky-ReLU hidden layers.
//
// Parameter layout (frozen): layers are stored in order from input to output.
// Each layer with fan_in inputs and fan_out outputs occupies
// fan_out * fan_in weights followed by fan_out biases. The weight block is the
// row-major fan_out x fan_in matrix W, so W(j, i) lives at offset
// j * fan_in + i. A layer computes a = h * W^T + b.

#ifndef DEEPGMM_NETCORE_HPP_
#define DEEPGMM_NETCORE_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "deepgmm/errors.hpp"
#include "deepgmm/rng.hpp"

namespace deepgmm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct MlpSpec {
  Index input_dim = 1;
  std::vector<Index> hidden_sizes;
  double leaky_slope = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim < 1) throw InvalidArgument("MlpSpec: input_dim must be >= 1");
    for (Index h : hidden_sizes) {
      if (h < 1) throw InvalidArgument("MlpSpec: hidden sizes must be >= 1");
    }
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
      throw InvalidArgument("MlpSpec: leaky_slope must lie in (0, 1)");
    }
  }

  // Widths of every layer boundary: input, hidden..., 1.
  std::vector<Index> widths() const {
    std::vector<Index> w;
    w.reserve(hidden_sizes.size() + 2);
    w.push_back(input_dim);
    w.insert(w.end(), hidden_sizes.begin(), hidden_sizes.end());
    w.push_back(1);
    return w;
  }

  std::size_t num_layers() const { return hidden_sizes.size() + 1; }

  Index param_count() const {
    const auto w = widths();
    Index total = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) total += (w[l] + 1) * w[l + 1];
    return total;
  }

  bool operator==(const MlpSpec&) const = default;
};

struct MlpParams {
  MlpSpec spec;
  VectorXd theta;
};

namespace detail {

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LayerView {
  Index fan_in;
  Index fan_out;
  Index offset;  // first weight
  Index bias_offset() const { return offset + fan_in * fan_out; }
};

inline std::vector<LayerView> layer_views(const MlpSpec& spec) {
  const auto w = spec.widths();
  std::vector<LayerView> views;
  Index offset = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    views.push_back({w[l], w[l + 1], offset});
    offset += (w[l] + 1) * w[l + 1];
  }
  return views;
}

inline void check_params(const MlpParams& params) {
  if (params.theta.size() != params.spec.param_count()) {
    std::ostringstream os;
    os << "MlpParams: theta has " << params.theta.size() << " entries, spec needs "
       << params.spec.param_count();
    throw ShapeError(os.str());
  }
}

inline void check_inputs(const MlpParams& params, const MatrixXd& inputs) {
  check_params(params);
  if (inputs.cols() != params.spec.input_dim) {
    std::ostringstream os;
    os << "mlp: inputs are " << inputs.rows() << "x" << inputs.cols()
       << " but the network expects " << params.spec.input_dim << " columns";
    throw ShapeError(os.str());
  }
}

}  // namespace detail

// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), drawn layer by
// layer in layout order from Rng(spec.seed). Nonzero biases place the kinks
// of the leaky ReLU units across the input range rather than all at zero.
inline MlpParams init_mlp(const MlpSpec& spec) {
  spec.validate();
  MlpParams params{spec, VectorXd::Zero(spec.param_count())};
  Rng rng(spec.seed);
  for (const auto& layer : detail::layer_views(spec)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.fan_in));
    const Index count = (layer.fan_in + 1) * layer.fan_out;
    for (Index k = 0; k < count; ++k) {
      params.theta[layer.offset + k] = rng.uniform(-bound, bound);
    }
  }
  return params;
}

// Intermediate values of one forward pass, kept for the backward pass.
// pre[l] is the pre-activation of layer l; post[l] is its input.
struct ForwardTape {
  std::vector<MatrixXd> post;
  std::vector<MatrixXd> pre;
  VectorXd output() const { return pre.back().col(0); }
};

// Records a forward pass into `tape`, reusing its storage when shapes match.
inline void forward_tape(const MlpParams& params, const MatrixXd& inputs, ForwardTape& tape) {
  detail::check_inputs(params, inputs);
  const auto views = detail::layer_views(params.spec);
  const double slope = params.spec.leaky_slope;
  tape.post.resize(views.size());
  tape.pre.resize(views.size());
  tape.post[0] = inputs;
  for (std::size_t l = 0; l < views.size(); ++l) {
    const auto& v = views[l];
    Eigen::Map<const detail::RowMajorMatrix> w(params.theta.data() + v.offset,
                                               v.fan_out, v.fan_in);
    Eigen::Map<const VectorXd> b(params.theta.data() + v.bias_offset(), v.fan_out);
    MatrixXd& a = tape.pre[l];
    a.resize(inputs.rows(), v.fan_out);
    a.noalias() = tape.post[l] * w.transpose();
    a.rowwise() += b.transpose();
    if (l + 1 < views.size()) {
      tape.post[l + 1] = a.unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
    }
  }
}

inline ForwardTape forward_tape(const MlpParams& params, const MatrixXd& inputs) {
  ForwardTape tape;
  forward_tape(params, inputs, tape);
  return tape;
}

// Row-wise network output.
inline VectorXd forward(const MlpParams& params, const MatrixXd& inputs) {
  return forward_tape(params, inputs).output();
}

// Scratch matrices for backward(); reusable across calls.
struct BackwardWorkspace {
  MatrixXd delta;
  MatrixXd upstream;
};

// Gradient of sum_i cotangent_i * output_i with respect to theta, reusing a
// tape recorded with the same params. Writes into `grad`.
inline void backward(const MlpParams& params, const ForwardTape& tape, const VectorXd& cotangent,
                     VectorXd& grad, BackwardWorkspace& ws) {
  detail::check_params(params);
  detail::require_same_length(cotangent.size(), tape.post.front().rows(),
                              "mlp backward: cotangent");
  const auto views = detail::layer_views(params.spec);
  const double slope = params.spec.leaky_slope;
  grad.resize(params.theta.size());
  ws.delta = cotangent;  // n x fan_out of the current layer
  for (std::size_t l = views.size(); l-- > 0;) {
    const auto& v = views[l];
    Eigen::Map<detail::RowMajorMatrix> gw(grad.data() + v.offset, v.fan_out, v.fan_in);
    Eigen::Map<VectorXd> gb(grad.data() + v.bias_offset(), v.fan_out);
    gw.noalias() = ws.delta.transpose() * tape.post[l];
    gb = ws.delta.colwise().sum().transpose();
    if (l == 0) break;
    Eigen::Map<const detail::RowMajorMatrix> w(params.theta.data() + v.offset,
                                               v.fan_out, v.fan_in);
    ws.upstream.resize(ws.delta.rows(), v.fan_in);
    ws.upstream.noalias() = ws.delta * w;
    ws.delta = ws.upstream.binaryExpr(
        tape.pre[l - 1], [slope](double g, double a) { return a > 0.0 ? g : slope * g; });
  }
}

inline VectorXd backward(const MlpParams& params, const ForwardTape& tape,
                         const VectorXd& cotangent) {
  VectorXd grad;
  BackwardWorkspace ws;
  backward(params, tape, cotangent, grad, ws);
  return grad;
}

// d/dtheta of sum_i cotangent_i * forward(params, inputs)_i.
inline VectorXd grad_params(const MlpParams& params, const MatrixXd& inputs,
                            const VectorXd& cotangent) {
  detail::check_inputs(params, inputs);
  detail::require_same_length(cotangent.size(), inputs.rows(), "grad_params: cotangent");
  return backward(params, forward_tape(params, inputs), cotangent);
}

}  // namespace deepgmm

#endif  // DEEPGMM_NETCORE_HPP_
