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

// Synthetic instrumental-variable scenarios.
//
// Low-dimensional process, per row and in this draw order:
//   z1, z2 ~ U[-3, 3]; e ~ N(0, 1); gamma, delta ~ N(0, 0.1) (variance)
//   X = z1 + e + gamma,  Y = g0(X) + e + delta
// with e the confounder. noise_scale multiplies e, gamma and delta.

#ifndef DEEPGMM_SCENARIOS_HPP_
#define DEEPGMM_SCENARIOS_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <type_traits>
#include <iomanip>
#include <optional>
#include <string>
#include <string_view>

#include "deepgmm/errors.hpp"
#include "deepgmm/rng.hpp"

namespace deepgmm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Response { sin, step, abs, linear };

inline constexpr Response kAllResponses[] = {Response::sin, Response::step, Response::abs,
                                            Response::linear};

inline std::string_view to_string(Response r) {
  switch (r) {
    case Response::sin: return "sin";
    case Response::step: return "step";
    case Response::abs: return "abs";
    case Response::linear: return "linear";
  }
  return "?";
}

inline Response parse_response(std::string_view name) {
  for (Response r : kAllResponses) {
    if (to_string(r) == name) return r;
  }
  throw InvalidArgument("unknown response function '" + std::string(name) +
                        "' (expected sin, step, abs or linear)");
}

inline double true_g0(Response r, double x) {
  switch (r) {
    case Response::sin: return std::sin(x);
    case Response::step: return x >= 0.0 ? 1.0 : 0.0;
    case Response::abs: return std::abs(x);
    case Response::linear: return x;
  }
  return 0.0;
}

inline VectorXd true_g0(Response r, const VectorXd& x) {
  return x.unaryExpr([r](double v) { return true_g0(r, v); });
}

inline VectorXd true_g0(std::string_view name, const VectorXd& x) {
  return true_g0(parse_response(name), x);
}

// Affine map applied to Y. Standardized values are (y - shift) / scale.
struct YTransform {
  double shift = 0.0;
  double scale = 1.0;
  double apply(double y) const { return (y - shift) / scale; }
  double invert(double y) const { return y * scale + shift; }
};

struct Dataset {
  MatrixXd x;
  MatrixXd z;
  VectorXd y;
  std::optional<Response> g0;
  YTransform y_transform;  // already applied to y

  Index size() const { return y.size(); }

  void validate() const {
    if (x.rows() != y.size() || z.rows() != y.size()) {
      throw ShapeError("Dataset: x, z and y row counts differ");
    }
    if (!x.allFinite() || !z.allFinite() || !y.allFinite()) {
      throw InvalidArgument("Dataset: non-finite entries");
    }
  }

  // g0(X) in the same units as y.
  VectorXd true_response() const { return true_response(x); }

  VectorXd true_response(const MatrixXd& at) const {
    if (!g0) throw InvalidArgument("Dataset: no true response attached");
    VectorXd v = true_g0(*g0, VectorXd(at.col(0)));
    return v.unaryExpr([this](double t) { return y_transform.apply(t); });
  }
};

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

struct ScenarioConfig {
  Response g0 = Response::sin;
  Index n = 2000;
  std::uint64_t seed = 0;
  double noise_scale = 1.0;

  void validate() const {
    if (n < 1) throw InvalidArgument("ScenarioConfig: n must be positive");
    if (!(noise_scale >= 0.0)) throw InvalidArgument("ScenarioConfig: noise_scale must be >= 0");
  }
};

namespace detail {

inline Dataset draw_lowdim(Response g0, Index n, double noise_scale, std::uint64_t seed) {
  static const double kSmallNoiseStd = std::sqrt(0.1);
  Rng rng(seed);
  Dataset d;
  d.x.resize(n, 1);
  d.z.resize(n, 2);
  d.y.resize(n);
  d.g0 = g0;
  for (Index i = 0; i < n; ++i) {
    const double z1 = rng.uniform(-3.0, 3.0);
    const double z2 = rng.uniform(-3.0, 3.0);
    const double e = noise_scale * rng.normal();
    const double gamma = noise_scale * kSmallNoiseStd * rng.normal();
    const double delta = noise_scale * kSmallNoiseStd * rng.normal();
    const double x = z1 + e + gamma;
    d.z(i, 0) = z1;
    d.z(i, 1) = z2;
    d.x(i, 0) = x;
    d.y[i] = true_g0(g0, x) + e + delta;
  }
  return d;
}

}  // namespace detail

// Train, validation and test splits of cfg.n rows each, drawn from
// sub-seeds derive_seed(cfg.seed, 0/1/2).
inline Splits generate_lowdim(const ScenarioConfig& cfg) {
  cfg.validate();
  return {detail::draw_lowdim(cfg.g0, cfg.n, cfg.noise_scale, derive_seed(cfg.seed, 0)),
          detail::draw_lowdim(cfg.g0, cfg.n, cfg.noise_scale, derive_seed(cfg.seed, 1)),
          detail::draw_lowdim(cfg.g0, cfg.n, cfg.noise_scale, derive_seed(cfg.seed, 2))};
}

// Mean and population standard deviation of the train labels, applied to
// every split.
inline YTransform standardize_y(Splits& splits) {
  const VectorXd& y = splits.train.y;
  if (y.size() == 0) throw InvalidArgument("standardize_y: empty train split");
  const double mean = y.mean();
  const double var = (y.array() - mean).square().mean();
  if (!(var > 0.0)) throw InvalidArgument("standardize_y: zero train variance");
  YTransform t{mean, std::sqrt(var)};
  for (Dataset* d : {&splits.train, &splits.val, &splits.test}) {
    d->y = d->y.unaryExpr([&t](double v) { return t.apply(v); });
    d->y_transform = t;
  }
  return t;
}

// Mean squared distance between predictions at test.x and the true response.
inline double mse(const VectorXd& g_hat_values, const Dataset& test) {
  detail::require_same_length(g_hat_values.size(), test.size(), "mse");
  return (g_hat_values - test.true_response()).squaredNorm() /
         static_cast<double>(test.size());
}

template <typename Predict>
  requires(!std::is_base_of_v<Eigen::EigenBase<Predict>, Predict> &&
           std::is_invocable_r_v<VectorXd, const Predict&, const MatrixXd&>)
double mse(const Predict& g_hat, const Dataset& test) {
  return mse(VectorXd(g_hat(test.x)), test);
}

// Digit-class map used by the embedded-instrument scenario.
inline int digit_class(double x) {
  return static_cast<int>(std::round(std::min(std::max(1.5 * x + 5.0, 0.0), 9.0)));
}

// Replaces Z by a dim-dimensional embedding of digit_class(Z_1):
//   z = a * (c - 4.5) / 4.5 + b + 0.5 * eps,  c = digit_class(Z_1)
// with a, b ~ N(0, I) fixed by `seed` and eps ~ N(0, I) drawn per row from
// derive_seed(seed, 1 + noise_stream). Splits sharing a seed share a and b.
inline Dataset generate_highdim_embedding(const Dataset& base, Index dim, std::uint64_t seed,
                                          std::uint64_t noise_stream = 0) {
  if (dim < 1) throw InvalidArgument("generate_highdim_embedding: dim must be >= 1");
  Rng embed_rng(derive_seed(seed, 0));
  VectorXd a(dim), b(dim);
  for (Index j = 0; j < dim; ++j) a[j] = embed_rng.normal();
  for (Index j = 0; j < dim; ++j) b[j] = embed_rng.normal();
  Rng noise_rng(derive_seed(seed, 1 + noise_stream));
  Dataset out = base;
  out.z.resize(base.size(), dim);
  for (Index i = 0; i < base.size(); ++i) {
    const double s = (digit_class(base.z(i, 0)) - 4.5) / 4.5;
    for (Index j = 0; j < dim; ++j) out.z(i, j) = a[j] * s + b[j] + 0.5 * noise_rng.normal();
  }
  return out;
}

// CSV with columns z_1..z_dz, x_1..x_dx, y.
inline void write_dataset_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (Index j = 0; j < d.z.cols(); ++j) out << "z_" << j + 1 << ',';
  for (Index j = 0; j < d.x.cols(); ++j) out << "x_" << j + 1 << ',';
  out << "y\n";
  out << std::setprecision(17);
  for (Index i = 0; i < d.size(); ++i) {
    for (Index j = 0; j < d.z.cols(); ++j) out << d.z(i, j) << ',';
    for (Index j = 0; j < d.x.cols(); ++j) out << d.x(i, j) << ',';
    out << d.y[i] << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace deepgmm

#endif  // DEEPGMM_SCENARIOS_HPP_
