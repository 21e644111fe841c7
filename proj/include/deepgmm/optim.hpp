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

#ifndef DEEPGMM_OPTIM_HPP_
#define DEEPGMM_OPTIM_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "deepgmm/errors.hpp"

namespace deepgmm {

enum class OptimizerKind { sgd, adam, oadam };
enum class Direction { minimize, maximize };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::oadam;
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;

  static OptimizerConfig sgd(double lr) { return {OptimizerKind::sgd, lr, 0.0, 0.0, 0.0}; }
  static OptimizerConfig adam(double lr) { return {OptimizerKind::adam, lr, 0.9, 0.999, 1e-8}; }
  static OptimizerConfig oadam(double lr) { return {OptimizerKind::oadam, lr, 0.5, 0.9, 1e-8}; }
};

// Per-player first-order optimizer over a flat parameter vector.
//
// Adam keeps the usual bias-corrected moments. OAdam keeps the same moments
// and applies 2 * d_t - d_{t-1}, where d_t = lr * m_hat_t / (sqrt(v_hat_t) + eps)
// and d_0 = 0.
class OptimState {
 public:
  OptimState() = default;
  explicit OptimState(OptimizerConfig config) : config_(config) {
    if (!(config_.lr > 0.0)) throw InvalidArgument("optimizer: lr must be positive");
    if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 ||
        config_.beta2 >= 1.0) {
      throw InvalidArgument("optimizer: betas must lie in [0, 1)");
    }
  }

  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad,
            Direction direction) {
    detail::require_same_length(params.size(), grad.size(), "optimizer step");
    if (!grad.allFinite()) {
      std::ostringstream os;
      os << "optimizer: non-finite gradient at step " << step_count_ + 1;
      throw NonFiniteError(os.str(), step_count_ + 1);
    }
    if (m_.size() != grad.size()) {
      m_ = Eigen::VectorXd::Zero(grad.size());
      v_ = Eigen::VectorXd::Zero(grad.size());
      prev_update_ = Eigen::VectorXd::Zero(grad.size());
    }
    ++step_count_;
    const double sign = direction == Direction::minimize ? -1.0 : 1.0;
    if (config_.kind == OptimizerKind::sgd) {
      params += sign * config_.lr * grad;
      return;
    }
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    m_ = b1 * m_ + (1.0 - b1) * grad;
    v_ = b2 * v_ + (1.0 - b2) * grad.cwiseAbs2();
    const double t = static_cast<double>(step_count_);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    Eigen::VectorXd update =
        config_.lr * (m_ / c1).array() / ((v_ / c2).array().sqrt() + config_.eps);
    if (config_.kind == OptimizerKind::adam) {
      params += sign * update;
    } else {
      params += sign * (2.0 * update - prev_update_);
      prev_update_ = std::move(update);
    }
  }

  const OptimizerConfig& config() const { return config_; }
  std::int64_t step_count() const { return step_count_; }
  const Eigen::VectorXd& m() const { return m_; }
  const Eigen::VectorXd& v() const { return v_; }
  const Eigen::VectorXd& prev_update() const { return prev_update_; }

 private:
  OptimizerConfig config_;
  std::int64_t step_count_ = 0;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  Eigen::VectorXd prev_update_;
};

}  // namespace deepgmm

#endif  // DEEPGMM_OPTIM_HPP_
