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

// DeepGMM: instrumental-variable regression as a smooth zero-sum game.
//
// The response player g(.; theta) minimizes and the critic f(.; tau)
// maximizes
//
//   U(theta, tau) = (1/n) sum_i f(Z_i) (Y_i - g(X_i; theta))
//                 - (1/4n) sum_i f(Z_i)^2 (Y_i - g(X_i; theta_tilde))^2
//
// where theta_tilde is a lagged copy of theta treated as a constant: the
// second term never contributes to the theta gradient. During training
// theta_tilde is the theta iterate from one optimizer step earlier.

#ifndef DEEPGMM_DEEPGMM_HPP_
#define DEEPGMM_DEEPGMM_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deepgmm/errors.hpp"
#include "deepgmm/netcore.hpp"
#include "deepgmm/optim.hpp"
#include "deepgmm/rng.hpp"
#include "deepgmm/scenarios.hpp"

namespace deepgmm {

struct GameConfig {
  MlpSpec g_spec;
  MlpSpec f_spec;
  double lr_g = 1e-3;
  double lambda_f = 5.0;  // lr_f = lambda_f * lr_g
  int epochs = 300;
  std::optional<Index> batch_size;  // nullopt: full batch
  int eval_period = 20;
  std::uint64_t seed = 0;  // minibatch shuffling
  double beta1 = 0.5;
  double beta2 = 0.9;

  double lr_f() const { return lambda_f * lr_g; }

  void validate(Index n_train) const {
    g_spec.validate();
    f_spec.validate();
    if (!(lr_g > 0.0) || !(lambda_f > 0.0)) {
      throw InvalidArgument("GameConfig: learning rates must be positive");
    }
    if (epochs < 1 || eval_period < 1) {
      throw InvalidArgument("GameConfig: epochs and eval_period must be positive");
    }
    if (eval_period > epochs) throw InvalidArgument("GameConfig: eval_period exceeds epochs");
    if (batch_size && (*batch_size < 1 || *batch_size > n_train)) {
      throw InvalidArgument("GameConfig: batch_size must lie in [1, n_train]");
    }
  }

  // Stable identifier; also the lexicographic tie-break key during selection.
  std::string id() const {
    std::ostringstream os;
    os << "lr_g=" << lr_g << ";lambda_f=" << lambda_f << ";g=";
    for (std::size_t i = 0; i < g_spec.hidden_sizes.size(); ++i) {
      os << (i ? "x" : "") << g_spec.hidden_sizes[i];
    }
    os << ";f=";
    for (std::size_t i = 0; i < f_spec.hidden_sizes.size(); ++i) {
      os << (i ? "x" : "") << f_spec.hidden_sizes[i];
    }
    return os.str();
  }
};

// Game value at (theta, tau) with the penalty evaluated at theta_tilde.
inline double payoff_u(const MlpParams& theta, const MlpParams& tau,
                       const MlpParams& theta_tilde, const Dataset& data) {
  const VectorXd f = forward(tau, data.z);
  const VectorXd r = data.y - forward(theta, data.x);
  const VectorXd r_tilde = data.y - forward(theta_tilde, data.x);
  const double n = static_cast<double>(data.size());
  return f.dot(r) / n - (f.array().square() * r_tilde.array().square()).sum() / (4.0 * n);
}

struct GameGradients {
  VectorXd theta;
  VectorXd tau;
};

namespace detail {

inline void require_finite(const VectorXd& v, const char* what) {
  if (!v.allFinite()) {
    throw NonFiniteError(std::string("non-finite values in ") + what, -1);
  }
}

// dU/dtau given the critic tape and residual vectors.
inline VectorXd critic_gradient(const MlpParams& tau, const ForwardTape& f_tape,
                                const VectorXd& f, const VectorXd& r,
                                const VectorXd& r_tilde) {
  const double n = static_cast<double>(f.size());
  const VectorXd cot = (r.array() - 0.5 * f.array() * r_tilde.array().square()) / n;
  return backward(tau, f_tape, cot);
}

}  // namespace detail

// Partial gradients of U. The theta gradient comes from the linear term only.
inline GameGradients grads(const MlpParams& theta, const MlpParams& tau,
                           const MlpParams& theta_tilde, const Dataset& batch) {
  if (batch.size() == 0) throw InvalidArgument("grads: empty batch");
  const ForwardTape g_tape = forward_tape(theta, batch.x);
  const ForwardTape f_tape = forward_tape(tau, batch.z);
  const VectorXd f = f_tape.output();
  const VectorXd r = batch.y - g_tape.output();
  const VectorXd r_tilde = batch.y - forward(theta_tilde, batch.x);
  detail::require_finite(f, "critic output f(Z)");
  detail::require_finite(r, "residual Y - g(X; theta)");
  detail::require_finite(r_tilde, "residual Y - g(X; theta_tilde)");
  const double n = static_cast<double>(batch.size());
  GameGradients out;
  out.theta = backward(theta, g_tape, -f / n);
  out.tau = detail::critic_gradient(tau, f_tape, f, r, r_tilde);
  return out;
}

struct GameState {
  MlpParams theta;
  MlpParams tau;
  MlpParams theta_tilde;
  OptimState opt_g;
  OptimState opt_f;
  int epoch = 0;
  std::int64_t step = 0;
};

// Run id reserved for the zero critic that seeds every pool.
inline constexpr int kZeroCriticRun = -1;

// Evaluation vectors recorded during training. Entry 0 is always the zero
// critic (run kZeroCriticRun) and carries no response checkpoint.
class CheckpointPool {
 public:
  struct Entry {
    int run_id;
    int epoch;
    VectorXd f_on_val;
    VectorXd g_on_val;
  };

  explicit CheckpointPool(Index n_val) : n_val_(n_val) {
    if (n_val < 1) throw InvalidArgument("CheckpointPool: n_val must be positive");
    entries_.push_back({kZeroCriticRun, 0, VectorXd::Zero(n_val), VectorXd::Zero(n_val)});
  }

  void add(int run_id, int epoch, VectorXd f_on_val, VectorXd g_on_val) {
    if (run_id == kZeroCriticRun) throw InvalidArgument("CheckpointPool: reserved run id");
    detail::require_same_length(f_on_val.size(), n_val_, "CheckpointPool f_on_val");
    detail::require_same_length(g_on_val.size(), n_val_, "CheckpointPool g_on_val");
    entries_.push_back({run_id, epoch, std::move(f_on_val), std::move(g_on_val)});
  }

  // Appends every non-zero-critic entry of `other`.
  void merge(const CheckpointPool& other) {
    detail::require_same_length(other.n_val_, n_val_, "CheckpointPool merge");
    for (const auto& e : other.entries_) {
      if (e.run_id != kZeroCriticRun) entries_.push_back(e);
    }
  }

  Index n_val() const { return n_val_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  // All critic vectors as columns, in entry order.
  MatrixXd critic_matrix() const {
    MatrixXd f(n_val_, static_cast<Index>(entries_.size()));
    for (std::size_t k = 0; k < entries_.size(); ++k) f.col(static_cast<Index>(k)) = entries_[k].f_on_val;
    return f;
  }

  // Text format, version 1:
  //   # deepgmm checkpoint pool v1
  //   # n_val=<n>
  //   run_id,epoch,f_1..f_n,g_1..g_n          (header row)
  //   one row per entry, values printed with 17 significant digits
  void save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "# deepgmm checkpoint pool v1\n# n_val=" << n_val_ << "\nrun_id,epoch";
    for (Index i = 0; i < n_val_; ++i) out << ",f_" << i + 1;
    for (Index i = 0; i < n_val_; ++i) out << ",g_" << i + 1;
    out << '\n' << std::setprecision(17);
    for (const auto& e : entries_) {
      out << e.run_id << ',' << e.epoch;
      for (Index i = 0; i < n_val_; ++i) out << ',' << e.f_on_val[i];
      for (Index i = 0; i < n_val_; ++i) out << ',' << e.g_on_val[i];
      out << '\n';
    }
    if (!out) throw IoError("failed writing '" + path + "'");
  }

  static CheckpointPool load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "# deepgmm checkpoint pool v1") {
      throw IoError("'" + path + "' is not a v1 checkpoint pool");
    }
    if (!std::getline(in, line) || line.rfind("# n_val=", 0) != 0) {
      throw IoError("'" + path + "': missing n_val line");
    }
    const Index n_val = std::stol(line.substr(8));
    std::getline(in, line);  // column header
    CheckpointPool pool(n_val);
    pool.entries_.clear();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream row(line);
      std::string cell;
      Entry e{0, 0, VectorXd(n_val), VectorXd(n_val)};
      std::vector<double> cells;
      while (std::getline(row, cell, ',')) cells.push_back(std::stod(cell));
      if (static_cast<Index>(cells.size()) != 2 + 2 * n_val) {
        throw IoError("'" + path + "': malformed pool row");
      }
      e.run_id = static_cast<int>(cells[0]);
      e.epoch = static_cast<int>(cells[1]);
      for (Index i = 0; i < n_val; ++i) {
        e.f_on_val[i] = cells[static_cast<std::size_t>(2 + i)];
        e.g_on_val[i] = cells[static_cast<std::size_t>(2 + n_val + i)];
      }
      pool.entries_.push_back(std::move(e));
    }
    if (pool.entries_.empty() || pool.entries_.front().run_id != kZeroCriticRun) {
      throw IoError("'" + path + "': pool must start with the zero critic");
    }
    return pool;
  }

 private:
  Index n_val_;
  std::vector<Entry> entries_;
};

// Validation surrogate evaluated against a fixed critic set. For response
// values g on the validation rows, with r = y_val - g:
//   psi_hat(g) = max_k  (1/n) f_k . r - (1/4n) (f_k^2) . (r^2)
class ValidationSurrogate {
 public:
  ValidationSurrogate(const CheckpointPool& pool, const Dataset& val)
      : y_(val.y), critics_(pool.critic_matrix()) {
    detail::require_same_length(val.size(), pool.n_val(), "ValidationSurrogate");
    critics_sq_ = critics_.array().square();
  }

  double operator()(const VectorXd& g_on_val) const {
    detail::require_same_length(g_on_val.size(), y_.size(), "psi_hat");
    const VectorXd r = y_ - g_on_val;
    const VectorXd r2 = r.array().square();
    const double n = static_cast<double>(r.size());
    const VectorXd terms = (critics_.transpose() * r - 0.25 * critics_sq_.transpose() * r2) / n;
    return terms.maxCoeff();
  }

 private:
  VectorXd y_;
  MatrixXd critics_;
  MatrixXd critics_sq_;
};

inline double psi_hat(const VectorXd& g_on_val, const CheckpointPool& pool,
                      const Dataset& data_val) {
  return ValidationSurrogate(pool, data_val)(g_on_val);
}

struct Selection {
  std::size_t entry_index;  // into pool.entries()
  int epoch;
  VectorXd g_on_val;
  double value;
};

// Checkpoint of `run_id` with the smallest surrogate; ties go to the later
// epoch.
inline Selection early_stop_select(const ValidationSurrogate& surrogate,
                                   const CheckpointPool& pool, int run_id) {
  std::optional<Selection> best;
  const auto& entries = pool.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& e = entries[k];
    if (e.run_id != run_id || run_id == kZeroCriticRun) continue;
    const double value = surrogate(e.g_on_val);
    if (!best || value < best->value || (value == best->value && e.epoch >= best->epoch)) {
      best = Selection{k, e.epoch, e.g_on_val, value};
    }
  }
  if (!best) {
    throw InvalidArgument("early_stop_select: run " + std::to_string(run_id) +
                          " has no checkpoints");
  }
  return *best;
}

inline Selection early_stop_select(const CheckpointPool& pool, int run_id,
                                   const Dataset& data_val) {
  return early_stop_select(ValidationSurrogate(pool, data_val), pool, run_id);
}

// Single-owner game state plus the alternating OAdam step.
class GameSession {
 public:
  GameSession(const GameConfig& config) : config_(config) {
    config_.g_spec.validate();
    config_.f_spec.validate();
    state_.theta = init_mlp(config_.g_spec);
    state_.tau = init_mlp(config_.f_spec);
    state_.theta_tilde = state_.theta;
    state_.opt_g = OptimState({OptimizerKind::oadam, config_.lr_g, config_.beta1, config_.beta2, 1e-8});
    state_.opt_f = OptimState({OptimizerKind::oadam, config_.lr_f(), config_.beta1, config_.beta2, 1e-8});
  }

  // One game step on a batch: theta_tilde <- theta, minimize-step theta,
  // then maximize-step tau against the updated theta. Returns the payoff at
  // the pre-step iterate (where theta_tilde == theta).
  double step(const MatrixXd& x, const MatrixXd& z, const VectorXd& y) {
    const double n = static_cast<double>(y.size());
    forward_tape(state_.theta, x, g_tape_);
    forward_tape(state_.tau, z, f_tape_);
    f_ = f_tape_.pre.back().col(0);
    r_tilde_ = y - g_tape_.pre.back().col(0);
    const double payoff =
        f_.dot(r_tilde_) / n - (f_.array().square() * r_tilde_.array().square()).sum() / (4.0 * n);
    ++state_.step;
    if (!std::isfinite(payoff)) {
      throw NonFiniteError("game payoff diverged at step " + std::to_string(state_.step),
                           state_.step);
    }
    state_.theta_tilde.theta = state_.theta.theta;
    cot_ = -f_ / n;
    backward(state_.theta, g_tape_, cot_, grad_, ws_);
    state_.opt_g.step(state_.theta.theta, grad_, Direction::minimize);
    forward_tape(state_.theta, x, g_tape_);
    cot_ = ((y - g_tape_.pre.back().col(0)).array() -
            0.5 * f_.array() * r_tilde_.array().square()) / n;
    backward(state_.tau, f_tape_, cot_, grad_, ws_);
    state_.opt_f.step(state_.tau.theta, grad_, Direction::maximize);
    return payoff;
  }

  GameState& state() { return state_; }
  const GameState& state() const { return state_; }
  const GameConfig& config() const { return config_; }

 private:
  GameConfig config_;
  GameState state_;
  ForwardTape g_tape_;
  ForwardTape f_tape_;
  BackwardWorkspace ws_;
  VectorXd f_, r_tilde_, cot_, grad_;
};

enum class RunStatus { ok, diverged };

struct TrainResult {
  RunStatus status = RunStatus::ok;
  std::string failure;
  CheckpointPool pool;  // zero critic plus this run's checkpoints
  std::vector<MlpParams> thetas;  // parallel to pool.entries()[1..]
  std::vector<double> history;    // mean pre-step batch payoff per epoch

  explicit TrainResult(Index n_val) : pool(n_val) {}

  // Response parameters recorded with pool entry `entry_index`.
  const MlpParams& theta_at(std::size_t entry_index) const {
    if (entry_index == 0 || entry_index > thetas.size()) {
      throw InvalidArgument("TrainResult: entry has no response checkpoint");
    }
    return thetas[entry_index - 1];
  }
};

// Plays the game on data_train and records (f(Z_val), g(X_val)) every
// eval_period epochs and at the final epoch.
inline TrainResult train(const Dataset& data_train, const Dataset& data_val,
                         const GameConfig& config, int run_id = 0) {
  data_train.validate();
  data_val.validate();
  config.validate(data_train.size());
  if (config.g_spec.input_dim != data_train.x.cols() ||
      config.f_spec.input_dim != data_train.z.cols()) {
    throw ShapeError("train: network input dims do not match the data");
  }
  TrainResult result(data_val.size());
  GameSession session(config);
  const Index n = data_train.size();
  const Index batch = config.batch_size.value_or(n);
  const bool full_batch = batch >= n;
  Rng shuffle_rng(derive_seed(config.seed, 0x5eed));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  MatrixXd xb, zb;
  VectorXd yb;
  try {
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
      double payoff_sum = 0.0;
      int steps = 0;
      if (full_batch) {
        payoff_sum += session.step(data_train.x, data_train.z, data_train.y);
        ++steps;
      } else {
        shuffle_rng.shuffle(order);
        for (Index start = 0; start < n; start += batch) {
          const Index len = std::min(batch, n - start);
          xb.resize(len, data_train.x.cols());
          zb.resize(len, data_train.z.cols());
          yb.resize(len);
          for (Index k = 0; k < len; ++k) {
            const Index i = order[static_cast<std::size_t>(start + k)];
            xb.row(k) = data_train.x.row(i);
            zb.row(k) = data_train.z.row(i);
            yb[k] = data_train.y[i];
          }
          payoff_sum += session.step(xb, zb, yb);
          ++steps;
        }
      }
      session.state().epoch = epoch;
      result.history.push_back(payoff_sum / steps);
      if (epoch % config.eval_period == 0 || epoch == config.epochs) {
        const auto& st = session.state();
        VectorXd f_val = forward(st.tau, data_val.z);
        VectorXd g_val = forward(st.theta, data_val.x);
        if (!f_val.allFinite() || !g_val.allFinite()) {
          throw NonFiniteError("non-finite validation outputs at epoch " + std::to_string(epoch),
                               st.step);
        }
        result.pool.add(run_id, epoch, std::move(f_val), std::move(g_val));
        result.thetas.push_back(st.theta);
      }
    }
  } catch (const NonFiniteError& e) {
    result.status = RunStatus::diverged;
    result.failure = e.what();
  }
  return result;
}

}  // namespace deepgmm

#endif  // DEEPGMM_DEEPGMM_HPP_
