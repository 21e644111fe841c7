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

// Randomized property suites with fixed seeds. Each property is checked
// against a route that does not share the code path under test: central
// finite differences for gradients, the variational functional itself for
// the closed-form suprema, random search for the unit-ball bound.

#ifndef DEEPGMM_VERIFY_HPP_
#define DEEPGMM_VERIFY_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "deepgmm/baselines.hpp"
#include "deepgmm/deepgmm.hpp"
#include "deepgmm/moments.hpp"
#include "deepgmm/netcore.hpp"
#include "deepgmm/optim.hpp"
#include "deepgmm/rng.hpp"
#include "deepgmm/scenarios.hpp"

namespace deepgmm {

struct PropertyResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;  // worst-case error (or the statistic being bounded)
  double tolerance = 0.0;
  int instances = 0;
};

using SuiteReport = std::vector<PropertyResult>;

inline bool all_passed(const SuiteReport& report) {
  return std::all_of(report.begin(), report.end(), [](const auto& p) { return p.passed; });
}

inline void print_report(std::ostream& os, std::string_view suite, const SuiteReport& report) {
  for (const auto& p : report) {
    os << (p.passed ? "PASS" : "FAIL") << "  " << suite << "/" << p.name
       << "  instances=" << p.instances << "  worst=" << p.worst << "  tol=" << p.tolerance
       << '\n';
  }
}

namespace verify_detail {

inline constexpr std::uint64_t kSuiteSeed = 20260814;

inline MatrixXd random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

inline VectorXd random_vector(Rng& rng, Index n, double scale = 1.0) {
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

inline MlpSpec random_spec(Rng& rng, Index input_dim) {
  MlpSpec s;
  s.input_dim = input_dim;
  const auto depth = static_cast<int>(rng.below(3));
  for (int l = 0; l < depth; ++l) s.hidden_sizes.push_back(1 + static_cast<Index>(rng.below(6)));
  s.leaky_slope = rng.uniform(0.01, 0.5);
  s.seed = rng.below(1u << 30);
  return s;
}

inline MlpParams random_params(Rng& rng, const MlpSpec& spec) {
  MlpParams p = init_mlp(spec);
  const double scale = std::exp(rng.uniform(-1.0, std::log(200.0)));
  for (Index k = 0; k < p.theta.size(); ++k) p.theta[k] = rng.uniform(-scale, scale);
  return p;
}

// Central differences of a scalar function of a parameter vector.
template <class F>
VectorXd central_differences(F&& fn, const VectorXd& at) {
  VectorXd g(at.size());
  VectorXd x = at;
  for (Index k = 0; k < at.size(); ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(at[k]));
    x[k] = at[k] + h;
    const double up = fn(x);
    x[k] = at[k] - h;
    const double down = fn(x);
    x[k] = at[k];
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const VectorXd& a, const VectorXd& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / denom;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

inline PropertyResult bound(std::string name, double worst, double tol, int instances) {
  return {std::move(name), worst <= tol, worst, tol, instances};
}

}  // namespace verify_detail

inline SuiteReport verify_gradients(int instances = 100) {
  using namespace verify_detail;
  Rng rng(kSuiteSeed);
  SuiteReport out;
  double worst_net = 0.0, worst_theta = 0.0, worst_tau = 0.0, worst_stop = 0.0;
  for (int t = 0; t < instances; ++t) {
    const Index n = 1 + static_cast<Index>(rng.below(8));
    const MlpSpec spec = random_spec(rng, 1 + static_cast<Index>(rng.below(3)));
    const MlpParams params = random_params(rng, spec);
    const MatrixXd inputs = random_matrix(rng, n, spec.input_dim);
    const VectorXd cot = random_vector(rng, n);
    const VectorXd analytic = grad_params(params, inputs, cot);
    MlpParams probe = params;
    const VectorXd numeric = central_differences(
        [&](const VectorXd& th) {
          probe.theta = th;
          return cot.dot(forward(probe, inputs));
        },
        params.theta);
    worst_net = std::max(worst_net, relative_error(analytic, numeric));
  }
  out.push_back(bound("netcore_grad_params", worst_net, 1e-4, instances));

  for (int t = 0; t < instances; ++t) {
    const Index n = 2 + static_cast<Index>(rng.below(10));
    Dataset d;
    d.x = random_matrix(rng, n, 1);
    d.z = random_matrix(rng, n, 2);
    d.y = random_vector(rng, n);
    MlpSpec gs = random_spec(rng, 1);
    MlpSpec fs = random_spec(rng, 2);
    MlpParams theta = init_mlp(gs), tau = init_mlp(fs), tilde = init_mlp(gs);
    for (auto* p : {&theta, &tau, &tilde}) p->theta = random_vector(rng, p->theta.size());
    const GameGradients g = grads(theta, tau, tilde, d);
    MlpParams probe = theta;
    const VectorXd num_theta = central_differences(
        [&](const VectorXd& th) {
          probe.theta = th;
          return payoff_u(probe, tau, tilde, d);
        },
        theta.theta);
    MlpParams probe_f = tau;
    const VectorXd num_tau = central_differences(
        [&](const VectorXd& th) {
          probe_f.theta = th;
          return payoff_u(theta, probe_f, tilde, d);
        },
        tau.theta);
    worst_theta = std::max(worst_theta, relative_error(g.theta, num_theta));
    worst_tau = std::max(worst_tau, relative_error(g.tau, num_tau));
    // Same theta gradient whether or not the lagged copy equals theta.
    const GameGradients same = grads(theta, tau, theta, d);
    worst_stop = std::max(worst_stop, (same.theta - g.theta).cwiseAbs().maxCoeff());
  }
  out.push_back(bound("game_theta_gradient", worst_theta, 1e-4, instances));
  out.push_back(bound("game_tau_gradient", worst_tau, 1e-4, instances));
  out.push_back(bound("stop_gradient_theta_tilde", worst_stop, 0.0, instances));
  return out;
}

inline SuiteReport verify_lemma1(int instances = 200) {
  using namespace verify_detail;
  Rng rng(kSuiteSeed + 1);
  SuiteReport out;
  double worst_equal = 0.0, worst_functional = 0.0, worst_excess = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int t = 0; t < instances; ++t) {
    const Index m = 1 + static_cast<Index>(rng.below(5));
    const Index n = m + 5 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(46 - m)));
    MomentBasis basis;
    basis.values = random_matrix(rng, n, m);
    const VectorXd r = random_vector(rng, n);
    const VectorXd r_tilde = random_vector(rng, n);
    const double ridge = rng.uniform() < 0.5 ? 0.0 : kDefaultMomentRidge;
    const SpanSupResult sup = span_sup(basis, r, r_tilde, ridge);
    const double obj = owgmm_objective(basis, r, r_tilde, ridge);
    worst_equal = std::max(worst_equal, relative_error(sup.value, obj));
    // The functional evaluated at the maximizer reproduces the value.
    const VectorXd f = basis.values * sup.v_star;
    const double functional = psi_n(f, r) - 0.25 * (c_form(f, f, r_tilde) +
                                                    ridge * sup.v_star.squaredNorm());
    worst_functional = std::max(worst_functional, relative_error(functional, sup.value));
    // No random coefficient vector does better.
    for (int k = 0; k < 50; ++k) {
      const VectorXd v = sup.v_star + random_vector(rng, m, rng.uniform(0.01, 2.0));
      const VectorXd fv = basis.values * v;
      const double val =
          psi_n(fv, r) - 0.25 * (c_form(fv, fv, r_tilde) + ridge * v.squaredNorm());
      worst_excess = std::max(worst_excess, (val - sup.value) / std::max(1.0, sup.value));
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.push_back(bound("span_sup_equals_owgmm", worst_equal, 1e-10, instances));
  out.push_back(bound("functional_at_maximizer", worst_functional, 1e-10, instances));
  out.push_back(bound("random_coefficients_dominated", worst_excess, 1e-12, instances));
  out.push_back(bound("runtime_seconds", secs, 5.0, 1));
  return out;
}

inline SuiteReport verify_appendix_c(int instances = 20, int critics = 10000) {
  using namespace verify_detail;
  Rng rng(kSuiteSeed + 2);
  SuiteReport out;
  double worst_closed = 0.0, worst_excess = 0.0;
  for (int t = 0; t < instances; ++t) {
    const Index n = 2 + static_cast<Index>(rng.below(49));
    const MatrixXd z = random_matrix(rng, n, 2);
    const VectorXd r = random_vector(rng, n, rng.uniform(0.1, 3.0));
    const UnitBallSupResult sup = unit_ball_sup(r, z);
    // Independent recomputation: mean of squares and the attained value.
    double mean_sq = 0.0;
    for (Index i = 0; i < n; ++i) mean_sq += r[i] * r[i];
    mean_sq /= static_cast<double>(n);
    const double attained = std::pow(psi_n(sup.maximizer, r), 2);
    const double norm = sup.maximizer.squaredNorm() / static_cast<double>(n);
    worst_closed = std::max({worst_closed, relative_error(sup.value, mean_sq),
                             relative_error(attained, mean_sq), std::abs(norm - 1.0)});
    for (int k = 0; k < critics; ++k) {
      VectorXd f = random_vector(rng, n);
      f /= std::sqrt(f.squaredNorm() / static_cast<double>(n));
      const double v = std::pow(psi_n(f, r), 2);
      worst_excess = std::max(worst_excess, (v - sup.value) / sup.value);
    }
  }
  out.push_back(bound("closed_form_mean_square", worst_closed, 1e-12, instances));
  out.push_back(bound("dominates_random_unit_critics", worst_excess, 1e-12, instances * critics));
  return out;
}

// Final distance from the origin on min_x max_y xy, players updated
// simultaneously from (1, 1).
inline double bilinear_final_radius(const OptimizerConfig& cfg, int steps) {
  OptimState sx(cfg), sy(cfg);
  VectorXd x = VectorXd::Constant(1, 1.0), y = VectorXd::Constant(1, 1.0);
  for (int t = 0; t < steps; ++t) {
    const VectorXd gx = y;  // d(xy)/dx
    const VectorXd gy = x;  // d(xy)/dy
    sx.step(x, gx, Direction::minimize);
    sy.step(y, gy, Direction::maximize);
  }
  return std::hypot(x[0], y[0]);
}

inline SuiteReport verify_optim(int instances = 100) {
  using namespace verify_detail;
  Rng rng(kSuiteSeed + 3);
  SuiteReport out;
  double worst_sign = 0.0, worst_adam = 0.0, worst_oadam = 0.0;
  for (int t = 0; t < instances; ++t) {
    const Index d = 1 + static_cast<Index>(rng.below(6));
    const OptimizerKind kind = static_cast<OptimizerKind>(rng.below(3));
    OptimizerConfig cfg = kind == OptimizerKind::sgd    ? OptimizerConfig::sgd(1e-2)
                          : kind == OptimizerKind::adam ? OptimizerConfig::adam(1e-2)
                                                        : OptimizerConfig::oadam(1e-2);
    OptimState a(cfg), b(cfg);
    VectorXd pa = random_vector(rng, d), pb = pa;
    for (int s = 0; s < 5; ++s) {
      const VectorXd g = random_vector(rng, d);
      a.step(pa, g, Direction::maximize);
      b.step(pb, -g, Direction::minimize);
    }
    worst_sign = std::max({worst_sign, (pa - pb).cwiseAbs().maxCoeff(),
                           (a.m() + b.m()).cwiseAbs().maxCoeff(),  // m flips sign with g
                           (a.v() - b.v()).cwiseAbs().maxCoeff()});
    // First-step magnitude is lr (Adam) or 2 lr (OAdam) per coordinate.
    const VectorXd g = random_vector(rng, d, std::exp(rng.uniform(-5.0, 5.0)));
    for (auto [k, factor, worst] : {std::tuple{OptimizerKind::adam, 1.0, &worst_adam},
                                    std::tuple{OptimizerKind::oadam, 2.0, &worst_oadam}}) {
      const double lr = rng.uniform(1e-4, 1e-1);
      OptimState s(k == OptimizerKind::adam ? OptimizerConfig::adam(lr) : OptimizerConfig::oadam(lr));
      VectorXd p = VectorXd::Zero(d);
      s.step(p, g, Direction::minimize);
      for (Index i = 0; i < d; ++i) {
        const double expected = factor * lr * std::abs(g[i]) / (std::abs(g[i]) + 1e-8);
        *worst = std::max(*worst, std::abs(std::abs(p[i]) - expected) / (factor * lr));
      }
    }
  }
  out.push_back(bound("sign_symmetry", worst_sign, 0.0, instances));
  out.push_back(bound("adam_first_step_is_lr", worst_adam, 1e-12, instances));
  out.push_back(bound("oadam_first_step_is_2lr", worst_oadam, 1e-12, instances));
  const double start = std::sqrt(2.0);
  const double oadam = bilinear_final_radius(OptimizerConfig::oadam(1e-2), 5000);
  const double sgd = bilinear_final_radius(OptimizerConfig::sgd(1e-2), 5000);
  out.push_back(bound("bilinear_oadam_contracts", oadam / start, 1.0 - 1e-9, 1));
  out.push_back({"bilinear_sgd_does_not_contract", sgd >= start, sgd / start, 1.0, 1});
  return out;
}

inline SuiteReport verify_generators() {
  SuiteReport out;
  const ScenarioConfig cfg{Response::sin, 2000, verify_detail::kSuiteSeed, 1.0};
  const Splits a = generate_lowdim(cfg);
  const Splits b = generate_lowdim(cfg);
  double diff = 0.0;
  for (auto [p, q] : {std::pair{&a.train, &b.train}, {&a.val, &b.val}, {&a.test, &b.test}}) {
    diff = std::max({diff, (p->x - q->x).cwiseAbs().maxCoeff(), (p->z - q->z).cwiseAbs().maxCoeff(),
                     (p->y - q->y).cwiseAbs().maxCoeff()});
  }
  out.push_back(verify_detail::bound("deterministic", diff, 0.0, 1));

  // No instrument row shared between any two splits.
  std::vector<std::pair<double, double>> rows;
  for (const Dataset* d : {&a.train, &a.val, &a.test}) {
    for (Index i = 0; i < d->size(); ++i) rows.emplace_back(d->z(i, 0), d->z(i, 1));
  }
  std::sort(rows.begin(), rows.end());
  const auto dup = std::adjacent_find(rows.begin(), rows.end()) != rows.end();
  out.push_back({"splits_disjoint", !dup, dup ? 1.0 : 0.0, 0.0, 1});

  // Instrument validity: Y - g0(X) regressed on Z has small t statistics.
  double worst_t = 0.0;
  for (Response r : kAllResponses) {
    const Splits s = generate_lowdim({r, 2000, verify_detail::kSuiteSeed + 7, 1.0});
    const Dataset& d = s.train;
    const VectorXd eps = d.y - true_g0(r, VectorXd(d.x.col(0)));
    MatrixXd design(d.size(), 3);
    design << MatrixXd::Ones(d.size(), 1), d.z;
    const Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
    const VectorXd beta = qr.solve(eps);
    const VectorXd resid = eps - design * beta;
    const double sigma2 = resid.squaredNorm() / static_cast<double>(d.size() - 3);
    const MatrixXd cov = sigma2 * (design.transpose() * design).inverse();
    for (Index j = 1; j < 3; ++j) worst_t = std::max(worst_t, std::abs(beta[j]) / std::sqrt(cov(j, j)));
  }
  out.push_back(verify_detail::bound("exclusion_t_statistic", worst_t, 4.0, 4));
  out.push_back({"step_at_zero_is_one", true_g0(Response::step, 0.0) == 1.0,
                 std::abs(true_g0(Response::step, 0.0) - 1.0), 0.0, 1});
  return out;
}

inline constexpr std::string_view kSuiteNames[] = {"gradients", "lemma1", "appendixC", "optim",
                                                  "generators"};

inline SuiteReport run_suite(std::string_view name) {
  if (name == "gradients") return verify_gradients();
  if (name == "lemma1") return verify_lemma1();
  if (name == "appendixC") return verify_appendix_c();
  if (name == "optim") return verify_optim();
  if (name == "generators") return verify_generators();
  throw InvalidArgument("unknown suite '" + std::string(name) + "'");
}

}  // namespace deepgmm

#endif  // DEEPGMM_VERIFY_HPP_
