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

// Empirical moment algebra for instrumental-variable estimation.
//
// Notation used below: r is a residual vector Y - g(X), f is a vector of
// instrument-function values f(Z_i), n is the sample count.

#ifndef DEEPGMM_MOMENTS_HPP_
#define DEEPGMM_MOMENTS_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "deepgmm/errors.hpp"

namespace deepgmm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Default ridge added to moment covariance matrices before solving.
inline constexpr double kDefaultMomentRidge = 1e-6;

// Condition estimates above this are rejected as singular.
inline constexpr double kMaxConditionEstimate = 1e12;

// Column j holds f_j evaluated at every instrument row.
struct MomentBasis {
  MatrixXd values;
  std::vector<std::string> labels;

  Index num_samples() const { return values.rows(); }
  Index num_moments() const { return values.cols(); }

  void validate() const {
    if (values.cols() < 1) throw InvalidArgument("MomentBasis: needs at least one moment");
    if (!values.allFinite()) throw InvalidArgument("MomentBasis: non-finite entries");
    if (!labels.empty() && static_cast<Index>(labels.size()) != values.cols()) {
      throw ShapeError("MomentBasis: label count differs from column count");
    }
  }
};

// (1/n) sum_i f_i r_i.
inline double psi_n(const VectorXd& f_values, const VectorXd& r) {
  detail::require_same_length(f_values.size(), r.size(), "psi_n");
  if (r.size() == 0) throw InvalidArgument("psi_n: empty input");
  return f_values.dot(r) / static_cast<double>(r.size());
}

// (1/n) sum_i f_i h_i r_i^2.
inline double c_form(const VectorXd& f_values, const VectorXd& h_values,
                     const VectorXd& r_tilde) {
  detail::require_same_length(f_values.size(), h_values.size(), "c_form");
  detail::require_same_length(f_values.size(), r_tilde.size(), "c_form");
  if (r_tilde.size() == 0) throw InvalidArgument("c_form: empty input");
  return (f_values.array() * h_values.array() * r_tilde.array().square()).sum() /
         static_cast<double>(r_tilde.size());
}

// Vector of psi_n over every basis column.
inline VectorXd moment_vector(const MomentBasis& basis, const VectorXd& r) {
  detail::require_same_length(basis.num_samples(), r.size(), "moment_vector");
  return basis.values.transpose() * r / static_cast<double>(r.size());
}

// [C]_jk = (1/n) sum_i f_j(Z_i) f_k(Z_i) r_i^2.
inline MatrixXd cov_matrix(const MomentBasis& basis, const VectorXd& r_tilde) {
  detail::require_same_length(basis.num_samples(), r_tilde.size(), "cov_matrix");
  const MatrixXd weighted = basis.values.array().colwise() * r_tilde.array();
  MatrixXd c = weighted.transpose() * weighted / static_cast<double>(r_tilde.size());
  // Symmetrize explicitly; the product above is symmetric only up to rounding.
  return 0.5 * (c + c.transpose());
}

// Cholesky factorization of C + ridge * I with a conditioning check.
class WeightingSolver {
 public:
  WeightingSolver(const MatrixXd& cov, double ridge) {
    if (ridge < 0.0) throw InvalidArgument("ridge must be non-negative");
    MatrixXd a = cov;
    a.diagonal().array() += ridge;
    llt_.compute(a);
    const double rcond = llt_.info() == Eigen::Success ? llt_.rcond() : 0.0;
    condition_ = rcond > 0.0 ? 1.0 / rcond : INFINITY;
    if (!(condition_ <= kMaxConditionEstimate)) {
      std::ostringstream os;
      os << "moment covariance is numerically singular (condition estimate " << condition_
         << "); increase the ridge";
      throw SingularSystemError(os.str(), condition_);
    }
  }

  VectorXd solve(const VectorXd& rhs) const { return llt_.solve(rhs); }
  MatrixXd inverse() const {
    return llt_.solve(MatrixXd::Identity(llt_.rows(), llt_.cols()));
  }
  double condition_estimate() const { return condition_; }

 private:
  Eigen::LLT<MatrixXd> llt_;
  double condition_ = 0.0;
};

// psi^T (C + ridge I)^{-1} psi with psi from r_theta and C from r_tilde.
inline double owgmm_objective(const MomentBasis& basis, const VectorXd& r_theta,
                              const VectorXd& r_tilde, double ridge = kDefaultMomentRidge) {
  detail::require_same_length(r_theta.size(), r_tilde.size(), "owgmm_objective");
  const VectorXd psi = moment_vector(basis, r_theta);
  const WeightingSolver solver(cov_matrix(basis, r_tilde), ridge);
  return psi.dot(solver.solve(psi));
}

struct SpanSupResult {
  double value;
  VectorXd v_star;  // coefficients of the maximizing f over basis columns
};

// Closed-form sup over f in span(basis) of psi_n(f; r_theta) - C(f, f)/4.
// The maximizer is v* = 2 (C + ridge I)^{-1} psi and the value psi^T v* / 2.
inline SpanSupResult span_sup(const MomentBasis& basis, const VectorXd& r_theta,
                              const VectorXd& r_tilde, double ridge = kDefaultMomentRidge) {
  detail::require_same_length(r_theta.size(), r_tilde.size(), "span_sup");
  const VectorXd psi = moment_vector(basis, r_theta);
  const WeightingSolver solver(cov_matrix(basis, r_tilde), ridge);
  const VectorXd w = solver.solve(psi);
  return {psi.dot(w), 2.0 * w};
}

struct UnitBallSupResult {
  double value;
  VectorXd maximizer;  // f values with E_n[f^2] = 1 attaining the sup
};

// sup { psi_n(f; r)^2 : E_n[f^2] = 1 } over arbitrary functions of Z.
// With pairwise distinct Z rows this is the mean squared residual, attained
// at f proportional to r.
inline UnitBallSupResult unit_ball_sup(const VectorXd& r, const MatrixXd& z) {
  detail::require_same_length(r.size(), z.rows(), "unit_ball_sup");
  if (r.size() == 0) throw InvalidArgument("unit_ball_sup: empty input");
  std::vector<Index> order(static_cast<std::size_t>(z.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  auto row_less = [&z](Index a, Index b) {
    for (Index c = 0; c < z.cols(); ++c) {
      if (z(a, c) != z(b, c)) return z(a, c) < z(b, c);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), row_less);
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (!row_less(order[i - 1], order[i])) {
      std::ostringstream os;
      os << "unit_ball_sup: instrument rows " << order[i - 1] << " and " << order[i]
         << " coincide; the closed form needs distinct rows";
      throw InvalidArgument(os.str());
    }
  }
  const double value = r.squaredNorm() / static_cast<double>(r.size());
  VectorXd maximizer = value > 0.0 ? VectorXd(r / std::sqrt(value))
                                   : VectorXd(VectorXd::Ones(r.size()));
  return {value, std::move(maximizer)};
}

}  // namespace deepgmm

#endif  // DEEPGMM_MOMENTS_HPP_
