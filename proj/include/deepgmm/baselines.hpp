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

// Comparison estimators: least squares, two-stage least squares (raw and
// polynomial), a direct neural regression, and a neural response trained by
// iterated optimally-weighted GMM on an RBF moment basis.

#ifndef DEEPGMM_BASELINES_HPP_
#define DEEPGMM_BASELINES_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "deepgmm/errors.hpp"
#include "deepgmm/moments.hpp"
#include "deepgmm/netcore.hpp"
#include "deepgmm/optim.hpp"
#include "deepgmm/rng.hpp"
#include "deepgmm/scenarios.hpp"

namespace deepgmm {

struct LinearModel {
  VectorXd coef;
  double intercept = 0.0;

  VectorXd predict(const MatrixXd& features) const {
    if (features.cols() != coef.size()) throw ShapeError("LinearModel: feature count mismatch");
    return (features * coef).array() + intercept;
  }
};

// Ridge least squares with an unpenalized intercept for several targets at
// once; column t of the result's coef matrix belongs to target column t.
struct MultiLinearModel {
  MatrixXd coef;       // d x t
  VectorXd intercept;  // t

  MatrixXd predict(const MatrixXd& features) const {
    if (features.cols() != coef.rows()) throw ShapeError("MultiLinearModel: feature count mismatch");
    MatrixXd out = features * coef;
    out.rowwise() += intercept.transpose();
    return out;
  }
};

inline MultiLinearModel fit_ols_multi(const MatrixXd& features, const MatrixXd& targets,
                                      double ridge) {
  if (features.rows() != targets.rows()) throw ShapeError("fit_ols: row count mismatch");
  if (ridge < 0.0) throw InvalidArgument("fit_ols: ridge must be non-negative");
  const Index n = features.rows();
  const Index d = features.cols();
  if (n < 1) throw InvalidArgument("fit_ols: no rows");
  if (ridge == 0.0 && n <= d) {
    throw InvalidArgument("fit_ols: need more rows than features at ridge 0");
  }
  const Eigen::RowVectorXd x_mean = features.colwise().mean();
  const Eigen::RowVectorXd t_mean = targets.colwise().mean();
  const MatrixXd xc = features.rowwise() - x_mean;
  const MatrixXd tc = targets.rowwise() - t_mean;
  MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += ridge;
  Eigen::LLT<MatrixXd> llt(gram);
  const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
  if (!(rcond * kMaxConditionEstimate >= 1.0)) {
    const double cond = rcond > 0.0 ? 1.0 / rcond : INFINITY;
    std::ostringstream os;
    os << "fit_ols: normal equations are singular (condition estimate " << cond
       << "); use a positive ridge";
    throw SingularSystemError(os.str(), cond);
  }
  MultiLinearModel model;
  model.coef = llt.solve(xc.transpose() * tc);
  model.intercept = (t_mean - x_mean * model.coef).transpose();
  return model;
}

// Minimizes ||targets - intercept - features * coef||^2 + ridge ||coef||^2.
inline LinearModel fit_ols(const MatrixXd& features, const VectorXd& targets, double ridge = 0.0) {
  const MultiLinearModel m = fit_ols_multi(features, targets, ridge);
  return {m.coef.col(0), m.intercept[0]};
}

// Stage 1 regresses every X column on Z, stage 2 regresses Y on the fitted X.
inline LinearModel fit_vanilla2sls(const Dataset& data) {
  data.validate();
  MultiLinearModel stage1;
  try {
    stage1 = fit_ols_multi(data.z, data.x, 0.0);
  } catch (const SingularSystemError& e) {
    throw SingularSystemError(std::string("vanilla 2SLS: ill-posed first stage: ") + e.what(),
                              e.condition_estimate());
  }
  const MatrixXd x_hat = stage1.predict(data.z);
  try {
    return fit_ols(x_hat, data.y, 0.0);
  } catch (const SingularSystemError& e) {
    throw SingularSystemError(
        std::string("vanilla 2SLS: first-stage fit is rank deficient: ") + e.what(),
        e.condition_estimate());
  }
}

// ---------------------------------------------------------------------------
// Polynomial 2SLS

// Every monomial of total degree 1..degree in the columns of `m`, ordered by
// degree and then lexicographically by exponent tuple.
inline MatrixXd poly_features(const MatrixXd& m, int degree) {
  if (degree < 1) throw InvalidArgument("poly_features: degree must be >= 1");
  const Index d = m.cols();
  std::vector<std::vector<int>> exponents;
  std::vector<int> current(static_cast<std::size_t>(d), 0);
  // Enumerate tuples with a fixed total by recursion over columns.
  auto emit = [&](auto&& self, Index col, int remaining) -> void {
    if (col == d - 1) {
      current[static_cast<std::size_t>(col)] = remaining;
      exponents.push_back(current);
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      current[static_cast<std::size_t>(col)] = e;
      self(self, col + 1, remaining - e);
    }
  };
  for (int total = 1; total <= degree; ++total) emit(emit, 0, total);
  MatrixXd out(m.rows(), static_cast<Index>(exponents.size()));
  for (std::size_t k = 0; k < exponents.size(); ++k) {
    VectorXd col = VectorXd::Ones(m.rows());
    for (Index j = 0; j < d; ++j) {
      const int e = exponents[k][static_cast<std::size_t>(j)];
      if (e > 0) col.array() *= m.col(j).array().pow(e);
    }
    out.col(static_cast<Index>(k)) = col;
  }
  return out;
}

// Column standardization fitted on one matrix, applied to others.
struct ColumnScaler {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static ColumnScaler fit(const MatrixXd& m) {
    ColumnScaler s;
    s.mean = m.colwise().mean();
    s.scale = ((m.rowwise() - s.mean).array().square().colwise().mean()).sqrt();
    for (Index j = 0; j < s.scale.size(); ++j) {
      if (!(s.scale[j] > 0.0)) s.scale[j] = 1.0;
    }
    return s;
  }

  MatrixXd apply(const MatrixXd& m) const {
    return ((m.rowwise() - mean).array().rowwise() / scale.array()).matrix();
  }
};

struct PolyModel {
  int x_degree = 1;
  int z_degree = 1;
  double stage1_lambda = 0.0;
  double stage2_lambda = 0.0;
  ColumnScaler x_scaler;   // over poly_features(X, x_degree)
  LinearModel stage2;      // Y on standardized polynomial features of X

  VectorXd predict(const MatrixXd& x) const {
    return stage2.predict(x_scaler.apply(poly_features(x, x_degree)));
  }
};

struct PolyGrid {
  std::vector<int> degrees{1, 2, 3, 4, 5};
  std::vector<double> lambdas{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2};
  int folds = 5;
};

namespace detail {

// Deterministic contiguous fold assignment over a seeded permutation.
inline std::vector<int> fold_ids(Index n, int folds, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    ids[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] =
        static_cast<int>(k * folds / n);
  }
  return ids;
}

inline MatrixXd take_rows(const MatrixXd& m, const std::vector<Index>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
  return out;
}

// Mean held-out squared error of a ridge fit, summed over target columns.
// Returns +inf when any fold is singular.
inline double cv_ridge_error(const MatrixXd& features, const MatrixXd& targets, double lambda,
                             const std::vector<int>& folds, int num_folds) {
  double total = 0.0;
  for (int k = 0; k < num_folds; ++k) {
    std::vector<Index> train_rows, test_rows;
    for (std::size_t i = 0; i < folds.size(); ++i) {
      (folds[i] == k ? test_rows : train_rows).push_back(static_cast<Index>(i));
    }
    try {
      const MultiLinearModel m =
          fit_ols_multi(take_rows(features, train_rows), take_rows(targets, train_rows), lambda);
      total += (m.predict(take_rows(features, test_rows)) - take_rows(targets, test_rows))
                   .squaredNorm();
    } catch (const SingularSystemError&) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return total / static_cast<double>(folds.size());
}

}  // namespace detail

// Polynomial 2SLS with per-stage k-fold cross-validation.
//
// Stage 1 picks (z_degree, lambda) to predict the standardized polynomial
// features of X (up to the largest degree in the grid) from standardized
// polynomial features of Z. Stage 2 picks (x_degree, lambda) to predict Y
// from the first-stage fitted features. Each stage is refit on all rows.
inline PolyModel fit_poly2sls(const Dataset& data, const PolyGrid& grid = {},
                              std::uint64_t seed = 0) {
  data.validate();
  if (grid.degrees.empty() || grid.lambdas.empty()) {
    throw InvalidArgument("fit_poly2sls: grids must be nonempty");
  }
  if (grid.folds < 2) throw InvalidArgument("fit_poly2sls: need at least 2 folds");
  const int max_x_degree = *std::max_element(grid.degrees.begin(), grid.degrees.end());
  const ColumnScaler x_scaler = ColumnScaler::fit(poly_features(data.x, max_x_degree));
  const MatrixXd phi_x = x_scaler.apply(poly_features(data.x, max_x_degree));
  const auto folds = detail::fold_ids(data.size(), grid.folds, derive_seed(seed, 0xf01d));

  PolyModel best;
  double best_err = std::numeric_limits<double>::infinity();
  MatrixXd best_phi_z;
  for (int q : grid.degrees) {
    const MatrixXd phi_z_raw = poly_features(data.z, q);
    const MatrixXd phi_z = ColumnScaler::fit(phi_z_raw).apply(phi_z_raw);
    for (double lam : grid.lambdas) {
      const double err = detail::cv_ridge_error(phi_z, phi_x, lam, folds, grid.folds);
      if (err < best_err) {
        best_err = err;
        best.z_degree = q;
        best.stage1_lambda = lam;
        best_phi_z = phi_z;
      }
    }
  }
  if (!std::isfinite(best_err)) throw SingularSystemError("fit_poly2sls: stage 1 singular", INFINITY);
  const MatrixXd phi_hat =
      fit_ols_multi(best_phi_z, phi_x, best.stage1_lambda).predict(best_phi_z);

  best_err = std::numeric_limits<double>::infinity();
  for (int p : grid.degrees) {
    const MatrixXd feats = phi_hat.leftCols(p);
    for (double lam : grid.lambdas) {
      const double err = detail::cv_ridge_error(feats, data.y, lam, folds, grid.folds);
      if (err < best_err) {
        best_err = err;
        best.x_degree = p;
        best.stage2_lambda = lam;
      }
    }
  }
  if (!std::isfinite(best_err)) throw SingularSystemError("fit_poly2sls: stage 2 singular", INFINITY);
  best.stage2 = fit_ols(phi_hat.leftCols(best.x_degree), data.y, best.stage2_lambda);
  best.x_scaler.mean = x_scaler.mean.leftCols(best.x_degree);
  best.x_scaler.scale = x_scaler.scale.leftCols(best.x_degree);
  return best;
}

// ---------------------------------------------------------------------------
// Neural baselines

struct NnTraining {
  double lr = 1e-3;
  int epochs = 500;
  Index batch_size = 256;
};

// Least-squares regression of Y on X with Adam; ignores the instruments.
inline MlpParams fit_directnn(const Dataset& data, const MlpSpec& spec, const NnTraining& opts) {
  data.validate();
  if (spec.input_dim != data.x.cols()) throw ShapeError("fit_directnn: input dim mismatch");
  MlpParams params = init_mlp(spec);
  OptimState opt(OptimizerConfig::adam(opts.lr));
  const Index n = data.size();
  const Index batch = std::min(opts.batch_size, n);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(derive_seed(spec.seed, 0xd1));
  ForwardTape tape;
  BackwardWorkspace ws;
  VectorXd grad, cot;
  MatrixXd xb;
  VectorXd yb;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(order);
    for (Index start = 0; start < n; start += batch) {
      const Index len = std::min(batch, n - start);
      xb.resize(len, data.x.cols());
      yb.resize(len);
      for (Index k = 0; k < len; ++k) {
        const Index i = order[static_cast<std::size_t>(start + k)];
        xb.row(k) = data.x.row(i);
        yb[k] = data.y[i];
      }
      forward_tape(params, xb, tape);
      cot = -2.0 * (yb - tape.pre.back().col(0)) / static_cast<double>(len);
      backward(params, tape, cot, grad, ws);
      opt.step(params.theta, grad, Direction::minimize);
    }
  }
  return params;
}

// Gaussian RBF features around k-means centroids of Z, plus a constant column.
// Bandwidth sigma is the median pairwise centroid distance (1 when k = 1).
inline MomentBasis rbf_basis(const MatrixXd& z, int k, std::uint64_t seed,
                             MatrixXd* centroids_out = nullptr) {
  const Index n = z.rows();
  if (k < 1) throw InvalidArgument("rbf_basis: k must be >= 1");
  if (n < k) throw InvalidArgument("rbf_basis: fewer rows than centroids");
  constexpr int kMaxAttempts = 5;
  constexpr int kMaxIterations = 100;
  MatrixXd centroids;
  bool converged_ok = false;
  for (int attempt = 0; attempt < kMaxAttempts && !converged_ok; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    std::vector<Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), Index{0});
    rng.shuffle(rows);
    centroids.resize(k, z.cols());
    for (int j = 0; j < k; ++j) centroids.row(j) = z.row(rows[static_cast<std::size_t>(j)]);
    std::vector<int> assign(static_cast<std::size_t>(n), -1);
    bool empty = false;
    for (int it = 0; it < kMaxIterations; ++it) {
      bool changed = false;
      for (Index i = 0; i < n; ++i) {
        Index best;
        (centroids.rowwise() - z.row(i)).rowwise().squaredNorm().minCoeff(&best);
        if (assign[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
          assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
          changed = true;
        }
      }
      MatrixXd sums = MatrixXd::Zero(k, z.cols());
      VectorXd counts = VectorXd::Zero(k);
      for (Index i = 0; i < n; ++i) {
        sums.row(assign[static_cast<std::size_t>(i)]) += z.row(i);
        counts[assign[static_cast<std::size_t>(i)]] += 1.0;
      }
      if ((counts.array() == 0.0).any()) {
        empty = true;
        break;
      }
      centroids = sums.array().colwise() / counts.array();
      if (!changed && it > 0) break;
    }
    converged_ok = !empty;
  }
  if (!converged_ok) throw Error("rbf_basis: k-means left an empty cluster after 5 seeds");

  double sigma = 1.0;
  if (k > 1) {
    std::vector<double> dists;
    for (int a = 0; a < k; ++a) {
      for (int b = a + 1; b < k; ++b) dists.push_back((centroids.row(a) - centroids.row(b)).norm());
    }
    std::sort(dists.begin(), dists.end());
    const std::size_t mid = dists.size() / 2;
    sigma = dists.size() % 2 ? dists[mid] : 0.5 * (dists[mid - 1] + dists[mid]);
    if (!(sigma > 0.0)) sigma = 1.0;
  }
  MomentBasis basis;
  basis.values.resize(n, k + 1);
  for (int j = 0; j < k; ++j) {
    basis.values.col(j) = ((z.rowwise() - centroids.row(j)).rowwise().squaredNorm().array() /
                           (-2.0 * sigma * sigma))
                              .exp();
    basis.labels.push_back("rbf_" + std::to_string(j + 1));
  }
  basis.values.col(k).setOnes();
  basis.labels.push_back("const");
  if (centroids_out) *centroids_out = centroids;
  return basis;
}

struct GmmNnOptions {
  double lr = 1e-2;
  int outer_iters = 3;
  int inner_epochs = 200;
  double ridge = kDefaultMomentRidge;
};

struct GmmNnResult {
  MlpParams params;
  std::vector<std::vector<double>> objective;  // per outer iteration, per inner epoch
};

// Iterated optimally-weighted GMM with a neural response. Outer iteration 0
// weights moments by the identity; later ones by (C + ridge I)^{-1} with C
// computed at the response from the end of the previous outer iteration. Each
// inner loop runs full-batch Adam on psi^T W psi with W fixed.
inline GmmNnResult fit_gmm_nn(const Dataset& data, const MomentBasis& basis, const MlpSpec& spec,
                              const GmmNnOptions& opts) {
  data.validate();
  basis.validate();
  detail::require_same_length(basis.num_samples(), data.size(), "fit_gmm_nn: basis rows");
  if (spec.input_dim != data.x.cols()) throw ShapeError("fit_gmm_nn: input dim mismatch");
  const double n = static_cast<double>(data.size());
  GmmNnResult result{init_mlp(spec), {}};
  MlpParams& params = result.params;
  ForwardTape tape;
  BackwardWorkspace ws;
  VectorXd grad, cot;
  for (int outer = 0; outer < opts.outer_iters; ++outer) {
    MatrixXd weight = MatrixXd::Identity(basis.num_moments(), basis.num_moments());
    if (outer > 0) {
      const VectorXd r_tilde = data.y - forward(params, data.x);
      const MatrixXd cov = cov_matrix(basis, r_tilde);
      double ridge = opts.ridge;
      for (int attempt = 0;; ++attempt) {
        try {
          weight = WeightingSolver(cov, ridge).inverse();
          break;
        } catch (const SingularSystemError&) {
          if (attempt == 3) throw;
          ridge = ridge > 0.0 ? ridge * 10.0 : kDefaultMomentRidge;
        }
      }
    }
    OptimState opt(OptimizerConfig::adam(opts.lr));
    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(opts.inner_epochs));
    for (int epoch = 0; epoch < opts.inner_epochs; ++epoch) {
      forward_tape(params, data.x, tape);
      const VectorXd r = data.y - tape.pre.back().col(0);
      const VectorXd psi = basis.values.transpose() * r / n;
      const VectorXd w_psi = weight * psi;
      history.push_back(psi.dot(w_psi));
      cot = -2.0 * basis.values * w_psi / n;
      backward(params, tape, cot, grad, ws);
      opt.step(params.theta, grad, Direction::minimize);
    }
    result.objective.push_back(std::move(history));
  }
  return result;
}

}  // namespace deepgmm

#endif  // DEEPGMM_BASELINES_HPP_
