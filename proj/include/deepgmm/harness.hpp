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

// Experiment orchestration: hyperparameter search for the game estimator,
// multi-seed benchmarking of every method, and report emission.

#ifndef DEEPGMM_HARNESS_HPP_
#define DEEPGMM_HARNESS_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deepgmm/baselines.hpp"
#include "deepgmm/deepgmm.hpp"
#include "deepgmm/errors.hpp"
#include "deepgmm/netcore.hpp"
#include "deepgmm/scenarios.hpp"
#include "json.hpp"

namespace deepgmm {

enum class Method { deepgmm, directnn, vanilla2sls, poly2sls, gmm_nn };

inline constexpr Method kAllMethods[] = {Method::deepgmm, Method::directnn, Method::vanilla2sls,
                                        Method::poly2sls, Method::gmm_nn};

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::deepgmm: return "deepgmm";
    case Method::directnn: return "directnn";
    case Method::vanilla2sls: return "vanilla2sls";
    case Method::poly2sls: return "poly2sls";
    case Method::gmm_nn: return "gmm_nn";
  }
  return "?";
}

inline Method parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

inline std::string_view to_string(RunStatus s) { return s == RunStatus::ok ? "ok" : "diverged"; }

// Defaults for the game estimator on the low-dimensional scenarios: response
// FCNN(20, 3), critic FCNN(20), lr_g in {5e-4, 2e-4, 1e-3}, lambda_f = 5.
inline constexpr int kDefaultGameEpochs = 1500;
inline constexpr Index kDefaultGameBatch = 128;
inline constexpr int kDefaultEvalPeriod = 20;

inline GameConfig low_dim_game_config(double lr_g, Index x_dim = 1, Index z_dim = 2) {
  GameConfig c;
  c.g_spec = {x_dim, {20, 3}, 0.1, 0};
  c.f_spec = {z_dim, {20}, 0.1, 0};
  c.lr_g = lr_g;
  c.lambda_f = 5.0;
  c.epochs = kDefaultGameEpochs;
  c.batch_size = kDefaultGameBatch;
  c.eval_period = kDefaultEvalPeriod;
  return c;
}

inline std::vector<GameConfig> low_dim_grid(Index x_dim = 1, Index z_dim = 2) {
  std::vector<GameConfig> grid;
  for (double lr : {5e-4, 2e-4, 1e-3}) grid.push_back(low_dim_game_config(lr, x_dim, z_dim));
  return grid;
}

// Settings of the non-game methods.
struct BaselineSettings {
  MlpSpec nn_spec{1, {20, 3}, 0.1, 0};
  NnTraining directnn{1e-3, 300, 256};
  GmmNnOptions gmm_nn{};
  int rbf_centroids = 10;
  PolyGrid poly{};
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  std::vector<Method> methods;
  std::vector<std::uint64_t> seeds;
  std::vector<GameConfig> hyper_grid = low_dim_grid();
  std::string output_dir;
  Index embedding_dim = 0;  // > 0 replaces Z by a digit-class embedding
  BaselineSettings baselines{};

  void validate() const {
    scenario.validate();
    if (seeds.empty()) throw InvalidArgument("ExperimentConfig: seeds must be nonempty");
    if (methods.empty()) throw InvalidArgument("ExperimentConfig: methods must be nonempty");
    if (std::find(methods.begin(), methods.end(), Method::deepgmm) != methods.end() &&
        hyper_grid.empty()) {
      throw InvalidArgument("ExperimentConfig: hyper_grid must be nonempty for deepgmm");
    }
    if (embedding_dim < 0) throw InvalidArgument("ExperimentConfig: embedding_dim must be >= 0");
  }
};

struct RunResult {
  std::string scenario;
  std::string method;
  std::uint64_t seed = 0;
  std::optional<double> mse;  // present iff status == ok
  std::string selected_hyper;
  double wall_time_seconds = 0.0;
  RunStatus status = RunStatus::ok;
};

// Figure-style evaluation of one fitted response on a grid.
struct Curve {
  std::string scenario;
  std::string method;
  VectorXd x;
  VectorXd g0;
  VectorXd g_hat;
};

// ---------------------------------------------------------------------------
// JSON (keys mirror the struct field names)

inline nlohmann::json to_json(const MlpSpec& s) {
  return {{"input_dim", s.input_dim}, {"hidden_sizes", s.hidden_sizes},
          {"leaky_slope", s.leaky_slope}, {"seed", s.seed}};
}

inline MlpSpec mlp_spec_from_json(const nlohmann::json& j, const MlpSpec& defaults = {}) {
  MlpSpec s = defaults;
  s.input_dim = j.value("input_dim", s.input_dim);
  s.hidden_sizes = j.value("hidden_sizes", s.hidden_sizes);
  s.leaky_slope = j.value("leaky_slope", s.leaky_slope);
  s.seed = j.value("seed", s.seed);
  return s;
}

inline nlohmann::json to_json(const GameConfig& c) {
  nlohmann::json j = {{"g_spec", to_json(c.g_spec)}, {"f_spec", to_json(c.f_spec)},
                      {"lr_g", c.lr_g},              {"lambda_f", c.lambda_f},
                      {"epochs", c.epochs},          {"eval_period", c.eval_period},
                      {"seed", c.seed},              {"beta1", c.beta1},
                      {"beta2", c.beta2}};
  if (c.batch_size) {
    j["batch_size"] = *c.batch_size;
  } else {
    j["batch_size"] = "full";
  }
  return j;
}

inline GameConfig game_config_from_json(const nlohmann::json& j) {
  GameConfig c = low_dim_game_config(1e-3);
  if (j.contains("g_spec")) c.g_spec = mlp_spec_from_json(j["g_spec"], c.g_spec);
  if (j.contains("f_spec")) c.f_spec = mlp_spec_from_json(j["f_spec"], c.f_spec);
  c.lr_g = j.value("lr_g", c.lr_g);
  c.lambda_f = j.value("lambda_f", c.lambda_f);
  c.epochs = j.value("epochs", c.epochs);
  c.eval_period = j.value("eval_period", c.eval_period);
  c.seed = j.value("seed", c.seed);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  if (j.contains("batch_size")) {
    const auto& b = j["batch_size"];
    if (b.is_string()) {
      if (b.get<std::string>() != "full") throw InvalidArgument("batch_size must be a number or \"full\"");
      c.batch_size.reset();
    } else {
      c.batch_size = b.get<Index>();
    }
  }
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json methods = nlohmann::json::array();
  for (Method m : cfg.methods) methods.push_back(std::string(to_string(m)));
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& g : cfg.hyper_grid) grid.push_back(to_json(g));
  const auto& b = cfg.baselines;
  return {
      {"scenario",
       {{"g0_name", std::string(to_string(cfg.scenario.g0))},
        {"n", cfg.scenario.n},
        {"seed", cfg.scenario.seed},
        {"noise_scale", cfg.scenario.noise_scale}}},
      {"methods", methods},
      {"seeds", cfg.seeds},
      {"hyper_grid", grid},
      {"output_dir", cfg.output_dir},
      {"embedding_dim", cfg.embedding_dim},
      {"baselines",
       {{"nn_spec", to_json(b.nn_spec)},
        {"directnn", {{"lr", b.directnn.lr}, {"epochs", b.directnn.epochs},
                      {"batch_size", b.directnn.batch_size}}},
        {"gmm_nn", {{"lr", b.gmm_nn.lr}, {"outer_iters", b.gmm_nn.outer_iters},
                    {"inner_epochs", b.gmm_nn.inner_epochs}, {"ridge", b.gmm_nn.ridge}}},
        {"rbf_centroids", b.rbf_centroids},
        {"poly", {{"degrees", b.poly.degrees}, {"lambdas", b.poly.lambdas},
                  {"folds", b.poly.folds}}}}},
  };
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (j.contains("scenario")) {
    const auto& s = j["scenario"];
    if (s.contains("g0_name")) cfg.scenario.g0 = parse_response(s["g0_name"].get<std::string>());
    cfg.scenario.n = s.value("n", cfg.scenario.n);
    cfg.scenario.seed = s.value("seed", cfg.scenario.seed);
    cfg.scenario.noise_scale = s.value("noise_scale", cfg.scenario.noise_scale);
  }
  if (j.contains("methods")) {
    for (const auto& m : j["methods"]) cfg.methods.push_back(parse_method(m.get<std::string>()));
  }
  cfg.seeds = j.value("seeds", cfg.seeds);
  if (j.contains("hyper_grid")) {
    cfg.hyper_grid.clear();
    for (const auto& g : j["hyper_grid"]) cfg.hyper_grid.push_back(game_config_from_json(g));
  }
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  cfg.embedding_dim = j.value("embedding_dim", cfg.embedding_dim);
  if (j.contains("baselines")) {
    const auto& b = j["baselines"];
    auto& out = cfg.baselines;
    if (b.contains("nn_spec")) out.nn_spec = mlp_spec_from_json(b["nn_spec"], out.nn_spec);
    if (b.contains("directnn")) {
      out.directnn.lr = b["directnn"].value("lr", out.directnn.lr);
      out.directnn.epochs = b["directnn"].value("epochs", out.directnn.epochs);
      out.directnn.batch_size = b["directnn"].value("batch_size", out.directnn.batch_size);
    }
    if (b.contains("gmm_nn")) {
      out.gmm_nn.lr = b["gmm_nn"].value("lr", out.gmm_nn.lr);
      out.gmm_nn.outer_iters = b["gmm_nn"].value("outer_iters", out.gmm_nn.outer_iters);
      out.gmm_nn.inner_epochs = b["gmm_nn"].value("inner_epochs", out.gmm_nn.inner_epochs);
      out.gmm_nn.ridge = b["gmm_nn"].value("ridge", out.gmm_nn.ridge);
    }
    out.rbf_centroids = b.value("rbf_centroids", out.rbf_centroids);
    if (b.contains("poly")) {
      out.poly.degrees = b["poly"].value("degrees", out.poly.degrees);
      out.poly.lambdas = b["poly"].value("lambdas", out.poly.lambdas);
      out.poly.folds = b["poly"].value("folds", out.poly.folds);
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Hyperparameter search

struct HyperSearchResult {
  std::size_t winner = 0;  // index into the grid
  GameConfig winner_config;
  Selection selection;     // winner's early-stopped checkpoint
  MlpParams theta;         // response parameters at that checkpoint
  CheckpointPool pool;     // zero critic plus every run's checkpoints
  std::vector<std::optional<double>> scores;  // per grid entry; nullopt = diverged
  std::vector<std::string> failures;          // per grid entry; empty when ok

  explicit HyperSearchResult(Index n_val) : pool(n_val) {}
};

// Trains every grid entry (run id = grid index), pools all critics, scores
// each entry by the smallest validation surrogate over its own checkpoints,
// and returns the entry with the smallest score. Ties go to the smallest
// GameConfig::id(), so the winner does not depend on grid order.
inline HyperSearchResult hyperparameter_search(const Dataset& data_train, const Dataset& data_val,
                                               const std::vector<GameConfig>& grid) {
  if (grid.empty()) throw InvalidArgument("hyperparameter_search: empty grid");
  HyperSearchResult out(data_val.size());
  std::vector<TrainResult> runs;
  runs.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    runs.push_back(train(data_train, data_val, grid[i], static_cast<int>(i)));
    if (runs.back().status == RunStatus::ok) out.pool.merge(runs.back().pool);
  }
  const ValidationSurrogate surrogate(out.pool, data_val);
  std::optional<std::size_t> best;
  std::optional<Selection> best_sel;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out.failures.push_back(runs[i].failure);
    if (runs[i].status != RunStatus::ok) {
      out.scores.push_back(std::nullopt);
      continue;
    }
    Selection sel = early_stop_select(surrogate, out.pool, static_cast<int>(i));
    out.scores.push_back(sel.value);
    const bool better =
        !best || sel.value < best_sel->value ||
        (sel.value == best_sel->value && grid[i].id() < grid[*best].id());
    if (better) {
      best = i;
      best_sel = std::move(sel);
    }
  }
  if (!best) throw NonFiniteError("hyperparameter_search: every run diverged", -1);
  out.winner = *best;
  out.winner_config = grid[*best];
  out.selection = *best_sel;
  // Pool order per run matches the run's own pool order, so map the selected
  // epoch back to the stored parameters.
  const auto& run = runs[*best];
  for (std::size_t k = 1; k < run.pool.size(); ++k) {
    if (run.pool.entries()[k].epoch == out.selection.epoch) {
      out.theta = run.theta_at(k);
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Grid entries re-seeded for one benchmark seed. Seeds depend on the entry's
// id, not its position, so reordering the grid changes nothing.
inline std::vector<GameConfig> seeded_grid(const std::vector<GameConfig>& grid,
                                           std::uint64_t seed, Index x_dim, Index z_dim) {
  std::vector<GameConfig> out = grid;
  for (auto& c : out) {
    const std::uint64_t base = derive_seed(seed, fnv1a(c.id()));
    c.g_spec.input_dim = x_dim;
    c.f_spec.input_dim = z_dim;
    c.g_spec.seed = derive_seed(base, 1 + c.g_spec.seed);
    c.f_spec.seed = derive_seed(base, 2 + c.f_spec.seed);
    c.seed = derive_seed(base, 3 + c.seed);
  }
  return out;
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double quantile(VectorXd v, double q) {
  std::sort(v.data(), v.data() + v.size());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<Index>(std::floor(pos));
  const Index hi = std::min<Index>(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

// Splits for one seed: generated, optionally embedded, and standardized.
inline Splits prepare_data(const ExperimentConfig& cfg, std::uint64_t seed,
                           bool standardize = true) {
  ScenarioConfig sc = cfg.scenario;
  sc.seed = seed;
  Splits s = generate_lowdim(sc);
  if (cfg.embedding_dim > 0) {
    const std::uint64_t embed_seed = derive_seed(seed, 0xe3bed);
    s.train = generate_highdim_embedding(s.train, cfg.embedding_dim, embed_seed, 0);
    s.val = generate_highdim_embedding(s.val, cfg.embedding_dim, embed_seed, 1);
    s.test = generate_highdim_embedding(s.test, cfg.embedding_dim, embed_seed, 2);
  }
  if (standardize) standardize_y(s);
  return s;
}

inline std::string scenario_name(const ExperimentConfig& cfg) {
  std::string name(to_string(cfg.scenario.g0));
  if (cfg.embedding_dim > 0) name += "_embed" + std::to_string(cfg.embedding_dim);
  return name;
}

// Inverse of scenario_name: "sin", "abs_embed64", ...
inline void apply_scenario_name(std::string_view name, ExperimentConfig& cfg) {
  const auto pos = name.find("_embed");
  if (pos == std::string_view::npos) {
    cfg.scenario.g0 = parse_response(name);
    cfg.embedding_dim = 0;
    return;
  }
  cfg.scenario.g0 = parse_response(name.substr(0, pos));
  const std::string dim(name.substr(pos + 6));
  std::size_t used = 0;
  long value = 0;
  try {
    value = std::stol(dim, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != dim.size() || value < 1) {
    throw InvalidArgument("bad embedding dimension in scenario '" + std::string(name) + "'");
  }
  cfg.embedding_dim = value;
}

using Predictor = std::function<VectorXd(const MatrixXd&)>;

struct FittedMethod {
  Predictor predict;
  std::string selected_hyper;
};

// Fits one method on one seed's splits. Divergence surfaces as NonFiniteError.
inline FittedMethod fit_method(Method method, const Splits& s, const ExperimentConfig& cfg,
                               std::uint64_t seed) {
  const Index x_dim = s.train.x.cols();
  const Index z_dim = s.train.z.cols();
  const auto& b = cfg.baselines;
  MlpSpec nn = b.nn_spec;
  nn.input_dim = x_dim;
  switch (method) {
    case Method::deepgmm: {
      const auto grid = detail::seeded_grid(cfg.hyper_grid, seed, x_dim, z_dim);
      HyperSearchResult hs = hyperparameter_search(s.train, s.val, grid);
      MlpParams theta = hs.theta;
      return {[theta](const MatrixXd& x) { return forward(theta, x); },
              hs.winner_config.id() + ";epoch=" + std::to_string(hs.selection.epoch)};
    }
    case Method::directnn: {
      nn.seed = derive_seed(seed, 0xd12ec7);
      MlpParams p = fit_directnn(s.train, nn, b.directnn);
      if (!p.theta.allFinite()) throw NonFiniteError("directnn diverged", -1);
      return {[p](const MatrixXd& x) { return forward(p, x); }, "lr=" + detail::format_full(b.directnn.lr)};
    }
    case Method::vanilla2sls: {
      LinearModel m = fit_vanilla2sls(s.train);
      return {[m](const MatrixXd& x) { return m.predict(x); }, ""};
    }
    case Method::poly2sls: {
      PolyModel m = fit_poly2sls(s.train, b.poly, derive_seed(seed, 0x9017));
      std::ostringstream os;
      os << "x_degree=" << m.x_degree << ";z_degree=" << m.z_degree
         << ";lambda1=" << m.stage1_lambda << ";lambda2=" << m.stage2_lambda;
      return {[m](const MatrixXd& x) { return m.predict(x); }, os.str()};
    }
    case Method::gmm_nn: {
      MomentBasis basis = rbf_basis(s.train.z, b.rbf_centroids, derive_seed(seed, 0x7bf));
      nn.seed = derive_seed(seed, 0x6e6e);
      GmmNnResult r = fit_gmm_nn(s.train, basis, nn, b.gmm_nn);
      if (!r.params.theta.allFinite()) throw NonFiniteError("gmm_nn diverged", -1);
      MlpParams p = r.params;
      return {[p](const MatrixXd& x) { return forward(p, x); },
              "k=" + std::to_string(b.rbf_centroids)};
    }
  }
  throw InvalidArgument("fit_method: unknown method");
}

inline constexpr int kCurvePoints = 200;

inline Curve make_curve(const std::string& scenario, Method method, const Dataset& test,
                        const Predictor& predict) {
  const VectorXd x = test.x.col(0);
  const double lo = detail::quantile(x, 0.01);
  const double hi = detail::quantile(x, 0.99);
  MatrixXd grid(kCurvePoints, test.x.cols());
  grid.setZero();
  for (int i = 0; i < kCurvePoints; ++i) grid(i, 0) = lo + (hi - lo) * i / (kCurvePoints - 1);
  return {scenario, std::string(to_string(method)), grid.col(0), test.true_response(grid),
          predict(grid)};
}

struct ExperimentOutcome {
  std::vector<RunResult> results;  // sorted by (scenario, method, seed)
  std::vector<Curve> curves;       // first seed of every ok (scenario, method)
};

inline void sort_results(std::vector<RunResult>& results) {
  std::sort(results.begin(), results.end(), [](const RunResult& a, const RunResult& b) {
    return std::tie(a.scenario, a.method, a.seed) < std::tie(b.scenario, b.method, b.seed);
  });
}

// Every selected method on every seed: fresh data and fresh initialization
// per seed. Failures are recorded as diverged and never abort the loop.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentOutcome out;
  const std::string scenario = scenario_name(cfg);
  std::map<std::string, bool> have_curve;
  for (std::uint64_t seed : cfg.seeds) {
    const Splits s = prepare_data(cfg, seed);
    for (Method method : cfg.methods) {
      RunResult r;
      r.scenario = scenario;
      r.method = std::string(to_string(method));
      r.seed = seed;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        FittedMethod fitted = fit_method(method, s, cfg, seed);
        const VectorXd pred = fitted.predict(s.test.x);
        if (!pred.allFinite()) throw NonFiniteError("non-finite test predictions", -1);
        r.mse = mse(pred, s.test);
        r.selected_hyper = fitted.selected_hyper;
        if (!have_curve[r.method]) {
          out.curves.push_back(make_curve(scenario, method, s.test, fitted.predict));
          have_curve[r.method] = true;
        }
      } catch (const Error& e) {
        r.status = RunStatus::diverged;
        r.mse.reset();
        r.selected_hyper = e.what();
      }
      r.wall_time_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out.results.push_back(std::move(r));
    }
  }
  sort_results(out.results);
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct SummaryRow {
  std::string scenario;
  std::string method;
  int n_ok = 0;
  int n_runs = 0;
  double mean = 0.0;
  double std_error = 0.0;
};

// Reported MSE value: the 6-decimal figure written to results.csv.
inline double reported_mse(double mse) { return std::stod(detail::format_fixed(mse, 6)); }

// Mean and standard error (sample sd / sqrt(k)) of the reported MSE values.
inline std::vector<SummaryRow> summarize(const std::vector<RunResult>& results) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  std::map<std::pair<std::string, std::string>, int> counts;
  for (const auto& r : results) {
    const auto key = std::make_pair(r.scenario, r.method);
    ++counts[key];
    auto& g = groups[key];
    if (r.status == RunStatus::ok && r.mse) g.push_back(reported_mse(*r.mse));
  }
  std::vector<SummaryRow> rows;
  for (const auto& [key, n] : counts) {
    SummaryRow row{key.first, key.second, 0, n, 0.0, 0.0};
    const auto& v = groups[key];
    row.n_ok = static_cast<int>(v.size());
    if (!v.empty()) {
      double sum = 0.0;
      for (double x : v) sum += x;
      row.mean = sum / static_cast<double>(v.size());
      if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - row.mean) * (x - row.mean);
        row.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1)) /
                        std::sqrt(static_cast<double>(v.size()));
      }
    }
    rows.push_back(row);
  }
  return rows;
}

// Creates `dir` and checks that it is writable; throws IoError otherwise.
inline void ensure_writable_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
  const fs::path probe = fs::path(dir) / ".write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw IoError("output directory '" + dir + "' is not writable");
  }
  fs::remove(probe, ec);
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw IoError("cannot open '" + p.string() + "' for writing");
  return f;
}

}  // namespace detail

// Writes results.csv, summary.csv, timings.csv, curves_<scenario>_<method>.csv
// and (when cfg is given) config.json into output_dir.
inline void emit_report(const std::vector<RunResult>& unsorted, const std::vector<Curve>& curves,
                        const std::string& output_dir,
                        const ExperimentConfig* cfg = nullptr) {
  if (unsorted.empty()) throw InvalidArgument("emit_report: no results");
  ensure_writable_dir(output_dir);
  namespace fs = std::filesystem;
  std::vector<RunResult> results = unsorted;
  sort_results(results);
  {
    auto f = detail::open_out(fs::path(output_dir) / "results.csv");
    f << "scenario,method,seed,status,mse,selected_hyper\n";
    for (const auto& r : results) {
      f << r.scenario << ',' << r.method << ',' << r.seed << ',' << to_string(r.status) << ','
        << (r.mse ? detail::format_fixed(*r.mse, 6) : std::string()) << ",\"";
      for (char c : r.selected_hyper) f << (c == '"' ? '\'' : c);
      f << "\"\n";
    }
  }
  {
    auto f = detail::open_out(fs::path(output_dir) / "summary.csv");
    f << "scenario,method,n_ok,n_runs,mean_mse,stderr_mse\n";
    for (const auto& row : summarize(results)) {
      f << row.scenario << ',' << row.method << ',' << row.n_ok << ',' << row.n_runs << ','
        << detail::format_full(row.mean) << ',' << detail::format_full(row.std_error) << '\n';
    }
  }
  {
    auto f = detail::open_out(fs::path(output_dir) / "timings.csv");
    f << "scenario,method,seed,wall_time_seconds\n";
    for (const auto& r : results) {
      f << r.scenario << ',' << r.method << ',' << r.seed << ','
        << detail::format_fixed(r.wall_time_seconds, 3) << '\n';
    }
  }
  for (const auto& c : curves) {
    auto f = detail::open_out(fs::path(output_dir) / ("curves_" + c.scenario + "_" + c.method + ".csv"));
    f << "x,g0,g_hat\n";
    for (Index i = 0; i < c.x.size(); ++i) {
      f << detail::format_full(c.x[i]) << ',' << detail::format_full(c.g0[i]) << ','
        << detail::format_full(c.g_hat[i]) << '\n';
    }
  }
  if (cfg) {
    auto f = detail::open_out(fs::path(output_dir) / "config.json");
    f << to_json(*cfg).dump(2) << '\n';
  }
}

}  // namespace deepgmm

#endif  // DEEPGMM_HARNESS_HPP_
