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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "deepgmm/harness.hpp"

namespace deepgmm {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(f, line);) out.push_back(line);
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("deepgmm_harness_" + name);
  fs::remove_all(p);
  return p;
}

GameConfig tiny_game(double lr) {
  GameConfig c = low_dim_game_config(lr);
  c.epochs = 6;
  c.eval_period = 3;
  c.batch_size = 50;
  return c;
}

// Every method, small data, a few epochs: exercises the plumbing only.
ExperimentConfig tiny_experiment() {
  ExperimentConfig cfg;
  cfg.scenario.g0 = Response::step;
  cfg.scenario.n = 200;
  cfg.methods = {Method::deepgmm, Method::directnn, Method::vanilla2sls, Method::poly2sls,
                 Method::gmm_nn};
  cfg.seeds = {1, 2};
  cfg.hyper_grid = {tiny_game(1e-3), tiny_game(5e-4)};
  cfg.baselines.directnn.epochs = 5;
  cfg.baselines.gmm_nn.inner_epochs = 5;
  cfg.baselines.gmm_nn.outer_iters = 2;
  cfg.baselines.poly.degrees = {1, 2};
  return cfg;
}

TEST(Methods, NamesRoundTrip) {
  for (Method m : kAllMethods) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_method("ridge"), InvalidArgument);
}

TEST(ConfigJson, RoundTrip) {
  ExperimentConfig cfg = tiny_experiment();
  cfg.hyper_grid[1].batch_size.reset();
  cfg.embedding_dim = 8;
  cfg.output_dir = "somewhere";
  const nlohmann::json j = to_json(cfg);
  const ExperimentConfig back = experiment_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_FALSE(back.hyper_grid[1].batch_size.has_value());
  EXPECT_EQ(back.hyper_grid[0].id(), cfg.hyper_grid[0].id());
  EXPECT_EQ(j["hyper_grid"][1]["batch_size"], "full");
}

TEST(ConfigJson, MissingKeysKeepDefaults) {
  const auto cfg = experiment_config_from_json(nlohmann::json::parse(R"({"seeds": [3]})"));
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{3}));
  EXPECT_EQ(cfg.hyper_grid.size(), low_dim_grid().size());
  EXPECT_EQ(cfg.scenario.n, 2000);
  EXPECT_THROW(game_config_from_json(nlohmann::json::parse(R"({"batch_size": "half"})")),
               InvalidArgument);
}

TEST(ScenarioName, ParseAndFormat) {
  ExperimentConfig cfg;
  apply_scenario_name("abs_embed64", cfg);
  EXPECT_EQ(cfg.scenario.g0, Response::abs);
  EXPECT_EQ(cfg.embedding_dim, 64);
  EXPECT_EQ(scenario_name(cfg), "abs_embed64");
  apply_scenario_name("linear", cfg);
  EXPECT_EQ(cfg.embedding_dim, 0);
  EXPECT_EQ(scenario_name(cfg), "linear");
  EXPECT_THROW(apply_scenario_name("abs_embed", cfg), InvalidArgument);
  EXPECT_THROW(apply_scenario_name("abs_embed0", cfg), InvalidArgument);
  EXPECT_THROW(apply_scenario_name("cos", cfg), InvalidArgument);
}

TEST(PrepareData, EmbeddingReplacesInstruments) {
  ExperimentConfig cfg;
  cfg.scenario.n = 100;
  cfg.embedding_dim = 16;
  const Splits s = prepare_data(cfg, 4);
  EXPECT_EQ(s.train.z.cols(), 16);
  EXPECT_EQ(s.test.z.cols(), 16);
  EXPECT_NEAR(s.train.y.mean(), 0.0, 1e-12);
  const Splits raw = prepare_data(cfg, 4, false);
  EXPECT_EQ(raw.train.x, s.train.x);
  EXPECT_EQ(raw.train.y_transform.scale, 1.0);
}

TEST(Curve, TrueResponseGivesZeroGap) {
  ExperimentConfig cfg;
  cfg.scenario.n = 500;
  const Splits s = prepare_data(cfg, 1);
  const Curve c = make_curve("sin", Method::directnn, s.test,
                             [&](const MatrixXd& x) { return s.test.true_response(x); });
  ASSERT_EQ(c.x.size(), kCurvePoints);
  EXPECT_EQ(c.g_hat, c.g0);
  EXPECT_DOUBLE_EQ(c.x[0], detail::quantile(s.test.x.col(0), 0.01));
  EXPECT_DOUBLE_EQ(c.x[kCurvePoints - 1], detail::quantile(s.test.x.col(0), 0.99));
}

TEST(Report, SingleRow) {
  const fs::path dir = scratch("single");
  RunResult r{"sin", "vanilla2sls", 1, 0.25, "", 0.5, RunStatus::ok};
  ExperimentConfig cfg = tiny_experiment();
  emit_report({r}, {}, dir.string(), &cfg);
  const auto results = lines_of(dir / "results.csv");
  ASSERT_EQ(results.size(), 2u);
  EXPECT_EQ(results[0], "scenario,method,seed,status,mse,selected_hyper");
  EXPECT_EQ(results[1], "sin,vanilla2sls,1,ok,0.250000,\"\"");
  const auto summary = lines_of(dir / "summary.csv");
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_EQ(summary[1], "sin,vanilla2sls,1,1,0.25,0");
  EXPECT_TRUE(fs::exists(dir / "timings.csv"));
  EXPECT_EQ(to_json(experiment_config_from_json(nlohmann::json::parse(slurp(dir / "config.json")))),
            to_json(cfg));
}

TEST(Report, SummaryMatchesRecomputedMeans) {
  std::vector<RunResult> rs;
  const double values[] = {0.1234564, 0.2, 0.0000015, 0.7777777};
  for (int i = 0; i < 4; ++i) rs.push_back({"abs", "deepgmm", std::uint64_t(i + 1), values[i], "", 0, RunStatus::ok});
  rs.push_back({"abs", "deepgmm", 9, std::nullopt, "boom", 0, RunStatus::diverged});
  const auto rows = summarize(rs);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].n_ok, 4);
  EXPECT_EQ(rows[0].n_runs, 5);
  // Recompute from the 6-decimal strings as a reader of results.csv would.
  double sum = 0.0, vals[4];
  for (int i = 0; i < 4; ++i) {
    vals[i] = std::stod(detail::format_fixed(values[i], 6));
    sum += vals[i];
  }
  const double mean = sum / 4.0;
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(rows[0].mean, mean, 1e-12);
  EXPECT_NEAR(rows[0].std_error, std::sqrt(ss / 3.0) / 2.0, 1e-12);
}

TEST(Report, UnwritableDirectoryRaisesIoError) {
  const fs::path base = scratch("blocker");
  fs::create_directories(base);
  std::ofstream(base / "file") << "x";
  EXPECT_THROW(ensure_writable_dir((base / "file" / "sub").string()), IoError);
  RunResult r{"sin", "vanilla2sls", 1, 0.25, "", 0.5, RunStatus::ok};
  EXPECT_THROW(emit_report({r}, {}, (base / "file" / "sub").string()), IoError);
}

TEST(Experiment, ResultsAreByteIdenticalAcrossRuns) {
  const ExperimentConfig cfg = tiny_experiment();
  const fs::path a = scratch("repeat_a"), b = scratch("repeat_b");
  const ExperimentOutcome oa = run_experiment(cfg);
  const ExperimentOutcome ob = run_experiment(cfg);
  emit_report(oa.results, oa.curves, a.string(), &cfg);
  emit_report(ob.results, ob.curves, b.string(), &cfg);
  const std::string ra = slurp(a / "results.csv");
  EXPECT_EQ(ra, slurp(b / "results.csv"));
  EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
  EXPECT_EQ(lines_of(a / "results.csv").size(), 1u + 5u * 2u);
  for (const auto& r : oa.results) EXPECT_EQ(r.status, RunStatus::ok) << r.method << ": " << r.selected_hyper;
  EXPECT_EQ(oa.curves.size(), 5u);
  EXPECT_TRUE(fs::exists(a / "curves_step_deepgmm.csv"));
  EXPECT_EQ(lines_of(a / "curves_step_gmm_nn.csv").size(), 1u + kCurvePoints);
}

TEST(Experiment, AllDivergedReportsStatusesOnly) {
  ExperimentConfig cfg = tiny_experiment();
  cfg.methods = {Method::deepgmm};
  cfg.hyper_grid = {tiny_game(1e200)};
  const ExperimentOutcome out = run_experiment(cfg);
  ASSERT_EQ(out.results.size(), 2u);
  for (const auto& r : out.results) {
    EXPECT_EQ(r.status, RunStatus::diverged);
    EXPECT_FALSE(r.mse.has_value());
  }
  EXPECT_TRUE(out.curves.empty());
  const fs::path dir = scratch("diverged");
  emit_report(out.results, out.curves, dir.string());
  const auto lines = lines_of(dir / "results.csv");
  EXPECT_EQ(lines[1].rfind("step,deepgmm,1,diverged,,", 0), 0u) << lines[1];
  EXPECT_EQ(lines_of(dir / "summary.csv")[1].rfind("step,deepgmm,0,2,", 0), 0u);
}

Splits small_splits(Response g0, std::uint64_t seed, double noise = 1.0) {
  Splits s = generate_lowdim({g0, 300, seed, noise});
  standardize_y(s);
  return s;
}

TEST(HyperSearch, GridOrderDoesNotMatter) {
  const Splits s = small_splits(Response::abs, 2);
  std::vector<GameConfig> grid = {tiny_game(1e-3), tiny_game(5e-4), tiny_game(2e-3)};
  const auto fwd = detail::seeded_grid(grid, 7, 1, 2);
  std::reverse(grid.begin(), grid.end());
  const auto rev = detail::seeded_grid(grid, 7, 1, 2);
  const HyperSearchResult a = hyperparameter_search(s.train, s.val, fwd);
  const HyperSearchResult b = hyperparameter_search(s.train, s.val, rev);
  EXPECT_EQ(a.winner_config.id(), b.winner_config.id());
  EXPECT_EQ(a.selection.epoch, b.selection.epoch);
  EXPECT_EQ(a.selection.value, b.selection.value);
  EXPECT_EQ(a.theta.theta, b.theta.theta);
}

TEST(HyperSearch, WinnerHasSmallestScore) {
  const Splits s = small_splits(Response::sin, 3);
  std::vector<GameConfig> grid = {tiny_game(1e-3), tiny_game(1e200), tiny_game(3e-3)};
  grid = detail::seeded_grid(grid, 1, 1, 2);
  const HyperSearchResult r = hyperparameter_search(s.train, s.val, grid);
  ASSERT_EQ(r.scores.size(), 3u);
  EXPECT_FALSE(r.scores[1].has_value());
  EXPECT_FALSE(r.failures[1].empty());
  ASSERT_TRUE(r.scores[r.winner].has_value());
  for (const auto& sc : r.scores) {
    if (sc) {
      EXPECT_LE(*r.scores[r.winner], *sc);
    }
  }
  // The winner's parameters reproduce its stored validation response.
  bool found = false;
  for (const auto& e : r.pool.entries()) {
    if (e.run_id == static_cast<int>(r.winner) && e.epoch == r.selection.epoch) {
      EXPECT_EQ(forward(r.theta, s.val.x), e.g_on_val);
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

// Noise-free linear data: a config trained long enough to zero the moments
// beats one whose learning rate leaves it at its initialization.
TEST(HyperSearch, PlantedConfigWins) {
  const Splits s = small_splits(Response::linear, 4, 0.0);
  GameConfig good = low_dim_game_config(1e-3);
  good.epochs = 200;
  GameConfig stuck = good;
  stuck.lr_g = 1e-9;
  const auto grid = detail::seeded_grid({stuck, good}, 5, 1, 2);
  const HyperSearchResult r = hyperparameter_search(s.train, s.val, grid);
  EXPECT_EQ(r.winner, 1u);
  EXPECT_LT(*r.scores[1], *r.scores[0]);
}

TEST(HyperSearch, SingleEntryGrid) {
  const Splits s = small_splits(Response::step, 5);
  const auto grid = detail::seeded_grid({tiny_game(1e-3)}, 2, 1, 2);
  const HyperSearchResult r = hyperparameter_search(s.train, s.val, grid);
  EXPECT_EQ(r.winner, 0u);
  EXPECT_EQ(r.pool.size(), 1u + 2u);  // zero critic, epochs 3 and 6
  EXPECT_THROW(hyperparameter_search(s.train, s.val, {}), InvalidArgument);
}

TEST(HyperSearch, AllDivergedThrows) {
  const Splits s = small_splits(Response::step, 5);
  EXPECT_THROW(hyperparameter_search(s.train, s.val, {tiny_game(1e200)}), NonFiniteError);
}

}  // namespace
}  // namespace deepgmm
