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

// Command-line driver.
//
//   deepgmm run --scenario <name> --methods <list> --seeds <k> --out <dir>
//               [--n 2000] [--epochs 1500] [--config <file>]
//   deepgmm hypersearch --scenario <name> --grid <file> --out <dir> [--seed 1] [--n 2000]
//   deepgmm verify --suite <gradients|lemma1|appendixC|optim|generators>
//   deepgmm export-data --scenario <name> --seed <s> --out <file> [--split train]
//
// Exit codes: 0 success, 1 property failure, 2 every run diverged, 3 I/O error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "deepgmm/harness.hpp"
#include "deepgmm/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPropertyFailure = 1;
constexpr int kExitAllDiverged = 2;
constexpr int kExitIo = 3;

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw deepgmm::IoError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw deepgmm::IoError("'" + path + "' is not valid JSON: " + e.what());
  }
}

std::vector<deepgmm::Method> parse_methods(const std::string& list) {
  std::vector<deepgmm::Method> out;
  if (list == "all") return {std::begin(deepgmm::kAllMethods), std::end(deepgmm::kAllMethods)};
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(deepgmm::parse_method(item));
  }
  return out;
}

struct RunArgs {
  std::string scenario;
  std::string methods;
  int seeds = 0;
  std::string out;
  long n = 2000;
  int epochs = deepgmm::kDefaultGameEpochs;
  std::string config;
};

int cmd_run(const RunArgs& a, const CLI::App& sub) {
  deepgmm::ExperimentConfig cfg;
  if (!a.config.empty()) cfg = deepgmm::experiment_config_from_json(read_json(a.config));
  if (sub.count("--scenario")) deepgmm::apply_scenario_name(a.scenario, cfg);
  if (sub.count("--methods")) cfg.methods = parse_methods(a.methods);
  if (sub.count("--seeds")) {
    cfg.seeds.clear();
    for (int s = 1; s <= a.seeds; ++s) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (sub.count("--out")) cfg.output_dir = a.out;
  if (sub.count("--n") || a.config.empty()) cfg.scenario.n = a.n;
  if (sub.count("--epochs")) {
    for (auto& g : cfg.hyper_grid) g.epochs = a.epochs;
  }
  if (cfg.output_dir.empty()) throw deepgmm::InvalidArgument("run: --out is required");
  cfg.validate();
  deepgmm::ensure_writable_dir(cfg.output_dir);

  const deepgmm::ExperimentOutcome outcome = deepgmm::run_experiment(cfg);
  deepgmm::emit_report(outcome.results, outcome.curves, cfg.output_dir, &cfg);
  for (const auto& row : deepgmm::summarize(outcome.results)) {
    std::printf("%-16s %-12s ok=%d/%d  mse=%.6f +- %.6f\n", row.scenario.c_str(),
                row.method.c_str(), row.n_ok, row.n_runs, row.mean, row.std_error);
  }
  const bool any_ok = std::any_of(outcome.results.begin(), outcome.results.end(),
                                  [](const auto& r) { return r.status == deepgmm::RunStatus::ok; });
  return any_ok ? kExitOk : kExitAllDiverged;
}

struct HyperArgs {
  std::string scenario;
  std::string grid;
  std::string out;
  std::uint64_t seed = 1;
  long n = 2000;
};

int cmd_hypersearch(const HyperArgs& a) {
  deepgmm::ExperimentConfig cfg;
  deepgmm::apply_scenario_name(a.scenario, cfg);
  cfg.scenario.n = a.n;
  const nlohmann::json j = read_json(a.grid);
  const nlohmann::json& entries = j.is_array() ? j : j.at("hyper_grid");
  cfg.hyper_grid.clear();
  for (const auto& e : entries) cfg.hyper_grid.push_back(deepgmm::game_config_from_json(e));
  if (cfg.hyper_grid.empty()) throw deepgmm::InvalidArgument("hypersearch: empty grid");
  deepgmm::ensure_writable_dir(a.out);

  const deepgmm::Splits s = deepgmm::prepare_data(cfg, a.seed);
  const auto grid = deepgmm::detail::seeded_grid(cfg.hyper_grid, a.seed, s.train.x.cols(),
                                                 s.train.z.cols());
  deepgmm::HyperSearchResult hs = [&] {
    try {
      return deepgmm::hyperparameter_search(s.train, s.val, grid);
    } catch (const deepgmm::NonFiniteError&) {
      return deepgmm::HyperSearchResult(s.val.size());
    }
  }();
  if (hs.scores.empty()) {
    std::fprintf(stderr, "hypersearch: every run diverged\n");
    return kExitAllDiverged;
  }
  namespace fs = std::filesystem;
  {
    std::ofstream f(fs::path(a.out) / "hypersearch.csv");
    if (!f) throw deepgmm::IoError("cannot write hypersearch.csv");
    f << "config_id,status,min_psi_hat\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
      f << '"' << grid[i].id() << "\"," << (hs.scores[i] ? "ok" : "diverged") << ','
        << (hs.scores[i] ? deepgmm::detail::format_full(*hs.scores[i]) : std::string()) << '\n';
    }
  }
  hs.pool.save_csv((fs::path(a.out) / "pool.csv").string());
  const double test_mse = deepgmm::mse(deepgmm::forward(hs.theta, s.test.x), s.test);
  {
    std::ofstream f(fs::path(a.out) / "winner.json");
    if (!f) throw deepgmm::IoError("cannot write winner.json");
    nlohmann::json w = {{"config", deepgmm::to_json(hs.winner_config)},
                        {"config_id", hs.winner_config.id()},
                        {"epoch", hs.selection.epoch},
                        {"min_psi_hat", hs.selection.value},
                        {"test_mse", test_mse}};
    f << w.dump(2) << '\n';
  }
  std::printf("winner %s epoch=%d psi_hat=%.6g test_mse=%.6f\n", hs.winner_config.id().c_str(),
              hs.selection.epoch, hs.selection.value, test_mse);
  return kExitOk;
}

int cmd_verify(const std::string& suite) {
  const deepgmm::SuiteReport report = deepgmm::run_suite(suite);
  deepgmm::print_report(std::cout, suite, report);
  return deepgmm::all_passed(report) ? kExitOk : kExitPropertyFailure;
}

struct ExportArgs {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string out;
  std::string split = "train";
  long n = 2000;
  bool standardize = false;
};

int cmd_export(const ExportArgs& a) {
  deepgmm::ExperimentConfig cfg;
  deepgmm::apply_scenario_name(a.scenario, cfg);
  cfg.scenario.n = a.n;
  const deepgmm::Splits s = deepgmm::prepare_data(cfg, a.seed, a.standardize);
  const deepgmm::Dataset& d = a.split == "val" ? s.val : a.split == "test" ? s.test : s.train;
  deepgmm::write_dataset_csv(d, a.out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep generalized method of moments for instrumental variable regression"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Benchmark methods over seeds and write reports");
  run->add_option("--scenario", run_args.scenario, "sin, step, abs, linear, or <g0>_embed<dim>");
  run->add_option("--methods", run_args.methods,
                  "Comma-separated subset of deepgmm,directnn,vanilla2sls,poly2sls,gmm_nn or 'all'");
  run->add_option("--seeds", run_args.seeds, "Run seeds 1..k")->check(CLI::PositiveNumber);
  run->add_option("--out", run_args.out, "Output directory");
  run->add_option("--n", run_args.n, "Samples per split")->check(CLI::PositiveNumber);
  run->add_option("--epochs", run_args.epochs, "Game epochs per grid entry")
      ->check(CLI::PositiveNumber);
  run->add_option("--config", run_args.config, "ExperimentConfig JSON; flags override it");

  HyperArgs hyper_args;
  auto* hyper = app.add_subcommand("hypersearch", "Select a game configuration on one seed");
  hyper->add_option("--scenario", hyper_args.scenario)->required();
  hyper->add_option("--grid", hyper_args.grid, "JSON list of GameConfig objects")->required();
  hyper->add_option("--out", hyper_args.out)->required();
  hyper->add_option("--seed", hyper_args.seed);
  hyper->add_option("--n", hyper_args.n)->check(CLI::PositiveNumber);

  std::string suite;
  auto* verify = app.add_subcommand("verify", "Run a randomized property suite");
  verify->add_option("--suite", suite)
      ->required()
      ->check(CLI::IsMember({"gradients", "lemma1", "appendixC", "optim", "generators"}));

  ExportArgs export_args;
  auto* exp = app.add_subcommand("export-data", "Write one scenario split as CSV");
  exp->add_option("--scenario", export_args.scenario)->required();
  exp->add_option("--seed", export_args.seed)->required();
  exp->add_option("--out", export_args.out)->required();
  exp->add_option("--split", export_args.split)->check(CLI::IsMember({"train", "val", "test"}));
  exp->add_option("--n", export_args.n)->check(CLI::PositiveNumber);
  exp->add_flag("--standardize", export_args.standardize, "Apply train-split Y standardization");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_args, *run);
    if (*hyper) return cmd_hypersearch(hyper_args);
    if (*verify) return cmd_verify(suite);
    if (*exp) return cmd_export(export_args);
  } catch (const deepgmm::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const deepgmm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitPropertyFailure;
  }
  return kExitOk;
}
