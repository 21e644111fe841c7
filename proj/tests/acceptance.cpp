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

// Acceptance checks. One PASS/FAIL line per criterion, then INFO lines for
// reference figures that do not gate. Exit status 1 if any criterion fails.
//
// Reports for every benchmark run land in ./acceptance_out/<scenario>/.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "deepgmm/harness.hpp"
#include "deepgmm/verify.hpp"

#ifndef DEEPGMM_CLI_PATH
#error "DEEPGMM_CLI_PATH must point at the command-line binary"
#endif

namespace {

using namespace deepgmm;
namespace fs = std::filesystem;

// Pinned tolerances.
constexpr double kDeepGmmMax[] = {0.06, 0.05, 0.08, 0.05};  // sin, step, abs, linear
constexpr double kDirectNnRatio = 3.0;
constexpr double kVanillaLinearMax = 0.01;
constexpr double kVanillaAbsMin = 0.15;
constexpr double kSpanSupTol = 1e-10;
constexpr double kSpanSupSeconds = 5.0;
constexpr double kUnitBallTol = 1e-12;
constexpr double kGradientTol = 1e-4;
constexpr int kBilinearSteps = 5000;
constexpr double kGmmNnSinMax = 0.15;
constexpr double kSlopeTol = 0.05;
constexpr double kHighDimRatio = 1.5;
constexpr Index kHighDim = 64;
const std::vector<std::uint64_t> kSeeds = {1, 2, 3, 4, 5};

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail) {
  std::printf("%s  %s  %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void info(const std::string& name, const std::string& detail) {
  std::printf("INFO  %s  %s\n", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// Mean MSE per method; a method with any diverged seed maps to +inf.
using Means = std::map<std::string, double>;

Means run_benchmark(ExperimentConfig cfg, const std::vector<Method>& methods) {
  cfg.methods = methods;
  cfg.seeds = kSeeds;
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentOutcome out = run_experiment(cfg);
  const std::string name = scenario_name(cfg);
  emit_report(out.results, out.curves, (fs::path("acceptance_out") / name).string(), &cfg);
  Means means;
  for (const auto& row : summarize(out.results)) {
    means[row.method] = row.n_ok == row.n_runs ? row.mean : INFINITY;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream os;
  os << name << " seeds=1..5 (" << fmt(secs) << " s):";
  for (const auto& [m, v] : means) os << ' ' << m << '=' << fmt(v);
  info("benchmark", os.str());
  return means;
}

// Passed properties must also be pinned at the tolerance stated here, so a
// loosened suite cannot pass silently.
bool suite_ok(const SuiteReport& r, const std::map<std::string, double>& pinned,
              std::string& detail) {
  bool ok = all_passed(r);
  std::ostringstream os;
  for (const auto& p : r) {
    os << p.name << "=" << p.worst << (p.passed ? "" : "(!)") << ' ';
    auto it = pinned.find(p.name);
    if (it != pinned.end() && !(p.worst <= it->second)) ok = false;
  }
  detail = os.str();
  return ok;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace

int main() {
  const char* names[] = {"sin", "step", "abs", "linear"};
  const std::vector<Method> all(std::begin(kAllMethods), std::end(kAllMethods));
  std::map<std::string, Means> low;
  for (const char* n : names) {
    ExperimentConfig cfg;
    apply_scenario_name(n, cfg);
    low[n] = run_benchmark(cfg, all);
  }

  // 1. DeepGMM mean test MSE per scenario.
  {
    bool ok = true;
    std::ostringstream os;
    for (int i = 0; i < 4; ++i) {
      const double v = low[names[i]]["deepgmm"];
      ok = ok && v <= kDeepGmmMax[i];
      os << names[i] << '=' << fmt(v) << "(<=" << kDeepGmmMax[i] << ") ";
    }
    report(ok, "criterion_1_deepgmm_mse", os.str());
  }

  // 2. Baseline ordering.
  {
    bool ok = true;
    std::ostringstream os;
    for (const char* n : {"sin", "step", "abs"}) {
      const double ratio = low[n]["directnn"] / low[n]["deepgmm"];
      ok = ok && ratio >= kDirectNnRatio;
      os << n << ":directnn/deepgmm=" << fmt(ratio) << "(>=" << kDirectNnRatio << ") ";
    }
    const double lin = low["linear"]["vanilla2sls"], abs = low["abs"]["vanilla2sls"];
    ok = ok && lin <= kVanillaLinearMax && abs >= kVanillaAbsMin;
    os << "vanilla2sls:linear=" << fmt(lin) << "(<=" << kVanillaLinearMax << ") abs=" << fmt(abs)
       << "(>=" << kVanillaAbsMin << ")";
    report(ok, "criterion_2_baseline_ordering", os.str());
  }

  // 3-6. Property suites.
  {
    std::string d;
    const bool ok = suite_ok(verify_lemma1(200),
                             {{"span_sup_equals_owgmm", kSpanSupTol},
                              {"functional_at_maximizer", kSpanSupTol},
                              {"runtime_seconds", kSpanSupSeconds}},
                             d);
    report(ok, "criterion_3_span_sup_equals_owgmm", d);
  }
  {
    std::string d;
    const bool ok = suite_ok(verify_appendix_c(20, 10000),
                             {{"closed_form_mean_square", kUnitBallTol},
                              {"dominates_random_unit_critics", kUnitBallTol}},
                             d);
    report(ok, "criterion_4_unit_ball_sup", d);
  }
  {
    std::string d;
    const bool ok = suite_ok(verify_gradients(100),
                             {{"netcore_grad_params", kGradientTol},
                              {"game_theta_gradient", kGradientTol},
                              {"game_tau_gradient", kGradientTol},
                              {"stop_gradient_theta_tilde", 0.0}},
                             d);
    report(ok, "criterion_5_gradients", d);
  }
  {
    const double start = std::sqrt(2.0);
    const double oadam = bilinear_final_radius(OptimizerConfig::oadam(1e-2), kBilinearSteps);
    const double sgd = bilinear_final_radius(OptimizerConfig::sgd(1e-2), kBilinearSteps);
    report(oadam < start && sgd >= start, "criterion_6_optimism",
           "start_radius=" + fmt(start) + " oadam=" + fmt(oadam) + " sgd=" + fmt(sgd) +
               " steps=" + std::to_string(kBilinearSteps));
  }

  // 7. GMM+NN with the RBF basis: sin MSE, and the slope of a linear model
  // class on the linear scenario.
  {
    const double sin_mse = low["sin"]["gmm_nn"];
    double slope_sum = 0.0, worst = 0.0;
    ExperimentConfig cfg;
    apply_scenario_name("linear", cfg);
    std::ostringstream per_seed;
    for (std::uint64_t seed : kSeeds) {
      const Splits s = prepare_data(cfg, seed);
      const MomentBasis basis = rbf_basis(s.train.z, 10, derive_seed(seed, 0x7bf));
      const MlpSpec linear_class{1, {}, 0.1, derive_seed(seed, 0x6e6e)};
      const GmmNnResult r = fit_gmm_nn(s.train, basis, linear_class, GmmNnOptions{});
      // Weight in standardized units times the label scale is the raw slope.
      const double slope = r.params.theta[0] * s.train.y_transform.scale;
      slope_sum += slope;
      worst = std::max(worst, std::abs(slope - 1.0));
      per_seed << fmt(slope) << ' ';
    }
    const double mean_slope = slope_sum / static_cast<double>(kSeeds.size());
    report(sin_mse <= kGmmNnSinMax && std::abs(mean_slope - 1.0) <= kSlopeTol,
           "criterion_7_gmm_nn",
           "sin_mse=" + fmt(sin_mse) + "(<=" + fmt(kGmmNnSinMax) + ") mean_slope=" +
               fmt(mean_slope) + "(|s-1|<=" + fmt(kSlopeTol) + ") per_seed=" + per_seed.str() +
               "max_dev=" + fmt(worst));
  }

  // 8. Two `run` invocations with one configuration give identical results.csv.
  {
    const fs::path base = fs::path("acceptance_out") / "determinism";
    fs::remove_all(base);
    bool ok = true;
    std::string failure;
    for (const char* sub : {"a", "b"}) {
      const std::string cmd = std::string(DEEPGMM_CLI_PATH) +
                              " run --scenario step --methods all --seeds 2 --n 300 --epochs 40"
                              " --out " + (base / sub).string() + " > /dev/null";
      const int rc = std::system(cmd.c_str());
      if (rc != 0) {
        ok = false;
        failure = "exit status " + std::to_string(rc) + " from: " + cmd;
      }
    }
    const std::string a = slurp(base / "a" / "results.csv");
    const std::string b = slurp(base / "b" / "results.csv");
    ok = ok && !a.empty() && a == b;
    report(ok, "criterion_8_determinism",
           failure.empty() ? "results.csv bytes=" + std::to_string(a.size()) +
                                 (a == b ? " identical" : " differ")
                           : failure);
  }

  // High-dimensional embedding: DeepGMM beats DirectNN.
  {
    ExperimentConfig cfg;
    apply_scenario_name("abs_embed" + std::to_string(kHighDim), cfg);
    cfg.hyper_grid = low_dim_grid(1, kHighDim);
    Means m = run_benchmark(cfg, {Method::deepgmm, Method::directnn});
    const double ratio = m["directnn"] / m["deepgmm"];
    report(ratio >= kHighDimRatio, "highdim_embed64_deepgmm_vs_directnn",
           "deepgmm=" + fmt(m["deepgmm"]) + " directnn=" + fmt(m["directnn"]) + " ratio=" +
               fmt(ratio) + "(>=" + fmt(kHighDimRatio) + ")");
  }

  // Reference figures that are not acceptance criteria.
  info("reference_poly2sls",
       "sin=" + fmt(low["sin"]["poly2sls"]) + " abs=" + fmt(low["abs"]["poly2sls"]) +
           " step=" + fmt(low["step"]["poly2sls"]) + " linear=" + fmt(low["linear"]["poly2sls"]) +
           " (example targets sin<=0.08, abs<=0.08)");
  info("reference_directnn",
       "sin=" + fmt(low["sin"]["directnn"]) + " step=" + fmt(low["step"]["directnn"]) +
           " abs=" + fmt(low["abs"]["directnn"]) + " (example targets sin>=0.20, abs>=0.15)");
  info("reference_gmm_nn", "step=" + fmt(low["step"]["gmm_nn"]) + " abs=" +
                               fmt(low["abs"]["gmm_nn"]) + " linear=" +
                               fmt(low["linear"]["gmm_nn"]));

  std::printf("SUMMARY  %d criterion failure(s)\n", failures);
  return failures ? 1 : 0;
}
