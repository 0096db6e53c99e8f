#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmvlab/model.hpp"

namespace mmvlab::acceptance {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  double seconds = 0.0;
  double budget_seconds = 0.0;
  std::vector<std::string> checks;  // one line per sub-check, prefixed PASS/FAIL
  nlohmann::json data;
};

struct SuiteOptions {
  std::size_t mc_paths = 100000;        // criteria 2, 3, 5
  std::size_t reinsurance_paths = 20000;
  std::size_t conservation_paths = 2000;
  std::uint64_t seed = 7;
  bool enforce_runtime = true;
};

/// Scenario (1): r = 0.03, mu = 0.1, sigma = 0.2, T = 1, x = 1, theta = 1.
ScenarioConfig constant_portfolio(std::size_t n_paths, std::uint64_t seed, int steps = 250);
/// Vasicek rate with kappa 0.8, mean 0.04, vol (0.015, 0), f0 0.03 and two assets.
ScenarioConfig vasicek_portfolio(std::size_t n_paths, std::uint64_t seed, int steps = 100);
/// mu = 0, r = 0.03, one claim size 1 (m2 = 1), lambda = 1, given loading b.
ScenarioConfig flat_reinsurance(double b, std::size_t n_paths, std::uint64_t seed, int steps = 250);
/// Scenario (1) with a claim model of loading b attached.
ScenarioConfig constant_reinsurance(double b, std::size_t n_paths, std::uint64_t seed, int steps = 250);

CriterionResult closed_form_value(const SuiteOptions& opt);
CriterionResult empirical_mv(const SuiteOptions& opt);
CriterionResult saddle(const SuiteOptions& opt);
CriterionResult conservation(const SuiteOptions& opt);
CriterionResult vasicek_oracle(const SuiteOptions& opt);
CriterionResult duality_chain(const SuiteOptions& opt);
CriterionResult reinsurance(const SuiteOptions& opt);
CriterionResult invariants(const SuiteOptions& opt);

/// All eight criteria in order. `on_result` is called after each one.
std::vector<CriterionResult> run_all(const SuiteOptions& opt,
                                     const std::function<void(const CriterionResult&)>& on_result = {});

/// "[PASS] criterion 3: saddle verification (12.3 s)".
std::string summary_line(const CriterionResult& r);

}  // namespace mmvlab::acceptance
