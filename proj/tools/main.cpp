#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "acceptance.hpp"
#include "mmvlab/applications.hpp"
#include "mmvlab/bsde.hpp"
#include "mmvlab/control.hpp"
#include "mmvlab/duality.hpp"
#include "mmvlab/error.hpp"
#include "mmvlab/paths.hpp"
#include "mmvlab/report_io.hpp"
#include "mmvlab/scenario_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kPass = 0, kGateFailure = 3, kConfig = 2, kNumerical = 3, kResource = 4 };

struct Manifest {
  std::string subcommand;
  std::string scenario;
  std::optional<std::size_t> paths;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  std::string out = "mmvlab-out";
  bool antithetic = false;
  bool dump_paths = false;
  bool dump_bsde = false;
  bool cross_check = false;
};

int exit_code(mmvlab::ErrorCode code) {
  using mmvlab::ErrorCode;
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::Degenerate: return kConfig;
    case ErrorCode::ResourceLimit: return kResource;
    default: return kNumerical;
  }
}

mmvlab::ScenarioConfig load(const Manifest& m) {
  if (m.scenario.empty()) throw mmvlab::ConfigError("/", "--scenario is required");
  mmvlab::ScenarioConfig cfg = mmvlab::load_scenario(m.scenario);
  if (m.paths) {
    if (*m.paths < 1) throw mmvlab::ConfigError("/n_paths", "--paths must be positive");
    cfg.n_paths = *m.paths;
  }
  if (m.steps) cfg.grid = mmvlab::TimeGrid(cfg.grid.horizon(), *m.steps);
  if (m.seed) cfg.seed = *m.seed;
  if (m.antithetic) cfg.antithetic = true;
  const mmvlab::ValidationReport v = mmvlab::validate_scenario(cfg);
  if (!v.ok()) {
    const auto& first = v.violations.front();
    throw mmvlab::ConfigError(first.location, first.rule + ": " + first.detail);
  }
  return cfg;
}

json stamp(const Manifest& m, const mmvlab::ScenarioConfig* cfg) {
  mmvlab::RunStamp s;
  s.version = MMVLAB_VERSION;
  s.subcommand = m.subcommand;
  if (cfg) {
    s.seed = cfg->seed;
    s.n_paths = cfg->n_paths;
    s.steps = cfg->grid.steps();
  }
  return mmvlab::to_json(s);
}

void dump_paths(const Manifest& m, const mmvlab::RobustSetup& setup, const mmvlab::PathBundle& bundle) {
  const mmvlab::PathBundle small = bundle.with_paths(std::min<std::size_t>(bundle.n_paths(), 100));
  const mmvlab::StatePath st = mmvlab::simulate_optimal(setup, small, true);
  std::ofstream out(fs::path(m.out) / "paths.csv");
  mmvlab::write_path_dump(out, st, small.n_paths());
}

void dump_bsde(const Manifest& m, const mmvlab::BsdeSolution& sol, const mmvlab::ScenarioConfig& cfg) {
  std::ofstream out(fs::path(m.out) / "bsde.csv");
  mmvlab::write_bsde_dump(out, sol, cfg.model);
}

bool bsde_ok(const mmvlab::BsdeSolution& sol) {
  return sol.h_residual.ok && sol.y_residual.ok && sol.diagnostics.y_ge_one;
}

/// Runs one subcommand, writes its report and returns whether every gate passed.
bool run(const Manifest& m, json& report) {
  using namespace mmvlab;
  if (m.subcommand == "selftest") {
    acceptance::SuiteOptions so;
    if (m.paths) so.mc_paths = *m.paths;
    if (m.seed) so.seed = *m.seed;
    json crit = json::array();
    bool all = true;
    acceptance::run_all(so, [&](const acceptance::CriterionResult& r) {
      std::cout << acceptance::summary_line(r) << std::endl;
      for (const auto& c : r.checks) std::cout << "    " << c << '\n';
      crit.push_back({{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"checks", r.checks},
                      {"data", r.data}});
      all = all && r.pass;
    });
    report = {{"run", stamp(m, nullptr)}, {"criteria", crit}, {"pass", all}};
    write_json(fs::path(m.out) / "selftest.json", report);
    return all;
  }

  const ScenarioConfig cfg = load(m);
  report["run"] = stamp(m, &cfg);
  const JumpModel* jm = cfg.jump ? &*cfg.jump : nullptr;

  if (m.subcommand == "portfolio" || m.subcommand == "reinsurance") {
    RunOptions ro;
    ro.saddle.cross_check = m.cross_check;
    const ApplicationReport rep =
        m.subcommand == "portfolio" ? run_portfolio(cfg, ro) : run_reinsurance(cfg, ro);
    report["report"] = to_json(rep);
    if (m.dump_paths || m.dump_bsde) {
      const PathBundle bundle = generate_paths(cfg);
      const BsdeSolution sol = solve_scenario(cfg, bundle);
      if (m.dump_bsde) dump_bsde(m, sol, cfg);
      if (m.dump_paths) dump_paths(m, RobustSetup{&cfg.model, &sol, cfg.x, cfg.theta, jm}, bundle);
    }
    write_json(fs::path(m.out) / (m.subcommand + ".json"), report);
    return rep.pass;
  }

  const PathBundle bundle = generate_paths(cfg);
  const BsdeSolution sol = solve_scenario(cfg, bundle);
  const RobustSetup setup{&cfg.model, &sol, cfg.x, cfg.theta, jm};
  report["solve"] = solve_summary(sol, cfg.model, cfg.x, cfg.theta);
  if (m.dump_bsde) dump_bsde(m, sol, cfg);
  if (m.dump_paths) dump_paths(m, setup, bundle);
  bool pass = bsde_ok(sol);

  if (m.subcommand == "verify-saddle") {
    SaddleOptions so;
    so.cross_check = m.cross_check;
    if (jm) {
      so.density_probes = reinsurance_density_probes(cfg.model.dim(), so.probe_seed, cfg.grid.horizon());
      so.control_probes = reinsurance_control_probes(cfg.model.dim(), so.probe_seed, cfg.grid.horizon());
    }
    const SaddleReport rep = verify_saddle(setup, bundle, so);
    report["saddle"] = to_json(rep);
    pass = pass && rep.pass;
  } else if (m.subcommand == "duality") {
    const DualityReport rep = duality_report(setup, bundle);
    report["duality"] = to_json(rep);
    pass = pass && rep.pass;
  }
  write_json(fs::path(m.out) / (m.subcommand == "solve" ? "solve.json" : m.subcommand + ".json"),
             report);
  return pass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust monotone mean-variance control lab"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string(MMVLAB_VERSION));
  Manifest m;
  std::size_t paths = 0;
  int steps = 0;
  std::uint64_t seed = 0;

  const char* names[][2] = {
      {"solve", "Solve both BSDEs and report h0, Y0 and the optimal value"},
      {"verify-saddle", "Monte Carlo verification of the saddle-point property"},
      {"duality", "Mean-variance dual chain and empirical MV evaluation"},
      {"portfolio", "Portfolio-selection application (combined report)"},
      {"reinsurance", "Investment-reinsurance application (combined report)"},
      {"selftest", "Run the acceptance suite"}};
  for (const auto& [name, help] : names) {
    CLI::App* sub = app.add_subcommand(name, help);
    if (std::string(name) != "selftest")
      sub->add_option("--scenario", m.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    sub->add_option("--paths", paths, "Override the number of paths");
    sub->add_option("--steps", steps, "Override the number of grid steps");
    sub->add_option("--seed", seed, "Override the seed");
    sub->add_option("--out", m.out, "Output directory")->capture_default_str();
    sub->add_flag("--antithetic", m.antithetic, "Antithetic Brownian increments");
    sub->add_flag("--dump-paths", m.dump_paths, "Write paths.csv for the first 100 paths");
    sub->add_flag("--dump-bsde", m.dump_bsde, "Write bsde.csv along the reference features");
    sub->add_flag("--cross-check-measure", m.cross_check,
                  "Re-simulate density probes under the shifted drift");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfig;
  }
  m.subcommand = app.get_subcommands().front()->get_name();
  const CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--paths")) m.paths = paths;
  if (sub->count("--steps")) m.steps = steps;
  if (sub->count("--seed")) m.seed = seed;

  const auto t0 = std::chrono::steady_clock::now();
  int rc = kPass;
  json report;
  std::string error;
  try {
    fs::create_directories(m.out);
    rc = run(m, report) ? kPass : kGateFailure;
  } catch (const mmvlab::Error& e) {
    error = e.what();
    rc = exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    error = e.what();
    rc = kResource;
  } catch (const std::bad_alloc&) {
    error = "out of memory";
    rc = kResource;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!error.empty()) std::cerr << "mmvlab: " << error << '\n';

  // Clock-dependent fields live in the manifest so reports stay byte-identical.
  json manifest = {{"version", MMVLAB_VERSION},
                   {"subcommand", m.subcommand},
                   {"scenario", m.scenario},
                   {"out", m.out},
                   {"toggles",
                    {{"antithetic", m.antithetic},
                     {"dump_paths", m.dump_paths},
                     {"dump_bsde", m.dump_bsde},
                     {"cross_check_measure", m.cross_check}}},
                   {"wall_clock_seconds", seconds},
                   {"exit_code", rc}};
  if (report.contains("run")) {
    manifest["seed"] = report["run"]["seed"];
    manifest["n_paths"] = report["run"]["n_paths"];
    manifest["steps"] = report["run"]["steps"];
  }
  if (!error.empty()) manifest["error"] = error;
  try {
    fs::create_directories(m.out);
    mmvlab::write_json(fs::path(m.out) / "manifest.json", manifest);
  } catch (const std::exception& e) {
    std::cerr << "mmvlab: cannot write manifest: " << e.what() << '\n';
    if (rc == kPass) rc = kResource;
  }
  if (m.subcommand != "selftest" && error.empty())
    std::cout << (rc == kPass ? "PASS" : "FAIL") << " " << m.subcommand << " -> " << m.out << '\n';
  return rc;
}
