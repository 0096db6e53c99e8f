#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "mmvlab/applications.hpp"
#include "mmvlab/bsde.hpp"
#include "mmvlab/control.hpp"
#include "mmvlab/duality.hpp"

namespace mmvlab {

/// Identity of a run, embedded in every report. Nothing here depends on
/// the clock, so identical runs produce byte-identical reports.
struct RunStamp {
  std::string version;
  std::string subcommand;
  std::uint64_t seed = 0;
  std::size_t n_paths = 0;
  int steps = 0;
};

nlohmann::json to_json(const RunStamp& s);
nlohmann::json to_json(const ResidualStats& r);
nlohmann::json to_json(const BsdeDiagnostics& d);
nlohmann::json to_json(const OracleComparison& o);
nlohmann::json to_json(const SaddleReport& r);
nlohmann::json to_json(const DualityReport& r);
nlohmann::json to_json(const ConservationStudy& c);
nlohmann::json to_json(const ApplicationReport& r);

/// h0, Y0, value, diagnostics and residuals of a solved scenario.
nlohmann::json solve_summary(const BsdeSolution& sol, const CoefficientModel& model, double x,
                             double theta);

/// Writes `doc` as indented JSON with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace mmvlab
