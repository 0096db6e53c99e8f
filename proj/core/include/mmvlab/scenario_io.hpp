#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "mmvlab/model.hpp"

namespace mmvlab {

/// Parses a scenario document. Either "model" (generic coefficients) or
/// "market" (r, mu, sigma) must be present. Schema violations throw
/// ConfigError naming the field as a JSON pointer, e.g. "/theta".
ScenarioConfig parse_scenario(const nlohmann::json& doc);
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Inverse of parse_scenario for scenarios built from specs (not from a
/// custom coefficient function).
nlohmann::json scenario_to_json(const ScenarioConfig& cfg);

}  // namespace mmvlab
