#include <doctest.h>

#include <filesystem>
#include <string>

#include "acceptance.hpp"
#include "mmvlab/scenario_io.hpp"

using namespace mmvlab;
using nlohmann::json;

namespace {

const std::filesystem::path kPresets = MMVLAB_PRESET_DIR;

json minimal() {
  return json::parse(R"({
    "x": 1.0, "theta": 1.0, "grid": {"horizon": 1.0, "steps": 10},
    "model": {"tier": "deterministic", "a0": 0.03, "a1": 0.0,
              "b0": [0.1], "b1": [0.0], "c0": [0.0], "c1": [0.0], "d0": [[0.2]]}
  })");
}

std::string pointer_of(const json& doc) {
  try {
    parse_scenario(doc);
  } catch (const ConfigError& e) {
    return e.pointer();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal scenario parses") {
  const ScenarioConfig cfg = parse_scenario(minimal());
  CHECK(cfg.grid.steps() == 10);
  CHECK(cfg.model.tier() == Tier::Deterministic);
  CHECK(cfg.model.evaluate(0.0, FeatureState{}).a == 0.03);
}

TEST_CASE("schema errors name the offending field") {
  json doc = minimal();
  doc.erase("theta");
  CHECK(pointer_of(doc) == "/theta");
  doc = minimal();
  doc["theta"] = "one";
  CHECK(pointer_of(doc) == "/theta");
  doc = minimal();
  doc["model"]["tier"] = "quantum";
  CHECK(pointer_of(doc) == "/model/tier");
  doc = minimal();
  doc["market"] = json::object();
  CHECK(!pointer_of(doc).empty());
  doc = minimal();
  doc["grid"].erase("steps");
  CHECK(pointer_of(doc) == "/grid/steps");
}

TEST_CASE("presets match the programmatic scenarios") {
  const ScenarioConfig c = load_scenario(kPresets / "portfolio_const.json");
  CHECK(scenario_to_json(c) == scenario_to_json(acceptance::constant_portfolio(100000, 7, 250)));
  const ScenarioConfig v = load_scenario(kPresets / "portfolio_vasicek.json");
  CHECK(scenario_to_json(v) == scenario_to_json(acceptance::vasicek_portfolio(100000, 11, 100)));
}

TEST_CASE("every preset validates and round-trips") {
  for (const char* name : {"portfolio_const.json", "portfolio_vasicek.json", "reinsurance_discrete.json",
                           "reinsurance_lognormal.json"}) {
    INFO(name);
    const ScenarioConfig cfg = load_scenario(kPresets / name);
    CHECK(validate_scenario(cfg).ok());
    const json doc = scenario_to_json(cfg);
    CHECK(scenario_to_json(parse_scenario(doc)) == doc);
  }
}

TEST_CASE("missing file") {
  CHECK_THROWS_AS(load_scenario(kPresets / "no_such_file.json"), ConfigError);
}
