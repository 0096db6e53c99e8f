#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kBinary = MMVLAB_CLI_PATH;
const fs::path kPresets = MMVLAB_PRESET_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mmvlab-cli-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args, const fs::path& log = {}) {
  std::string cmd = kBinary.string() + " " + args;
  cmd += log.empty() ? " > /dev/null 2>&1" : " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("solve reports the closed forms") {
  const fs::path out = scratch("solve");
  CHECK(run("solve --scenario " + (kPresets / "portfolio_const.json").string() + " --paths 1000 --out " +
            out.string()) == 0);
  const json r = json::parse(slurp(out / "solve.json"));
  CHECK(r["solve"]["h0"].get<double>() == doctest::Approx(std::exp(0.03)).epsilon(1e-12));
  CHECK(r["solve"]["y0"].get<double>() == doctest::Approx(std::exp(0.25)).epsilon(1e-12));
  CHECK(r["run"]["seed"] == 7);
  const json m = json::parse(slurp(out / "manifest.json"));
  CHECK(m["exit_code"] == 0);
  CHECK(m.contains("wall_clock_seconds"));
  CHECK(m["version"].get<std::string>().rfind("v", 0) == 0);
}

TEST_CASE("verify-saddle reports are byte-identical across runs") {
  const fs::path a = scratch("saddle-a"), b = scratch("saddle-b");
  const std::string args = "verify-saddle --scenario " + (kPresets / "portfolio_const.json").string() +
                           " --paths 100000 --seed 7 --steps 50 --out ";
  CHECK(run(args + a.string()) == 0);
  CHECK(run(args + b.string()) == 0);
  const std::string ra = slurp(a / "verify-saddle.json");
  CHECK(!ra.empty());
  CHECK(ra == slurp(b / "verify-saddle.json"));
}

TEST_CASE("reports do not depend on the thread count") {
  const fs::path a = scratch("threads-a"), b = scratch("threads-b");
  const std::string args = "duality --scenario " + (kPresets / "portfolio_vasicek.json").string() +
                           " --paths 4000 --steps 40 --out ";
  CHECK(std::system(("MMVLAB_THREADS=1 " + kBinary.string() + " " + args + a.string() + " > /dev/null 2>&1").c_str()) == 0);
  CHECK(std::system(("MMVLAB_THREADS=4 " + kBinary.string() + " " + args + b.string() + " > /dev/null 2>&1").c_str()) == 0);
  CHECK(slurp(a / "duality.json") == slurp(b / "duality.json"));
}

TEST_CASE("missing theta is a config error naming the field") {
  const fs::path out = scratch("config");
  json doc = json::parse(slurp(kPresets / "portfolio_const.json"));
  doc.erase("theta");
  std::ofstream(out / "bad.json") << doc.dump();
  CHECK(run("solve --scenario " + (out / "bad.json").string() + " --out " + out.string(), out / "log.txt") == 2);
  CHECK(slurp(out / "log.txt").find("/theta") != std::string::npos);
  const json m = json::parse(slurp(out / "manifest.json"));
  CHECK(m["exit_code"] == 2);
  CHECK(m["error"].get<std::string>().find("/theta") != std::string::npos);
}

TEST_CASE("command-line misuse is a config error") {
  CHECK(run("solve") == 2);
  CHECK(run("no-such-command") == 2);
  CHECK(run("solve --scenario /no/such/file.json") == 2);
}

TEST_CASE("resource limit exit code") {
  const fs::path out = scratch("resource");
  CHECK(run("solve --scenario " + (kPresets / "portfolio_const.json").string() +
            " --paths 100000000 --steps 1000 --out " + out.string()) == 4);
}

TEST_CASE("dumps") {
  const fs::path out = scratch("dumps");
  CHECK(run("reinsurance --scenario " + (kPresets / "reinsurance_discrete.json").string() +
            " --paths 3000 --steps 50 --dump-paths --dump-bsde --out " + out.string()) == 0);
  CHECK(fs::exists(out / "reinsurance.json"));
  CHECK(slurp(out / "paths.csv").rfind("path,k,t,X,Lambda", 0) == 0);
  CHECK(slurp(out / "bsde.csv").rfind("k,t,h", 0) == 0);
}
