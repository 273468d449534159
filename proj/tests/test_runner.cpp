#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "beables/errors.hpp"
#include "beables/propagators.hpp"
#include "beables/runner.hpp"
#include "doctest.h"

using namespace beables;
using nlohmann::json;

namespace {

std::string scratch(const std::string& name) {
  const char* base = std::getenv("BEABLES_TEST_TMP");
  const auto root = base ? std::filesystem::path(base) : std::filesystem::temp_directory_path() / "beables_runner";
  const auto dir = root / name;
  std::filesystem::remove_all(dir);
  return dir.string();
}

json base_config(const std::string& scenario) {
  return {{"schema_version", 1}, {"scenario", scenario}, {"seed", 1234}};
}

void expect_config_error(const json& j, const std::string& mention) {
  try {
    ScenarioConfig::from_json(j);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigError);
    CHECK(std::string(e.what()).find(mention) != std::string::npos);
  }
}

}  // namespace

TEST_CASE("config schema violations name the field") {
  json j = base_config("omega_table");
  j.erase("seed");
  expect_config_error(j, "seed");
  expect_config_error(base_config("nonsense"), "nonsense");
  json extra = base_config("omega_table");
  extra["colour"] = "red";
  expect_config_error(extra, "colour");
  json version = base_config("omega_table");
  version["schema_version"] = 7;
  expect_config_error(version, "schema_version");
  json param = base_config("omega_table");
  param["params"] = {{"cutoff", 3}};
  expect_config_error(param, "cutoff");
  json type = base_config("omega_table");
  type["params"] = {{"cutoff_mass", "big"}};
  expect_config_error(type, "cutoff_mass");
}

TEST_CASE("config hash covers physics and nothing else") {
  const ScenarioConfig a = ScenarioConfig::from_json(base_config("delta_metric"));
  json other = base_config("delta_metric");
  other["threads"] = 4;
  other["output"] = {{"dir", "elsewhere"}};
  CHECK(ScenarioConfig::from_json(other).hash() == a.hash());
  json seed = base_config("delta_metric");
  seed["seed"] = 1235;
  CHECK(ScenarioConfig::from_json(seed).hash() != a.hash());
  for (auto it = a.params.begin(); it != a.params.end(); ++it) {
    json changed = base_config("delta_metric");
    json value = it.value();
    if (value.is_number()) {
      value = value.get<double>() * 1.5 + 1.0;
    } else if (value.is_array()) {
      value.push_back(7.0);
    } else {
      continue;
    }
    changed["params"] = {{it.key(), value}};
    CHECK_MESSAGE(ScenarioConfig::from_json(changed).hash() != a.hash(), it.key());
  }
}

TEST_CASE("output directory precedence") {
  json j = base_config("omega_table");
  j["output"] = {{"dir", "from_config"}};
  const ScenarioConfig c = ScenarioConfig::from_json(j);
  ::unsetenv("BEABLES_OUT_DIR");
  CHECK(resolve_output_dir(c, {}) == "from_config");
  CHECK(resolve_output_dir(ScenarioConfig::from_json(base_config("omega_table")), {}) == "beables_out");
  ::setenv("BEABLES_OUT_DIR", "from_env", 1);
  CHECK(resolve_output_dir(c, {}) == "from_env");
  RunOverrides o;
  o.output_dir = "from_flag";
  CHECK(resolve_output_dir(c, o) == "from_flag");
  ::unsetenv("BEABLES_OUT_DIR");
}

TEST_CASE("omega table passes the propagator values through") {
  json j = base_config("omega_table");
  j["params"] = {{"points", 3}, {"time", 20.0}, {"rmin", 0.5}, {"rmax", 8.0}, {"cutoff_mass", 20.0}};
  const std::string dir = scratch("omega");
  RunOverrides o;
  o.output_dir = dir;
  const RunReport report = run_experiment(ScenarioConfig::from_json(j), o);
  CHECK(report.criteria.size() == 3);
  std::ifstream in(std::filesystem::path(dir) / "omega_table.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "r,omega_inf,omega_t,G");
  PropagatorSpec spec;
  spec.cutoff_mass = 20.0;
  int rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    REQUIRE(v.size() == 4);
    CHECK(v[1] == omega_infinity(spec, v[0]));
    CHECK(v[2] == doctest::Approx(omega_from_quadrature(spec, v[0], 20.0)).epsilon(1e-12));
    CHECK(v[3] == regulated_g(spec, v[0], 20.0));
    ++rows;
  }
  CHECK(rows == 3);
}

TEST_CASE("report round trip and CSV") {
  RunReport empty;
  empty.scenario = "omega_table";
  std::ostringstream csv;
  write_report_csv(csv, empty);
  CHECK(csv.str() == "name,passed,value,target,tolerance,standard_error\n");

  json j = base_config("quartic_reweight");
  j["params"] = {{"samples", 2000}};
  const std::string dir = scratch("quartic");
  RunOverrides o;
  o.output_dir = dir;
  const RunReport report = run_experiment(ScenarioConfig::from_json(j), o);
  const std::string path = emit_report(report, dir);
  std::ifstream in(path);
  const json parsed = json::parse(in);
  const RunReport back = RunReport::from_json(parsed);
  CHECK(back.to_json() == report.to_json());
  CHECK(back.content_hash() == report.content_hash());
  CHECK(std::filesystem::exists(std::filesystem::path(dir) / "report.csv"));
}

TEST_CASE("unwritable output is an io error") {
  RunReport r;
  r.scenario = "omega_table";
  try {
    emit_report(r, "/proc/beables/denied");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::IoError);
  }
}

TEST_CASE("runs are reproducible across thread counts") {
  json j = base_config("beable_stats");
  j["params"] = {{"samples", 3000}, {"checkpoint", false}};
  RunOverrides one, two;
  one.output_dir = scratch("det1");
  one.threads = 1;
  two.output_dir = scratch("det2");
  two.threads = 3;
  const RunReport a = run_experiment(ScenarioConfig::from_json(j), one);
  const RunReport b = run_experiment(ScenarioConfig::from_json(j), two);
  CHECK(a.content_hash() == b.content_hash());
  RunOverrides reseeded = one;
  reseeded.seed = 99;
  CHECK(run_experiment(ScenarioConfig::from_json(j), reseeded).content_hash() != a.content_hash());
}

TEST_CASE("born rule report carries the frequency table") {
  json j = base_config("born_rule");
  j["params"] = {{"samples", 500}, {"max_time", 20.0}, {"martingale_time", 1.0}};
  RunOverrides o;
  o.output_dir = scratch("born");
  o.threads = 2;
  const RunReport r = run_experiment(ScenarioConfig::from_json(j), o);
  CHECK(r.tables.contains("born_counts"));
  bool has_p = false;
  for (const auto& c : r.criteria) has_p = has_p || c.name == "born_chi_squared";
  CHECK(has_p);
}
