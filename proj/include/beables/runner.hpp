#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace beables {

inline constexpr int kConfigSchemaVersion = 1;

enum class ScenarioKind {
  CslUnraveling,
  BornRule,
  AmplificationCsl,
  NonmarkovUnraveling,
  BeableStats,
  OmegaTable,
  DeltaMetric,
  QuarticReweight,
};

const char* to_string(ScenarioKind kind);
ScenarioKind scenario_from_string(const std::string& name);

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::CslUnraveling;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string output_dir;
  nlohmann::json params = nlohmann::json::object();
  nlohmann::json raw;  // as parsed, after overrides

  // Throws ConfigError on schema violations. A master seed is mandatory.
  static ScenarioConfig from_json(const nlohmann::json& j);
  static ScenarioConfig load(const std::string& path);
  // Hash of everything that influences results (threads and output excluded).
  std::string hash() const;
};

struct CriterionResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  double standard_error = 0.0;
  std::string detail;
};

struct RunReport {
  std::string scenario;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<CriterionResult> criteria;
  nlohmann::json tables = nlohmann::json::object();
  std::vector<std::string> outputs;
  double wall_time = 0.0;

  bool passed() const;
  // Hash of the deterministic content (everything but wall time and paths).
  std::string content_hash() const;
  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);
};

// CSV columns: name, passed, value, target, tolerance, standard_error
void write_report_csv(std::ostream& out, const RunReport& report);

struct RunOverrides {
  std::optional<std::string> output_dir;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
};

// Output directory precedence: explicit override, BEABLES_OUT_DIR, config,
// then "beables_out".
std::string resolve_output_dir(const ScenarioConfig& config, const RunOverrides& overrides);

RunReport run_experiment(ScenarioConfig config, const RunOverrides& overrides = {});

// Writes report.json and report.csv, returns the JSON path.
std::string emit_report(const RunReport& report, const std::string& directory);

}  // namespace beables
