#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "beables/errors.hpp"
#include "beables/propagators.hpp"
#include "beables/runner.hpp"

namespace {

// exit codes
constexpr int kOk = 0;
constexpr int kCriterionFailed = 1;
constexpr int kBadInput = 2;

int run_command(const std::string& config_path, const std::optional<std::string>& out,
                const std::optional<unsigned>& threads, const std::optional<std::uint64_t>& seed) {
  beables::ScenarioConfig config = beables::ScenarioConfig::load(config_path);
  beables::RunOverrides overrides{out, threads, seed};
  const beables::RunReport report = beables::run_experiment(config, overrides);
  const std::string dir = beables::resolve_output_dir(config, overrides);
  const std::string path = beables::emit_report(report, dir);
  for (const auto& c : report.criteria)
    std::cout << (c.passed ? "PASS " : "FAIL ") << report.scenario << '.' << c.name << "  " << c.detail << '\n';
  std::cout << "report: " << path << "  hash " << report.content_hash() << "  (" << report.wall_time << " s)\n";
  return report.passed() ? kOk : kCriterionFailed;
}

int tabulate_omega(double boson_mass, double cutoff_mass, double coupling, double rmin, double rmax,
                   std::size_t points, std::optional<double> time, const std::string& out_path) {
  beables::PropagatorSpec spec;
  spec.boson_mass = boson_mass;
  spec.cutoff_mass = cutoff_mass;
  spec.coupling = coupling;
  spec.validate();
  beables::require(rmin > 0.0 && rmax > rmin, "need 0 < rmin < rmax");
  beables::require(points >= 2, "need at least two points");
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) beables::fail(beables::ErrorKind::IoError, "cannot write " + out_path);
  }
  std::ostream& out = out_path.empty() ? std::cout : file;
  out.precision(17);
  out << "r,omega_inf" << (time ? ",omega_t,G" : "") << '\n';
  const double g0 = time ? beables::regulated_g(spec, 0.0, *time) : 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double r = rmin * std::pow(rmax / rmin, static_cast<double>(i) / static_cast<double>(points - 1));
    out << r << ',' << beables::omega_infinity(spec, r);
    if (time) {
      const double g = beables::regulated_g(spec, r, *time);
      out << ',' << 0.5 * coupling * coupling * (g - g0) << ',' << g;
    }
    out << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collapse and beable simulations"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a scenario from a JSON config");
  std::string config_path;
  std::optional<std::string> out;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
  run->add_option("config", config_path, "Scenario config")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory (overrides BEABLES_OUT_DIR and the config)");
  run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Master seed override");

  auto* tab = app.add_subcommand("tabulate-omega", "Tabulate the decoherence exponent against distance");
  double mb = 1.0, lambda = 10.0, g = 1.0, rmin = 0.01, rmax = 20.0;
  std::size_t points = 25;
  std::optional<double> time;
  std::string tab_out;
  tab->add_option("--mb", mb, "Boson mass")->capture_default_str();
  tab->add_option("--lambda", lambda, "Cutoff mass")->capture_default_str();
  tab->add_option("--g", g, "Coupling")->capture_default_str();
  tab->add_option("--rmin", rmin, "Smallest distance")->capture_default_str();
  tab->add_option("--rmax", rmax, "Largest distance")->capture_default_str();
  tab->add_option("--points", points, "Number of distances")->capture_default_str();
  tab->add_option("--time", time, "Also evaluate the finite-time exponent at this time");
  tab->add_option("--out", tab_out, "CSV path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadInput;
  }

  try {
    if (*run) return run_command(config_path, out, threads, seed);
    return tabulate_omega(mb, lambda, g, rmin, rmax, points, time, tab_out);
  } catch (const beables::Error& e) {
    std::cerr << "error [" << beables::to_string(e.kind()) << "]: " << e.what() << '\n';
    switch (e.kind()) {
      case beables::ErrorKind::ConfigError:
      case beables::ErrorKind::InvalidParameter:
      case beables::ErrorKind::IoError:
        return kBadInput;
      default:
        return kCriterionFailed;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCriterionFailed;
  }
}
