#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "beables/collapse_analysis.hpp"
#include "beables/errors.hpp"
#include "beables/gaussian_field.hpp"
#include "beables/hilbert.hpp"
#include "beables/propagators.hpp"
#include "beables/runner.hpp"

namespace py = pybind11;
using namespace beables;

namespace {

PropagatorSpec make_spec(double boson_mass, double cutoff_mass, double coupling) {
  PropagatorSpec spec;
  spec.boson_mass = boson_mass;
  spec.cutoff_mass = cutoff_mass;
  spec.coupling = coupling;
  spec.validate();
  return spec;
}

// samples as a (count, points) complex array
CMatrix stack(const std::vector<FieldSample>& samples, Eigen::Index points) {
  CMatrix out(static_cast<Eigen::Index>(samples.size()), points);
  for (std::size_t i = 0; i < samples.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = samples[i].values.transpose();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Collapse unravelings, Gaussian fields and regulated propagators";

  static py::exception<Error> base(m, "BeablesError");
  static py::exception<NotPsdError> not_psd(m, "NotPositiveSemidefiniteError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const NotPsdError& e) {
      py::set_error(not_psd, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def("bessel_k0", &bessel_k0, py::arg("x"));
  m.def("bessel_k1", &bessel_k1, py::arg("x"));

  m.def(
      "omega_infinity",
      [](double r, double boson_mass, double cutoff_mass, double coupling) {
        return omega_infinity(make_spec(boson_mass, cutoff_mass, coupling), r);
      },
      py::arg("r"), py::arg("boson_mass") = 1.0, py::arg("cutoff_mass") = 10.0, py::arg("coupling") = 1.0);
  m.def(
      "omega_from_quadrature",
      [](double r, double t, double boson_mass, double cutoff_mass, double coupling) {
        return omega_from_quadrature(make_spec(boson_mass, cutoff_mass, coupling), r, t);
      },
      py::arg("r"), py::arg("t"), py::arg("boson_mass") = 1.0, py::arg("cutoff_mass") = 10.0,
      py::arg("coupling") = 1.0);
  m.def(
      "cell_kernel",
      [](const std::vector<Point3>& sites, std::size_t n_steps, double cell, double boson_mass, double cutoff_mass,
         double coupling) {
        const CellKernel k = regulated_cell_kernel(make_spec(boson_mass, cutoff_mass, coupling), sites, n_steps, cell);
        return py::make_tuple(k.covariance, k.ordered);
      },
      py::arg("sites"), py::arg("n_steps"), py::arg("cell"), py::arg("boson_mass") = 1.0,
      py::arg("cutoff_mass") = 10.0, py::arg("coupling") = 1.0,
      "Cell-integrated (covariance, ordered) kernels, time-major index.");

  m.def(
      "trace_distance", [](const CMatrix& a, const CMatrix& b) { return trace_distance(a, b); }, py::arg("a"),
      py::arg("b"));

  m.def(
      "sample_fields",
      [](const CMatrix& gamma, const CMatrix& relation, std::uint64_t seed, std::size_t count, unsigned threads) {
        const KernelPair pair{gamma, relation};
        const SamplingFactor factor = factor_kernel(pair);
        return stack(sample_fields(factor, seed, count, threads), gamma.rows());
      },
      py::arg("gamma"), py::arg("relation"), py::arg("seed"), py::arg("count"), py::arg("threads") = 1,
      "Draws complex Gaussian fields with E[x x^H] = gamma and E[x x^T] = relation.");
  m.def(
      "characteristic_function",
      [](const CMatrix& gamma, const CMatrix& relation, const CVector& a, const CVector& b) {
        return characteristic_function(KernelPair{gamma, relation}, a, b);
      },
      py::arg("gamma"), py::arg("relation"), py::arg("a"), py::arg("b"));

  py::class_<DeltaMetricResult>(m, "DeltaMetricResult")
      .def_readonly("r", &DeltaMetricResult::r)
      .def_readonly("t", &DeltaMetricResult::t)
      .def_readonly("samples", &DeltaMetricResult::samples)
      .def_readonly("delta_mc", &DeltaMetricResult::delta_mc)
      .def_readonly("standard_error", &DeltaMetricResult::standard_error)
      .def_readonly("delta_analytic", &DeltaMetricResult::delta_analytic)
      .def_readonly("omega", &DeltaMetricResult::omega)
      .def_property_readonly("deviation", &DeltaMetricResult::deviation);
  m.def(
      "delta_metric_mc",
      [](double r, double t, std::size_t n_steps, std::size_t samples, std::uint64_t seed, double boson_mass,
         double cutoff_mass, double coupling, unsigned threads) {
        return delta_metric_mc(make_spec(boson_mass, cutoff_mass, coupling), r, t, n_steps, samples, seed, threads);
      },
      py::arg("r"), py::arg("t"), py::arg("n_steps") = 8, py::arg("samples") = 10000, py::arg("seed") = 1,
      py::arg("boson_mass") = 1.0, py::arg("cutoff_mass") = 100.0, py::arg("coupling") = 1.0,
      py::arg("threads") = 1);

  py::class_<AmplificationPoint>(m, "AmplificationPoint")
      .def_readonly("particles", &AmplificationPoint::particles)
      .def_readonly("exponent", &AmplificationPoint::exponent)
      .def_readonly("exponent_analytic", &AmplificationPoint::exponent_analytic)
      .def_readonly("ratio", &AmplificationPoint::ratio)
      .def_readonly("min_distance", &AmplificationPoint::min_distance)
      .def_readonly("in_regime", &AmplificationPoint::in_regime);
  m.def(
      "amplification_scan",
      [](const std::vector<std::size_t>& particles, double separation, double intra_spacing, double horizon,
         std::size_t n_steps, double boson_mass, double cutoff_mass, double coupling) {
        AmplificationGeometry g;
        g.separation = separation;
        g.intra_spacing = intra_spacing;
        g.horizon = horizon;
        g.n_steps = n_steps;
        return amplification_scan(make_spec(boson_mass, cutoff_mass, coupling), particles, g);
      },
      py::arg("particles"), py::arg("separation") = 50.0, py::arg("intra_spacing") = 5.0, py::arg("horizon") = 40.0,
      py::arg("n_steps") = 4, py::arg("boson_mass") = 1.0, py::arg("cutoff_mass") = 10.0, py::arg("coupling") = 1.0);

  m.def(
      "run_experiment",
      [](const std::string& config, std::optional<std::string> output_dir, std::optional<unsigned> threads) {
        RunOverrides o;
        o.output_dir = output_dir;
        o.threads = threads;
        RunReport report;
        {
          py::gil_scoped_release release;
          nlohmann::json parsed;
          try {
            parsed = nlohmann::json::parse(config);
          } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::ConfigError, e.what());
          }
          const ScenarioConfig cfg = ScenarioConfig::from_json(parsed);
          report = run_experiment(cfg, o);
          emit_report(report, resolve_output_dir(cfg, o));
        }
        return report.to_json().dump();
      },
      py::arg("config"), py::arg("output_dir") = py::none(), py::arg("threads") = py::none(),
      "Runs a scenario from a JSON config string and returns the report as a JSON string.");
}
