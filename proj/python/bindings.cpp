// Python bindings. Configs cross the boundary as JSON text; the package
// wrapper converts to and from dicts.

#include "beamlab/cli_reporting.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace beamlab;
using nlohmann::json;

namespace {

SpacetimePoint point(double t, std::vector<double> x) { return {t, std::move(x)}; }

py::dict geodesic_dict(const BrokenNullGeodesic& g, int n) {
  std::size_t count = 0;
  for (const auto& seg : g.segments) count += seg.nodes.size();
  py::array_t<double> s(count), x({count, static_cast<std::size_t>(n + 1)}), defect(count);
  auto S = s.mutable_unchecked<1>();
  auto X = x.mutable_unchecked<2>();
  auto D = defect.mutable_unchecked<1>();
  std::size_t k = 0;
  for (const auto& seg : g.segments)
    for (const auto& node : seg.nodes) {
      S(k) = node.s;
      for (int c = 0; c <= n; ++c) X(k, c) = node.x[c];
      D(k) = node.null_defect;
      ++k;
    }
  py::dict d;
  d["s"] = s;
  d["x"] = x;
  d["null_defect"] = defect;
  d["reflection_params"] = g.reflection_params;
  d["end"] = to_string(g.end);
  d["s_exit"] = g.s_exit ? py::cast(*g.s_exit) : py::none();
  d["max_null_defect"] = g.max_null_defect;
  return d;
}

IntegralSource source_from(const std::string& s) {
  if (s == "field") return IntegralSource::Field;
  if (s == "solve") return IntegralSource::Solve;
  if (s == "dtn") return IntegralSource::DtN;
  throw Error("config", "source must be field, solve or dtn");
}

std::map<int, std::string> coeffs(const std::map<std::string, std::string>& m) {
  std::map<int, std::string> out;
  for (const auto& [k, v] : m) out[std::stoi(k)] = v;
  return out;
}

} // namespace

PYBIND11_MODULE(_core, mod) {
  mod.attr("__version__") = kSoftwareVersion;
  mod.attr("SCHEMA_VERSION") = kSchemaVersion;

  // translators run newest first, so the subclass goes last
  py::register_exception<Error>(mod, "BeamlabError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(mod, "ConfigError", PyExc_ValueError);

  mod.def("subcommands", &subcommands);
  mod.def("default_config_json", [] { return default_config().dump(); });
  mod.def("validate_json", [](const std::string& command, const std::string& doc) {
    try {
      load_config(command, json::parse(doc), {}, json::object());
      return std::vector<std::string>{};
    } catch (const ConfigError& e) {
      return e.issues();
    }
  });
  mod.def("config_hash_json", [](const std::string& doc) { return config_hash(json::parse(doc)); });
  mod.def(
      "run_json",
      [](const std::string& command, const std::string& doc, const std::string& flags) {
        auto cfg = load_config(command, json::parse(doc), beamlab_environment(), json::parse(flags));
        py::gil_scoped_release unlock;
        return run_scenario(cfg).to_json().dump();
      },
      py::arg("command"), py::arg("config"), py::arg("flags") = "{}");

  mod.def(
      "shoot_json",
      [](const std::string& metric, double t, std::vector<double> x, std::vector<double> xi, bool covector,
         int max_reflections) {
        auto m = metric_from_json(json::parse(metric));
        TangentObject v{point(t, x), std::move(xi), covector ? Variance::Covector : Variance::Vector};
        ShootOptions o;
        o.max_reflections = max_reflections;
        return geodesic_dict(shoot_null_geodesic(m, v.base, v, o), m.n);
      },
      py::arg("metric"), py::arg("t"), py::arg("x"), py::arg("xi"), py::arg("covector") = false,
      py::arg("max_reflections") = 4);

  mod.def(
      "recover_json",
      [](int order, const std::string& metric, int nt, int nx, const std::map<std::string, std::string>& V1,
         const std::map<std::string, std::string>& V2, double t, std::vector<double> x, std::vector<double> rhos,
         const std::string& source, int min_nodes, int threads) {
        auto m = metric_from_json(json::parse(metric));
        auto lat = Lattice::make(m, nt, nx);
        auto a = nonlinearity_from_exprs(lat, coeffs(V1)), b = nonlinearity_from_exprs(lat, coeffs(V2));
        ReconstructionOptions o;
        o.source = source_from(source);
        o.quad.min_nodes_per_efold = min_nodes;
        o.threads = threads;
        PointEstimate pe;
        {
          py::gil_scoped_release unlock;
          pe = recover_vm(order, m, lat, a, b, point(t, std::move(x)), rhos, o);
        }
        py::dict d;
        d["rho"] = pe.rho;
        d["estimate"] = pe.estimate;
        d["value"] = pe.value;
        d["extrapolated"] = pe.extrapolated;
        d["error_bar"] = pe.error_bar;
        d["imag_ratio"] = pe.imag_ratio;
        d["status"] = pe.status;
        return d;
      },
      py::arg("order"), py::arg("metric"), py::arg("nt"), py::arg("nx"), py::arg("V1"), py::arg("V2"), py::arg("t"),
      py::arg("x"), py::arg("rhos"), py::arg("source") = "field", py::arg("min_nodes") = 4, py::arg("threads") = 1);
}
