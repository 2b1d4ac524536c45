#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "photodyn/closed_loop.hpp"
#include "photodyn/config.hpp"
#include "photodyn/errors.hpp"
#include "photodyn/io.hpp"
#include "photodyn/photon_stats.hpp"
#include "photodyn/pipeline.hpp"
#include "photodyn/simulator.hpp"

namespace py = pybind11;
using namespace photodyn;

PYBIND11_MODULE(_photodyn, m) {
  m.doc() = "Emitter photodynamics simulator and analysis pipeline";
  m.attr("__version__") = PHOTODYN_VERSION;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<MissingInput>(m, "MissingInput", PyExc_FileNotFoundError);
  py::register_exception<io::IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<FitFailed>(m, "FitFailed", PyExc_RuntimeError);
  py::register_exception<InsufficientData>(m, "InsufficientData", PyExc_RuntimeError);

  py::class_<StageResult>(m, "StageResult")
      .def_readonly("stage", &StageResult::stage)
      .def_readonly("ok", &StageResult::ok)
      .def_readonly("missing_input", &StageResult::missing_input)
      .def_readonly("error", &StageResult::error)
      .def_readonly("files", &StageResult::files);

  m.def("sha256_hex", [](const std::string& s) { return sha256_hex(s); });

  m.def(
      "simulate",
      [](const std::string& config_text, const std::filesystem::path& dir, std::optional<std::uint64_t> seed) {
        const auto cfg = parse_config(config_text, "config");
        py::gil_scoped_release release;
        return simulate_run(cfg, dir, seed);
      },
      py::arg("config_text"), py::arg("dir"), py::arg("seed") = py::none(),
      "Simulates a TOML config into a run directory; returns the files written.");
  m.def(
      "simulate_file",
      [](const std::filesystem::path& config, const std::filesystem::path& dir, std::optional<std::uint64_t> seed) {
        const auto cfg = load_config(config);
        py::gil_scoped_release release;
        return simulate_run(cfg, dir, seed);
      },
      py::arg("config"), py::arg("dir"), py::arg("seed") = py::none());
  m.def(
      "analyze",
      [](const std::filesystem::path& dir, const std::vector<std::string>& stages) {
        py::gil_scoped_release release;
        return analyze_run(dir, stages);
      },
      py::arg("dir"), py::arg("stages") = std::vector<std::string>{});
  m.def("report", [](const std::filesystem::path& dir) { return report_run(dir); }, py::arg("dir"));

  m.def("suite_names", &suite_names);
  m.def(
      "closed_loop",
      [](const std::string& suite, std::uint64_t seed) {
        ClosedLoopOptions o;
        o.seed = seed;
        std::vector<SuiteReport> r;
        {
          py::gil_scoped_release release;
          r = run_suites(suite, o);
        }
        return py::module_::import("json").attr("loads")(reports_to_json(r));
      },
      py::arg("suite"), py::arg("seed") = ClosedLoopOptions{}.seed,
      "Runs a closed-loop suite (or 'all'); returns the parsed JSON report.");

  m.def(
      "mixture_pmf",
      [](double p_e, double lambda_b, double gamma, double lambda_max, int n_max, int J) {
        MixtureParams p;
        p.p_e = p_e;
        p.lambda_b = lambda_b;
        p.gamma = gamma;
        p.lambda_max = lambda_max;
        p.J = J;
        return mixture_pmf(p, n_max);
      },
      py::arg("p_e"), py::arg("lambda_b"), py::arg("gamma"), py::arg("lambda_max"), py::arg("n_max"),
      py::arg("J") = 64);
}
