#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "chunksel/answer.hpp"
#include "chunksel/cli.hpp"
#include "chunksel/dataset.hpp"
#include "chunksel/errors.hpp"
#include "chunksel/selection.hpp"
#include "chunksel/toy_model.hpp"

namespace py = pybind11;
using namespace chunksel;

PYBIND11_MODULE(_core, m) {
  m.attr("__version__") = CHUNKSEL_VERSION;

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  static py::exception<ValidationError> validation(m, "ValidationError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      PyErr_SetString(validation.ptr(), e.what());
    } catch (const Error& e) {
      PyErr_SetString(error.ptr(), e.what());
    }
  });

  m.def("compute_ppl", &compute_ppl, py::arg("sum_nll"), py::arg("token_count"));

  m.def(
      "select_index",
      [](const std::vector<double>& ppls, const std::string& strategy, std::uint64_t seed) {
        return select_index(ppls, SelectionStrategy{parse_strategy_kind(strategy), seed});
      },
      py::arg("ppls"), py::arg("strategy") = "low", py::arg("seed") = 0);

  m.def(
      "schedule_counts",
      [](const std::string& descriptor, int steps) {
        auto s = SamplingSchedule::parse(descriptor);
        std::vector<int> out;
        for (int c = 1; c <= steps; ++c) out.push_back(s.k_at(c));
        return out;
      },
      py::arg("descriptor"), py::arg("steps"));

  m.def(
      "extract_answer",
      [](const std::string& text) -> py::object {
        auto a = extract_answer(text);
        if (!a.found) return py::none();
        return py::str(a.raw);
      },
      py::arg("trajectory_text"));
  m.def("normalize_answer", [](const std::string& a) { return normalize_answer(a); }, py::arg("answer"));
  m.def(
      "answers_match", [](const std::string& text, const std::string& gold) {
        return answers_match(extract_answer(text), gold);
      },
      py::arg("trajectory_text"), py::arg("gold"));

  // Records come back as JSON strings; the Python wrapper decodes them.
  m.def(
      "read_dataset_json",
      [](const std::filesystem::path& path) {
        std::vector<std::string> out;
        for (const auto& r : read_dataset(path)) out.push_back(to_json(r).dump());
        return out;
      },
      py::arg("path"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"chunksel"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));

  py::class_<ToyBackend>(m, "ToyModel")
      .def(py::init([](const std::string& text) { return std::make_unique<ToyBackend>(ToyModelSpec::parse(text)); }),
           py::arg("spec_text"))
      .def_static(
          "load", [](const std::filesystem::path& p) { return std::make_unique<ToyBackend>(ToyModelSpec::load(p)); },
          py::arg("path"))
      .def_property_readonly("identity", &ToyBackend::identity)
      .def(
          "score",
          [](ToyBackend& b, const std::string& context, const std::string& continuation) {
            std::vector<std::pair<std::string, double>> out;
            for (const auto& t : b.score_text(context, continuation)) out.emplace_back(t.token_text, t.logprob);
            return out;
          },
          py::arg("context"), py::arg("continuation"))
      .def(
          "sample",
          [](ToyBackend& b, const std::string& context, int n, int token_budget, std::uint64_t seed,
             const std::string& problem_id) {
            SampleRequest r;
            r.problem_id = problem_id;
            r.context = context;
            r.n = n;
            r.token_budget = token_budget;
            r.run_seed = seed;
            std::vector<std::string> out;
            for (const auto& s : b.sample_continuations(r)) out.push_back(s.text);
            return out;
          },
          py::arg("context"), py::arg("n") = 1, py::arg("token_budget") = 64, py::arg("seed") = 0,
          py::arg("problem_id") = "p");
}
