// Python bindings. Scores, configs, oracle specs and logs cross the boundary
// as text; structured results come back as JSON strings and are decoded by
// the package wrapper.

#include "atelier/artistio.hpp"
#include "atelier/embedding.hpp"
#include "atelier/labanstr.hpp"
#include "atelier/phase.hpp"
#include "atelier/session.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace atelier;

namespace {

using CellArray = std::array<double, laban::kCells>;

std::vector<std::string> violations(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& v : laban::validate_score(laban::parse_score(text)).violations) out.push_back(v.message);
  return out;
}

Vector histogram(const std::string& text) {
  const auto h = laban::attribute_histogram(laban::parse_score(text));
  return Eigen::Map<const Vector>(h.mass.data(), laban::kCells);
}

CellArray cells(const Vector& v) {
  if (v.size() != static_cast<Eigen::Index>(laban::kCells))
    throw Error(ErrorCode::invalid_argument, "expected " + std::to_string(laban::kCells) + " cells");
  CellArray out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[static_cast<Eigen::Index>(i)];
  return out;
}

std::string run(const std::string& config_text, const std::string& oracle_text, int iterations,
                std::uint64_t seed) {
  const LoopConfig config = LoopConfig::parse(config_text);
  const OracleSpec spec = OracleSpec::parse(oracle_text);
  py::gil_scoped_release release;
  const Session s = run_session(
      config, Vocab::standard(), [&](const laban::Score& score, int) { return scripted_feedback(spec, score); },
      iterations, seed);
  return serialize_event_log(s.events());
}

std::string replayed(const std::string& log_text) {
  Json out = Json::array();
  for (const auto& e : replay_feedback(log_text)) out.push_back(to_json(e));
  return out.dump();
}

std::string fit(const std::vector<double>& signal, double sample_rate, int k_max) {
  const phase::PhaseFit f = phase::fit_cyclic_elements(signal, sample_rate, k_max);
  Json elements = Json::array();
  for (const auto& e : f.elements)
    elements.push_back({{"frequency", e.frequency}, {"amplitude", e.amplitude}, {"phase", e.phase}});
  return Json{{"elements", elements}, {"offset", f.offset}, {"residual_rms", f.residual_rms}}.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Labanotation scores, similarity scoring and the artist feedback loop";

  // subclass of ValueError carrying the error code as `.code`
  static py::handle base = py::exception<Error>(m, "Error", PyExc_ValueError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = base(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(base.ptr(), exc.ptr());
    }
  });

  m.attr("CELLS") = laban::kCells;

  m.def("canonicalize", [](const std::string& text) { return laban::serialize_score(laban::canonicalize(laban::parse_score(text))); },
        py::arg("text"), "Parse a score and return its canonical text.");
  m.def("violations", &violations, py::arg("text"), "Validation messages; empty for a valid score.");
  m.def("histogram", &histogram, py::arg("text"), "Normalized (column, direction, level) mass.");
  m.def("cell_index", [](const std::string& col, const std::string& dir, const std::string& lvl) {
    return laban::cell_index(laban::require_enum<laban::Column>(col), laban::require_enum<laban::Direction>(dir),
                             laban::require_enum<laban::Level>(lvl));
  }, py::arg("column"), py::arg("direction"), py::arg("level"));

  m.def("standard_vocab", [] { return Vocab::standard().serialize(); });
  m.def("check_vocab", [](const std::string& text) { return Vocab::parse(text).serialize(); }, py::arg("text"));

  m.def("dot_similarity", &dot_similarity, py::arg("x"), py::arg("y"));
  m.def("sc_score", [](const Vector& x, const Vector& xp, double energy, double theta_norm, double lambda,
                       const std::string& mode) {
    return sc_score(x, xp, energy, theta_norm, lambda, parse_sign_mode(mode));
  }, py::arg("x"), py::arg("x_prime"), py::arg("reward_energy"), py::arg("theta_norm"), py::arg("lam"),
     py::arg("sign_mode") = "penalty");
  m.def("encode_motion", [](const std::string& text, int dim, std::uint64_t seed) {
    return encode_motion(laban::parse_score(text), init_encoder(Vocab::standard(), dim, seed));
  }, py::arg("text"), py::arg("dim") = kDefaultDim, py::arg("seed") = 0, "Motion embedding under a seeded initial encoder.");

  m.def("fit_cyclic", &fit, py::arg("signal"), py::arg("sample_rate"), py::arg("k_max"));

  m.def("check_oracle", [](const std::string& text) { return OracleSpec::parse(text).serialize(); }, py::arg("text"));
  m.def("tv_distance", [](const Vector& a, const Vector& b) { return tv_distance(cells(a), cells(b)); });
  m.def("scripted_feedback", [](const std::string& oracle, const std::string& score) {
    return to_json(scripted_feedback(OracleSpec::parse(oracle), laban::parse_score(score))).dump();
  }, py::arg("oracle"), py::arg("score"));

  m.def("default_config", [] { return LoopConfig().serialize(); });
  m.def("run_session", &run, py::arg("config"), py::arg("oracle"), py::arg("iterations"), py::arg("seed"),
        "Run the loop against a scripted oracle and return the event log.");
  m.def("lint_log", [](const std::string& text) { lint_log(parse_event_log(text)); }, py::arg("log"));
  m.def("replay_feedback", &replayed, py::arg("log"));
}
