#include "atelier/artistio.hpp"

#include "atelier/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

namespace atelier {

void OracleSpec::check() const {
  double total = 0.0;
  for (double m : target) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw Error(ErrorCode::invalid_argument, "target mass must be finite and >= 0");
    total += m;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::invalid_argument, "target must sum to 1");
  if (!(rmax > 0.0) || !std::isfinite(rmax)) throw Error(ErrorCode::invalid_argument, "rmax must be > 0");
  if (budget < 0) throw Error(ErrorCode::invalid_argument, "budget must be >= 0");
}

namespace {

double parse_number(const std::string& s, int line) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ParseError(ErrorCode::syntax, line, 1, "bad number '" + s + "'");
  return v;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

OracleSpec OracleSpec::parse(std::string_view text) {
  OracleSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream words(line);
    std::vector<std::string> f;
    for (std::string w; words >> w;) f.push_back(w);
    if (f.empty() || f[0][0] == '#') continue;
    if (f[0] == "cell") {
      if (f.size() != 5) throw ParseError(ErrorCode::syntax, line_no, 1, "expected 'cell <col> <dir> <lvl> <mass>'");
      try {
        const auto c = laban::require_enum<laban::Column>(f[1]);
        const auto d = laban::require_enum<laban::Direction>(f[2]);
        const auto l = laban::require_enum<laban::Level>(f[3]);
        spec.target[laban::cell_index(c, d, l)] += parse_number(f[4], line_no);
      } catch (const ParseError&) {
        throw;
      } catch (const Error& e) {
        throw ParseError(e.code(), line_no, 1, e.what());
      }
    } else if (f[0] == "rmax" && f.size() == 2) {
      spec.rmax = parse_number(f[1], line_no);
    } else if (f[0] == "budget" && f.size() == 2) {
      const double b = parse_number(f[1], line_no);
      if (b != std::floor(b)) throw ParseError(ErrorCode::syntax, line_no, 1, "budget must be an integer");
      spec.budget = static_cast<int>(b);
    } else {
      throw ParseError(ErrorCode::syntax, line_no, 1, "unknown directive '" + f[0] + "'");
    }
  }
  spec.check();
  return spec;
}

std::string OracleSpec::serialize() const {
  std::string out = "rmax " + format_double(rmax) + "\nbudget " + std::to_string(budget) + "\n";
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 0.0) continue;
    const auto [c, d, l] = laban::cell_at(i);
    out += "cell ";
    out += laban::name_of(c);
    out += ' ';
    out += laban::name_of(d);
    out += ' ';
    out += laban::name_of(l);
    out += ' ' + format_double(target[i]) + "\n";
  }
  return out;
}

double tv_distance(const std::array<double, laban::kCells>& a, const std::array<double, laban::kCells>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

FeedbackEvent scripted_feedback(const OracleSpec& spec, const laban::Score& s) {
  spec.check();
  const auto hist = laban::attribute_histogram(s);
  FeedbackEvent e;
  e.rating = hist.empty ? 0.0 : std::clamp(spec.rmax * (1.0 - tv_distance(hist.mass, spec.target)), 0.0, spec.rmax);

  std::vector<std::size_t> cells(laban::kCells);
  std::iota(cells.begin(), cells.end(), std::size_t{0});
  const auto deficit = [&](std::size_t i) { return spec.target[i] - hist.mass[i]; };
  std::stable_sort(cells.begin(), cells.end(), [&](std::size_t a, std::size_t b) { return deficit(a) > deficit(b); });
  for (std::size_t i = 0; i < cells.size() && static_cast<int>(e.judgement.targets.size()) < spec.budget; ++i) {
    if (!(deficit(cells[i]) > 0.0)) break;
    e.judgement.targets.push_back({cells[i], deficit(cells[i])});
  }
  return e;
}

Json to_json(const Judgement& j) {
  Json targets = Json::array();
  for (const auto& t : j.targets) targets.push_back(Json{{"cell", t.cell}, {"delta", t.delta}});
  return Json{{"text", j.text}, {"targets", targets}};
}

namespace {

std::size_t cell_from_json(const Json& c) {
  if (c.is_number_unsigned()) return c.get<std::size_t>();
  if (c.is_object())
    return laban::cell_index(laban::require_enum<laban::Column>(c.at("column").get<std::string>()),
                             laban::require_enum<laban::Direction>(c.at("direction").get<std::string>()),
                             laban::require_enum<laban::Level>(c.at("level").get<std::string>()));
  throw Error(ErrorCode::invalid_argument, "cell must be an index or {column, direction, level}");
}

}  // namespace

Judgement judgement_from_json(const Json& j) {
  Judgement out;
  try {
    if (j.contains("text")) out.text = j.at("text").get<std::vector<std::string>>();
    if (j.contains("targets"))
      for (const auto& t : j.at("targets")) out.targets.push_back({cell_from_json(t.at("cell")), t.at("delta").get<double>()});
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("bad judgement: ") + e.what());
  }
  validate(out);
  return out;
}

Json to_json(const FeedbackEvent& e) {
  return Json{{"iteration", e.iteration},
              {"rating", e.rating},
              {"judgement", to_json(e.judgement)},
              {"decision", to_string(e.decision)}};
}

FeedbackEvent feedback_from_json(const Json& j) {
  FeedbackEvent e;
  try {
    if (j.contains("iteration")) e.iteration = j.at("iteration").get<int>();
    e.rating = j.at("rating").get<double>();
    if (j.contains("judgement")) e.judgement = judgement_from_json(j.at("judgement"));
    if (j.contains("decision")) e.decision = parse_decision(j.at("decision").get<std::string>());
  } catch (const Json::exception& err) {
    throw Error(ErrorCode::invalid_argument, std::string("bad feedback: ") + err.what());
  }
  validate(e);
  return e;
}

std::vector<FeedbackEvent> replay_feedback(const std::vector<Event>& log) {
  std::vector<const Event*> ordered;
  for (const auto& e : log)
    if (e.kind == EventKind::feedback) ordered.push_back(&e);
  std::stable_sort(ordered.begin(), ordered.end(), [](const Event* a, const Event* b) { return a->seq < b->seq; });
  std::vector<FeedbackEvent> out;
  for (const Event* e : ordered) {
    try {
      out.push_back(feedback_from_json(e->payload));
    } catch (const Error& err) {
      throw Error(err.code(), "seq " + std::to_string(e->seq) + ": " + err.what());
    }
  }
  return out;
}

std::vector<FeedbackEvent> replay_feedback(std::string_view log_text) { return replay_feedback(parse_event_log(log_text)); }

}  // namespace atelier
