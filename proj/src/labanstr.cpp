#include "atelier/labanstr.hpp"

#include "atelier/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <tuple>

namespace atelier::laban {

namespace {

constexpr std::string_view kHeader = "LABANSTR";
constexpr std::string_view kVersion = "1";

auto sort_key(const LabanToken& t) {
  return std::make_tuple(t.time.start, index_of(t.action.column), t.time.duration,
                         index_of(t.action.direction), index_of(t.action.level),
                         index_of(t.action.rotation), index_of(t.action.flexion),
                         index_of(t.spatial.path), index_of(t.spatial.facing),
                         index_of(t.spatial.position), t.time.meter);
}

struct Field {
  std::string_view text;
  int column;  // 1-based
};

std::vector<Field> split_spaces(std::string_view line) {
  std::vector<Field> fields;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(' ', pos);
    const std::size_t end = next == std::string_view::npos ? line.size() : next;
    fields.push_back({line.substr(pos, end - pos), static_cast<int>(pos) + 1});
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return fields;
}

int parse_positive_int(std::string_view s) {
  if (s.empty() || s.size() > 9) return 0;
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return 0;
  return v;
}

Meter parse_meter(const Field& f, int line_no) {
  const auto slash = f.text.find('/');
  if (slash != std::string_view::npos) {
    const int beats = parse_positive_int(f.text.substr(0, slash));
    const int unit = parse_positive_int(f.text.substr(slash + 1));
    if (beats > 0 && unit > 0) return Meter{beats, unit};
  }
  throw ParseError(ErrorCode::malformed_rational, line_no, f.column,
                   "malformed meter '" + std::string(f.text) + "'");
}

class TokenLineParser {
 public:
  TokenLineParser(std::vector<Field> fields, int line_no) : fields_(std::move(fields)), line_(line_no) {}

  LabanToken parse(Meter meter) {
    if (fields_.size() != 11)
      throw ParseError(ErrorCode::syntax, line_, 1,
                       "token line needs 10 key=value fields separated by single spaces, got " +
                           std::to_string(fields_.size() - 1));
    LabanToken t;
    t.time.meter = meter;
    t.time.start = rational(1, "start");
    t.time.duration = rational(2, "dur");
    t.action.column = enumerated<Column>(3);
    t.action.direction = enumerated<Direction>(4);
    t.action.level = enumerated<Level>(5);
    t.action.rotation = enumerated<Rotation>(6);
    t.action.flexion = enumerated<Flexion>(7);
    t.spatial.path = enumerated<Path>(8);
    t.spatial.facing = enumerated<Facing>(9);
    t.spatial.position = enumerated<Position>(10);
    return t;
  }

 private:
  std::string_view value(std::size_t i, std::string_view key) {
    const Field& f = fields_[i];
    if (f.text.size() <= key.size() || f.text.substr(0, key.size()) != key ||
        f.text[key.size()] != '=')
      throw ParseError(ErrorCode::syntax, line_, f.column,
                       "expected '" + std::string(key) + "=' but found '" + std::string(f.text) + "'");
    return f.text.substr(key.size() + 1);
  }

  Rational rational(std::size_t i, std::string_view key) {
    const std::string_view v = value(i, key);
    const auto r = Rational::parse(v);
    if (!r)
      throw ParseError(ErrorCode::malformed_rational, line_, fields_[i].column,
                       "malformed rational '" + std::string(v) + "' for field '" + std::string(key) + "'");
    return *r;
  }

  template <class E>
  E enumerated(std::size_t i) {
    const std::string_view key = EnumTraits<E>::key;
    const std::string_view v = value(i, key);
    const auto e = parse_enum<E>(v);
    if (!e)
      throw ParseError(ErrorCode::unknown_enum, line_, fields_[i].column,
                       "unknown value '" + std::string(v) + "' for field '" + std::string(key) + "'");
    return *e;
  }

  std::vector<Field> fields_;
  int line_;
};

}  // namespace

bool canonical_less(const LabanToken& a, const LabanToken& b) { return sort_key(a) < sort_key(b); }

Score parse_score(std::string_view text) {
  Score score;
  bool have_header = false;
  bool have_meter = false;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      throw ParseError(ErrorCode::syntax, line_no, static_cast<int>(line.size()),
                       "CR line endings are not allowed");
    if (line.empty() || line.front() == '#') continue;

    auto fields = split_spaces(line);
    for (const Field& f : fields)
      if (f.text.empty())
        throw ParseError(ErrorCode::syntax, line_no, f.column, "fields are separated by exactly one space");
    if (!have_header) {
      if (fields.size() != 2 || fields[0].text != kHeader)
        throw ParseError(ErrorCode::syntax, line_no, 1, "expected header 'LABANSTR 1'");
      if (fields[1].text != kVersion)
        throw ParseError(ErrorCode::version_mismatch, line_no, fields[1].column,
                         "unsupported version '" + std::string(fields[1].text) + "'");
      have_header = true;
      continue;
    }
    if (!have_meter) {
      if (fields.size() != 2 || fields[0].text != "meter")
        throw ParseError(ErrorCode::syntax, line_no, 1, "expected 'meter <num>/<den>'");
      score.meter = parse_meter(fields[1], line_no);
      have_meter = true;
      continue;
    }
    if (fields[0].text != "tok")
      throw ParseError(ErrorCode::syntax, line_no, 1,
                       "expected token line starting with 'tok', found '" + std::string(fields[0].text) + "'");
    score.tokens.push_back(TokenLineParser(std::move(fields), line_no).parse(score.meter));
  }
  if (!have_header) throw ParseError(ErrorCode::syntax, line_no + 1, 1, "missing header 'LABANSTR 1'");
  if (!have_meter) throw ParseError(ErrorCode::syntax, line_no + 1, 1, "missing meter line");
  return score;
}

std::string serialize_token(const LabanToken& t) {
  std::string out = "tok start=";
  out += t.time.start.to_string();
  out += " dur=";
  out += t.time.duration.to_string();
  const auto kv = [&out](std::string_view key, std::string_view v) {
    out += ' ';
    out += key;
    out += '=';
    out += v;
  };
  kv("col", name_of(t.action.column));
  kv("dir", name_of(t.action.direction));
  kv("lvl", name_of(t.action.level));
  kv("rot", name_of(t.action.rotation));
  kv("flex", name_of(t.action.flexion));
  kv("path", name_of(t.spatial.path));
  kv("face", name_of(t.spatial.facing));
  kv("pos", name_of(t.spatial.position));
  return out;
}

std::string serialize_score(const Score& s) {
  std::vector<const LabanToken*> order;
  order.reserve(s.tokens.size());
  for (const auto& t : s.tokens) order.push_back(&t);
  std::sort(order.begin(), order.end(),
            [](const LabanToken* a, const LabanToken* b) { return canonical_less(*a, *b); });

  std::string out;
  out += kHeader;
  out += ' ';
  out += kVersion;
  out += "\nmeter " + std::to_string(s.meter.beats) + "/" + std::to_string(s.meter.unit) + "\n";
  for (const LabanToken* t : order) {
    out += serialize_token(*t);
    out += '\n';
  }
  return out;
}

Score canonicalize(Score s) {
  std::sort(s.tokens.begin(), s.tokens.end(), canonical_less);
  return s;
}

ValidationReport validate_score(const Score& s) {
  ValidationReport report;
  const Rational zero{0};
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    const LabanToken& t = s.tokens[i];
    if (t.time.duration <= zero)
      report.violations.push_back({Violation::Kind::nonpositive_duration, i, std::nullopt,
                                   "token " + std::to_string(i) + " has nonpositive duration " +
                                       t.time.duration.to_string()});
    if (t.time.start < zero)
      report.violations.push_back({Violation::Kind::negative_start, i, std::nullopt,
                                   "token " + std::to_string(i) + " has negative start " +
                                       t.time.start.to_string()});
    if (t.time.meter != s.meter)
      report.violations.push_back({Violation::Kind::meter_mismatch, i, std::nullopt,
                                   "token " + std::to_string(i) + " meter differs from score meter"});
  }

  // Sweep per column over tokens with nonempty intervals.
  std::array<std::vector<std::size_t>, kColumns> by_column;
  for (std::size_t i = 0; i < s.tokens.size(); ++i)
    if (s.tokens[i].time.duration > zero) by_column[index_of(s.tokens[i].action.column)].push_back(i);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (auto& idx : by_column) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return std::tie(s.tokens[a].time.start, a) < std::tie(s.tokens[b].time.start, b);
    });
    for (std::size_t p = 0; p < idx.size(); ++p) {
      const Rational end = s.tokens[idx[p]].end();
      for (std::size_t q = p + 1; q < idx.size() && s.tokens[idx[q]].time.start < end; ++q)
        pairs.emplace_back(std::min(idx[p], idx[q]), std::max(idx[p], idx[q]));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  for (const auto& [a, b] : pairs)
    report.violations.push_back({Violation::Kind::overlap, a, b,
                                 "tokens " + std::to_string(a) + " and " + std::to_string(b) +
                                     " overlap in column " +
                                     std::string(name_of(s.tokens[a].action.column))});
  return report;
}

Vec3 target_vector(Direction d, Level l) {
  constexpr double h = 0.70710678118654752440;  // sqrt(2)/2
  static constexpr std::array<std::array<double, 2>, kDirections> table = {{
      {0.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}, {-1.0, 0.0}, {1.0, 0.0},
      {-h, h},    {h, h},     {-h, -h},    {h, -h},
  }};
  const auto& xy = table[index_of(d)];
  return {xy[0], xy[1], static_cast<double>(index_of(l)) - 1.0};
}

namespace {

void require_valid(const Score& s) {
  const auto report = validate_score(s);
  if (!report.ok()) throw Error(ErrorCode::invalid_score, report.violations.front().message);
}

std::vector<const LabanToken*> column_tokens(const Score& s, Column c) {
  std::vector<const LabanToken*> out;
  for (const auto& t : s.tokens)
    if (t.action.column == c) out.push_back(&t);
  std::sort(out.begin(), out.end(),
            [](const LabanToken* a, const LabanToken* b) { return a->time.start < b->time.start; });
  return out;
}

Vec3 value_in_column(const std::vector<const LabanToken*>& toks, double t) {
  Vec3 held{0.0, 0.0, 0.0};
  for (const LabanToken* tok : toks) {
    const double start = tok->time.start.to_double();
    if (t < start) break;
    const Vec3 target = target_vector(tok->action.direction, tok->action.level);
    const double dur = tok->time.duration.to_double();
    if (t < start + dur) {
      const double w = (t - start) / dur;
      return {held[0] + w * (target[0] - held[0]), held[1] + w * (target[1] - held[1]),
              held[2] + w * (target[2] - held[2])};
    }
    held = target;
  }
  return held;
}

}  // namespace

Vec3 column_value_at(const Score& s, Column column, double t) {
  require_valid(s);
  return value_in_column(column_tokens(s, column), t);
}

ChannelSamples decode_channels(const Score& s, int samples_per_beat, double horizon_beats) {
  if (samples_per_beat < 1) throw Error(ErrorCode::invalid_argument, "sample rate must be >= 1");
  require_valid(s);
  double end = std::max(0.0, horizon_beats);
  for (const auto& t : s.tokens) end = std::max(end, t.end().to_double());
  const auto count = static_cast<std::size_t>(std::floor(end * samples_per_beat + 1e-9)) + 1;

  ChannelSamples out;
  out.samples_per_beat = samples_per_beat;
  for (std::size_t c = 0; c < kColumns; ++c) {
    const auto toks = column_tokens(s, static_cast<Column>(c));
    auto& series = out.columns[c];
    series.reserve(count);
    for (std::size_t k = 0; k < count; ++k)
      series.push_back(value_in_column(toks, static_cast<double>(k) / samples_per_beat));
  }
  return out;
}

Histogram attribute_histogram(const Score& s) {
  Histogram h;
  if (s.tokens.empty()) return h;
  h.empty = false;
  const double unit = 1.0 / static_cast<double>(s.tokens.size());
  for (const auto& t : s.tokens)
    h.mass[cell_index(t.action.column, t.action.direction, t.action.level)] += unit;
  return h;
}

}  // namespace atelier::laban
