#include "atelier/vocab.hpp"

#include "atelier/error.hpp"

#include <charconv>
#include <cmath>

namespace atelier {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::verb: return "verb";
    case Role::noun: return "noun";
    case Role::adverb: return "adverb";
  }
  return "verb";
}

Vocab::Vocab(std::vector<VocabEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const VocabEntry& e = entries_[i];
    if (e.word.empty()) throw Error(ErrorCode::invalid_argument, "empty vocab word");
    if (!lookup_.emplace(e.word, i).second)
      throw Error(ErrorCode::invalid_argument, "duplicate vocab word '" + e.word + "'");
    if ((e.role == Role::noun) != e.column.has_value())
      throw Error(ErrorCode::invalid_argument, "word '" + e.word + "': nouns, and only nouns, carry a column");
    if (!(e.duration_scale > 0.0) || !std::isfinite(e.duration_scale))
      throw Error(ErrorCode::invalid_argument, "word '" + e.word + "': duration scale must be positive");
    if (e.role != Role::adverb && e.duration_scale != 1.0)
      throw Error(ErrorCode::invalid_argument, "word '" + e.word + "': only adverbs carry a duration scale");
  }
}

Vocab Vocab::standard() {
  using laban::Column;
  std::vector<VocabEntry> e;
  for (const char* verb : {"lift", "lower", "step", "turn", "reach", "sweep", "bend", "open"})
    e.push_back({verb, Role::verb, std::nullopt, 1.0});
  for (std::size_t c = 0; c < laban::kColumns; ++c) {
    const auto column = static_cast<Column>(c);
    e.push_back({std::string(laban::name_of(column)), Role::noun, column, 1.0});
  }
  e.push_back({"slowly", Role::adverb, std::nullopt, 2.0});
  e.push_back({"quickly", Role::adverb, std::nullopt, 0.5});
  e.push_back({"gently", Role::adverb, std::nullopt, 1.0});
  e.push_back({"sharply", Role::adverb, std::nullopt, 0.5});
  e.push_back({"broadly", Role::adverb, std::nullopt, 2.0});
  return Vocab(std::move(e));
}

Vocab Vocab::parse(std::string_view text) {
  std::vector<VocabEntry> entries;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;

    std::vector<std::pair<std::string_view, int>> fields;
    std::size_t p = 0;
    while (p <= line.size()) {
      const std::size_t sp = line.find(' ', p);
      const std::size_t e = sp == std::string_view::npos ? line.size() : sp;
      if (e > p) fields.emplace_back(line.substr(p, e - p), static_cast<int>(p) + 1);
      if (sp == std::string_view::npos) break;
      p = sp + 1;
    }
    if (fields.size() < 3 || fields[0].first != "word")
      throw ParseError(ErrorCode::syntax, line_no, 1, "expected 'word <text> role=<role> ...'");
    VocabEntry entry;
    entry.word = std::string(fields[1].first);
    bool have_role = false;
    for (std::size_t i = 2; i < fields.size(); ++i) {
      const auto [field, col] = fields[i];
      const auto eq = field.find('=');
      if (eq == std::string_view::npos)
        throw ParseError(ErrorCode::syntax, line_no, col, "expected key=value, found '" + std::string(field) + "'");
      const std::string_view key = field.substr(0, eq);
      const std::string_view value = field.substr(eq + 1);
      if (key == "role") {
        if (value == "verb") entry.role = Role::verb;
        else if (value == "noun") entry.role = Role::noun;
        else if (value == "adverb") entry.role = Role::adverb;
        else throw ParseError(ErrorCode::unknown_enum, line_no, col, "unknown role '" + std::string(value) + "'");
        have_role = true;
      } else if (key == "col") {
        entry.column = laban::parse_enum<laban::Column>(value);
        if (!entry.column)
          throw ParseError(ErrorCode::unknown_enum, line_no, col, "unknown column '" + std::string(value) + "'");
      } else if (key == "durscale") {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
        if (ec != std::errc{} || ptr != value.data() + value.size())
          throw ParseError(ErrorCode::syntax, line_no, col, "malformed durscale '" + std::string(value) + "'");
        entry.duration_scale = v;
      } else {
        throw ParseError(ErrorCode::syntax, line_no, col, "unknown key '" + std::string(key) + "'");
      }
    }
    if (!have_role) throw ParseError(ErrorCode::syntax, line_no, 1, "missing role for '" + entry.word + "'");
    entries.push_back(std::move(entry));
  }
  return Vocab(std::move(entries));
}

std::string Vocab::serialize() const {
  std::string out;
  for (const auto& e : entries_) {
    out += "word " + e.word + " role=" + std::string(to_string(e.role));
    if (e.column) out += " col=" + std::string(laban::name_of(*e.column));
    if (e.role == Role::adverb) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof buf, e.duration_scale);
      out += " durscale=" + std::string(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

std::optional<std::size_t> Vocab::find(std::string_view word) const {
  const auto it = lookup_.find(std::string(word));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocab::index(std::string_view word) const {
  const auto i = find(word);
  if (!i) throw Error(ErrorCode::out_of_vocabulary, "out-of-vocabulary word '" + std::string(word) + "'");
  return *i;
}

std::vector<std::size_t> Vocab::indices(const std::vector<std::string>& words) const {
  std::vector<std::size_t> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(index(w));
  return out;
}

std::vector<std::string> Vocab::words_with_role(Role role) const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (e.role == role) out.push_back(e.word);
  return out;
}

std::optional<std::string> Vocab::noun_for(laban::Column column) const {
  for (const auto& e : entries_)
    if (e.role == Role::noun && e.column == column) return e.word;
  return std::nullopt;
}

}  // namespace atelier
