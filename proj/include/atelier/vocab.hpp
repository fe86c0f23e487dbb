#pragma once

#include "atelier/labanstr.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace atelier {

enum class Role : std::uint8_t { verb, noun, adverb };

std::string_view to_string(Role role);

struct VocabEntry {
  std::string word;
  Role role = Role::verb;
  std::optional<laban::Column> column;  // nouns only
  double duration_scale = 1.0;          // adverbs only
};

/// Controlled word list. Nouns are body parts and carry exactly one staff
/// column; adverbs carry a duration scale.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<VocabEntry> entries);

  /// The built-in lexicon used when no vocab file is given.
  static Vocab standard();

  /// Lines `word <text> role=<verb|noun|adverb> [col=<column>] [durscale=<float>]`.
  static Vocab parse(std::string_view text);
  std::string serialize() const;

  std::size_t size() const { return entries_.size(); }
  const std::vector<VocabEntry>& entries() const { return entries_; }
  const VocabEntry& entry(std::size_t i) const { return entries_.at(i); }

  std::optional<std::size_t> find(std::string_view word) const;
  /// Index of a word; throws out_of_vocabulary naming it.
  std::size_t index(std::string_view word) const;
  std::vector<std::size_t> indices(const std::vector<std::string>& words) const;

  std::vector<std::string> words_with_role(Role role) const;
  /// The noun naming a column.
  std::optional<std::string> noun_for(laban::Column column) const;

 private:
  std::vector<VocabEntry> entries_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

}  // namespace atelier
