#pragma once

// Textural elements (verb, noun, adverb) to motion attributes, and
// autoregressive generation of scores from a conditioning embedding.

#include "atelier/embedding.hpp"
#include "atelier/labanstr.hpp"
#include "atelier/numeric.hpp"
#include "atelier/vocab.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace atelier {

struct TexturalElement {
  std::string verb;
  std::string noun;
  std::optional<std::string> adverb;
  friend bool operator==(const TexturalElement&, const TexturalElement&) = default;

  std::vector<std::string> words() const;
};

/// Greedy grouping: a verb opens an element, the next noun attaches to it, an
/// adverb attaches to the most recently opened element.
std::vector<TexturalElement> parse_textural_elements(const std::vector<std::string>& words, const Vocab& vocab);

enum class Head : std::uint8_t { column, direction, level, rotation, flexion, duration };
inline constexpr std::size_t kHeads = 6;
inline constexpr std::array<std::size_t, kHeads> kHeadSizes = {8, 9, 3, 5, 3, 3};
inline constexpr std::array<std::string_view, kHeads> kHeadNames = {"column", "direction", "level",
                                                                    "rotation", "flexion", "duration"};

/// Durations on the generation grid, in beats.
const std::array<Rational, 3>& grid_durations();
inline constexpr int kHorizonBeats = 8;

struct ComposerParams {
  std::array<Matrix, kHeads> heads;  // d x cardinality
  std::array<Vector, kHeads> bias;   // cardinality
  Matrix history;                    // d x d
  double temperature = 1.0;          // fixed, not trained

  Eigen::Index dim() const { return history.rows(); }

  template <class F>
  void visit(F&& f) {
    for (std::size_t h = 0; h < kHeads; ++h) f(kHeadNames[h], heads[h]);
    for (std::size_t h = 0; h < kHeads; ++h) f(kHeadNames[h], bias[h]);
    f("history", history);
  }
  template <class F>
  void visit(F&& f) const {
    for (std::size_t h = 0; h < kHeads; ++h) f(kHeadNames[h], heads[h]);
    for (std::size_t h = 0; h < kHeads; ++h) f(kHeadNames[h], bias[h]);
    f("history", history);
  }
};

ComposerParams init_composer(int dim, std::uint64_t seed);

struct AttributeDistribution {
  laban::Column column = laban::Column::body;  // from the lexicon
  Vector direction;
  Vector level;
  Vector rotation;
  Vector flexion;
  double duration_scale = 1.0;  // from the adverb's lexicon entry
};

AttributeDistribution compose_attributes(const TexturalElement& e, const Vocab& vocab,
                                         const EncoderDecoderParams& enc, const ComposerParams& comp);

struct CorpusItem {
  TexturalElement element;
  laban::LabanToken token;
};

/// Fixed attribute assignment of a (verb, noun) pair; left-side nouns mirror
/// lateral directions and rotations.
laban::ActionAttrs canonical_assignment(const Vocab& vocab, const std::string& verb, const std::string& noun);

/// Every (verb, noun) pair, `samples_per_pair` times, each attribute replaced
/// by a uniform draw with probability `noise`.
std::vector<CorpusItem> procedural_corpus(const Vocab& vocab, int samples_per_pair, double noise, std::uint64_t seed);

/// `count` text/score pairs over distinct (verb, noun) combinations; each score
/// repeats the pair's canonical action in the noun's column.
std::vector<AlignmentPair> procedural_pairs(const Vocab& vocab, int count, std::uint64_t seed);

/// Mean over the corpus of the summed log-probabilities of all six head labels.
double composer_objective(const std::vector<CorpusItem>& corpus, const Vocab& vocab, const EncoderDecoderParams& enc,
                          const ComposerParams& comp, ComposerParams* grad = nullptr);

struct ComposerTrainResult {
  ComposerParams params;
  std::vector<double> trace;
};

ComposerTrainResult train_composer(const std::vector<CorpusItem>& corpus, const Vocab& vocab,
                                   const EncoderDecoderParams& enc, ComposerParams comp, int steps, double step_size,
                                   std::uint64_t seed);

/// One sampled token with everything needed to differentiate through it.
struct GenerationStep {
  Vector conditioning;  // c + H h
  Vector history;       // mean history feature of earlier tokens
  std::array<Vector, kHeads> probs;
  std::array<std::size_t, kHeads> choice{};
  Rational start;
};

struct GenerationTrace {
  laban::Score score;  // canonical
  std::vector<GenerationStep> steps;
  bool exhausted = false;
  double log_prob = 0.0;
};

/// Samples up to `length` tokens conditioned on `conditioning`.
GenerationTrace generate_trace(const Vector& conditioning, int length, const ComposerParams& comp, std::uint64_t seed);

/// Log-probability that generation emits the score's tokens in canonical
/// order; -inf when the score is off the generation grid.
double sequence_log_prob(const Vector& conditioning, const laban::Score& s, const ComposerParams& comp);

struct GeneratedScore {
  laban::Score score;
  bool exhausted = false;
  double log_prob = 0.0;
};

/// Conditions on condition + guidance_weight * guidance.
GeneratedScore generate_score(const Embedding& condition, const std::optional<Embedding>& guidance,
                              double guidance_weight, int length, const ComposerParams& comp, std::uint64_t seed);

}  // namespace atelier
