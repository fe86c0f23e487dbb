#include "atelier/composer.hpp"

#include "atelier/error.hpp"
#include "atelier/optimize.hpp"
#include "atelier/params.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace atelier {

using laban::Column;
using laban::Direction;
using laban::Flexion;
using laban::Level;
using laban::Rotation;

std::vector<std::string> TexturalElement::words() const {
  std::vector<std::string> out{verb, noun};
  if (adverb) out.push_back(*adverb);
  return out;
}

std::vector<TexturalElement> parse_textural_elements(const std::vector<std::string>& words, const Vocab& vocab) {
  struct Open {
    std::string verb;
    std::optional<std::string> noun;
    std::optional<std::string> adverb;
  };
  std::vector<Open> open;
  for (const auto& w : words) {
    const VocabEntry& e = vocab.entry(vocab.index(w));
    switch (e.role) {
      case Role::verb:
        open.push_back({w, std::nullopt, std::nullopt});
        break;
      case Role::noun:
        if (open.empty() || open.back().noun)
          throw Error(ErrorCode::invalid_argument, "noun '" + w + "' has no verb to attach to");
        open.back().noun = w;
        break;
      case Role::adverb:
        if (open.empty()) throw Error(ErrorCode::invalid_argument, "verb with no noun: adverb '" + w + "' has no verb");
        open.back().adverb = w;
        break;
    }
  }
  std::vector<TexturalElement> out;
  for (auto& o : open) {
    if (!o.noun) throw Error(ErrorCode::invalid_argument, "verb with no noun: '" + o.verb + "'");
    out.push_back({std::move(o.verb), std::move(*o.noun), std::move(o.adverb)});
  }
  return out;
}

const std::array<Rational, 3>& grid_durations() {
  static const std::array<Rational, 3> d = {Rational(1, 2), Rational(1), Rational(2)};
  return d;
}

ComposerParams init_composer(int dim, std::uint64_t seed) {
  if (dim <= 0) throw Error(ErrorCode::invalid_argument, "embedding dimension must be positive");
  Rng rng(seed);
  ComposerParams p;
  for (std::size_t h = 0; h < kHeads; ++h) {
    p.heads[h] = Matrix(dim, static_cast<Eigen::Index>(kHeadSizes[h]));
    p.bias[h] = Vector(static_cast<Eigen::Index>(kHeadSizes[h]));
  }
  p.history = Matrix(dim, dim);
  p.visit([&](std::string_view, auto& m) { fill_uniform(m, rng, -0.1, 0.1); });
  return p;
}

namespace {

Vector head_probs(const ComposerParams& comp, Head h, const Vector& c, const std::vector<bool>* mask = nullptr) {
  const auto i = static_cast<std::size_t>(h);
  const Vector logits = comp.heads[i].transpose() * c + comp.bias[i];
  return masked_softmax(logits, comp.temperature, mask);
}

Vector element_embedding(const TexturalElement& e, const Vocab& vocab, const EncoderDecoderParams& enc) {
  return encode_text(e.words(), vocab, enc);
}

constexpr std::array<Head, kHeads> kLabelHeads = {Head::column,   Head::duration, Head::direction,
                                                   Head::level,    Head::rotation, Head::flexion};

std::array<std::size_t, kHeads> token_labels(const laban::LabanToken& t) {
  const auto& durations = grid_durations();
  const auto d = std::find(durations.begin(), durations.end(), t.time.duration);
  if (d == durations.end()) throw Error(ErrorCode::invalid_argument, "corpus duration is off the generation grid");
  return {laban::index_of(t.action.column),    static_cast<std::size_t>(d - durations.begin()),
          laban::index_of(t.action.direction), laban::index_of(t.action.level),
          laban::index_of(t.action.rotation),  laban::index_of(t.action.flexion)};
}

Direction mirror(Direction d) {
  switch (d) {
    case Direction::left: return Direction::right;
    case Direction::right: return Direction::left;
    case Direction::left_forward: return Direction::right_forward;
    case Direction::right_forward: return Direction::left_forward;
    case Direction::left_back: return Direction::right_back;
    case Direction::right_back: return Direction::left_back;
    default: return d;
  }
}

Rotation mirror(Rotation r) {
  switch (r) {
    case Rotation::cw_quarter: return Rotation::ccw_quarter;
    case Rotation::ccw_quarter: return Rotation::cw_quarter;
    case Rotation::cw_half: return Rotation::ccw_half;
    case Rotation::ccw_half: return Rotation::cw_half;
    default: return r;
  }
}

bool left_side(Column c) {
  return c == Column::support_l || c == Column::leg_l || c == Column::arm_l;
}

}  // namespace

AttributeDistribution compose_attributes(const TexturalElement& e, const Vocab& vocab,
                                         const EncoderDecoderParams& enc, const ComposerParams& comp) {
  const VocabEntry& noun = vocab.entry(vocab.index(e.noun));
  if (vocab.entry(vocab.index(e.verb)).role != Role::verb || noun.role != Role::noun)
    throw Error(ErrorCode::invalid_argument, "element roles do not match the vocab");
  AttributeDistribution out;
  out.column = *noun.column;
  if (e.adverb) {
    const VocabEntry& adv = vocab.entry(vocab.index(*e.adverb));
    if (adv.role != Role::adverb) throw Error(ErrorCode::invalid_argument, "'" + *e.adverb + "' is not an adverb");
    out.duration_scale = adv.duration_scale;
  }
  const Vector z = element_embedding(e, vocab, enc);
  out.direction = head_probs(comp, Head::direction, z);
  out.level = head_probs(comp, Head::level, z);
  out.rotation = head_probs(comp, Head::rotation, z);
  out.flexion = head_probs(comp, Head::flexion, z);
  return out;
}

laban::ActionAttrs canonical_assignment(const Vocab& vocab, const std::string& verb, const std::string& noun) {
  static const std::map<std::string, laban::ActionAttrs, std::less<>> table = {
      {"lift", {Column::body, Direction::forward, Level::high, Rotation::none, Flexion::extended}},
      {"lower", {Column::body, Direction::forward, Level::low, Rotation::none, Flexion::flexed}},
      {"step", {Column::body, Direction::forward, Level::middle, Rotation::none, Flexion::none}},
      {"turn", {Column::body, Direction::place, Level::middle, Rotation::cw_quarter, Flexion::none}},
      {"reach", {Column::body, Direction::right_forward, Level::high, Rotation::none, Flexion::extended}},
      {"sweep", {Column::body, Direction::right, Level::middle, Rotation::cw_half, Flexion::none}},
      {"bend", {Column::body, Direction::place, Level::low, Rotation::none, Flexion::flexed}},
      {"open", {Column::body, Direction::right, Level::middle, Rotation::none, Flexion::extended}},
  };
  const std::size_t verb_index = vocab.index(verb);
  const VocabEntry& n = vocab.entry(vocab.index(noun));
  if (n.role != Role::noun) throw Error(ErrorCode::invalid_argument, "'" + noun + "' is not a noun");
  laban::ActionAttrs a;
  if (const auto it = table.find(verb); it != table.end()) {
    a = it->second;
  } else {
    a.direction = static_cast<Direction>(verb_index % laban::kDirections);
    a.level = static_cast<Level>(verb_index % laban::kLevels);
    a.rotation = static_cast<Rotation>(verb_index % laban::cardinality<Rotation>());
    a.flexion = static_cast<Flexion>(verb_index % laban::cardinality<Flexion>());
  }
  a.column = *n.column;
  if (left_side(a.column)) {
    a.direction = mirror(a.direction);
    a.rotation = mirror(a.rotation);
  }
  return a;
}

std::vector<CorpusItem> procedural_corpus(const Vocab& vocab, int samples_per_pair, double noise, std::uint64_t seed) {
  if (samples_per_pair < 0) throw Error(ErrorCode::invalid_argument, "samples per pair must be >= 0");
  Rng rng(seed);
  const auto verbs = vocab.words_with_role(Role::verb);
  const auto nouns = vocab.words_with_role(Role::noun);
  const auto adverbs = vocab.words_with_role(Role::adverb);
  std::vector<CorpusItem> corpus;
  for (const auto& verb : verbs) {
    for (const auto& noun : nouns) {
      for (int s = 0; s < samples_per_pair; ++s) {
        CorpusItem item;
        item.element = {verb, noun, std::nullopt};
        if (!adverbs.empty() && rng.uniform() < 0.5) item.element.adverb = adverbs[rng.index(adverbs.size())];
        laban::ActionAttrs a = canonical_assignment(vocab, verb, noun);
        if (rng.uniform() < noise) a.direction = static_cast<Direction>(rng.index(laban::kDirections));
        if (rng.uniform() < noise) a.level = static_cast<Level>(rng.index(laban::kLevels));
        if (rng.uniform() < noise) a.rotation = static_cast<Rotation>(rng.index(laban::cardinality<Rotation>()));
        if (rng.uniform() < noise) a.flexion = static_cast<Flexion>(rng.index(laban::cardinality<Flexion>()));
        item.token.action = a;
        const double scale = item.element.adverb ? vocab.entry(vocab.index(*item.element.adverb)).duration_scale : 1.0;
        item.token.time.duration = scale == 2.0 ? Rational(2) : scale == 0.5 ? Rational(1, 2) : Rational(1);
        corpus.push_back(std::move(item));
      }
    }
  }
  return corpus;
}

std::vector<AlignmentPair> procedural_pairs(const Vocab& vocab, int count, std::uint64_t seed) {
  const auto verbs = vocab.words_with_role(Role::verb);
  const auto nouns = vocab.words_with_role(Role::noun);
  std::vector<std::pair<std::string, std::string>> combos;
  for (const auto& v : verbs)
    for (const auto& n : nouns) combos.emplace_back(v, n);
  if (count < 0 || static_cast<std::size_t>(count) > combos.size())
    throw Error(ErrorCode::invalid_argument, "cannot draw that many distinct pairs");
  Rng rng(seed);
  for (std::size_t i = combos.size(); i > 1; --i) std::swap(combos[i - 1], combos[rng.index(i)]);

  std::vector<AlignmentPair> out;
  for (int i = 0; i < count; ++i) {
    const auto& [verb, noun] = combos[static_cast<std::size_t>(i)];
    AlignmentPair pair;
    pair.text = {verb, noun};
    for (int beat = 0; beat < 2; ++beat) {
      laban::LabanToken t;
      t.action = canonical_assignment(vocab, verb, noun);
      t.time.start = Rational(beat);
      pair.motion.tokens.push_back(t);
    }
    out.push_back(std::move(pair));
  }
  return out;
}

double composer_objective(const std::vector<CorpusItem>& corpus, const Vocab& vocab, const EncoderDecoderParams& enc,
                          const ComposerParams& comp, ComposerParams* grad) {
  if (corpus.empty()) throw Error(ErrorCode::invalid_argument, "empty corpus");
  if (grad) *grad = zeros_like(comp);
  const double inv_n = 1.0 / static_cast<double>(corpus.size());
  double total = 0.0;
  for (const auto& item : corpus) {
    const Vector z = element_embedding(item.element, vocab, enc);
    const auto labels = token_labels(item.token);
    for (std::size_t k = 0; k < kLabelHeads.size(); ++k) {
      const auto h = static_cast<std::size_t>(kLabelHeads[k]);
      const Vector p = head_probs(comp, kLabelHeads[k], z);
      total += std::log(p[static_cast<Eigen::Index>(labels[k])]);
      if (!grad) continue;
      Vector delta = -p;
      delta[static_cast<Eigen::Index>(labels[k])] += 1.0;
      delta *= inv_n / comp.temperature;
      grad->heads[h] += z * delta.transpose();
      grad->bias[h] += delta;
    }
  }

  return total * inv_n;
}

ComposerTrainResult train_composer(const std::vector<CorpusItem>& corpus, const Vocab& vocab,
                                   const EncoderDecoderParams& enc, ComposerParams comp, int steps, double step_size,
                                   std::uint64_t /*seed*/) {
  if (corpus.empty()) throw Error(ErrorCode::invalid_argument, "empty corpus");
  ComposerParams work = comp;
  const Objective f = [&](const Vector& x, Vector* g) {
    assign_flat(work, x);
    if (!g) return composer_objective(corpus, vocab, enc, work);
    ComposerParams grad;
    const double v = composer_objective(corpus, vocab, enc, work, &grad);
    *g = flatten(grad);
    return v;
  };
  auto result = gradient_ascent(flatten(comp), f, steps, step_size);
  assign_flat(comp, result.x);
  return {std::move(comp), std::move(result.trace)};
}

GenerationTrace generate_trace(const Vector& conditioning, int length, const ComposerParams& comp, std::uint64_t seed) {
  if (length < 0) throw Error(ErrorCode::invalid_argument, "length must be >= 0");
  if (conditioning.size() != comp.dim()) throw Error(ErrorCode::invalid_argument, "conditioning dimension mismatch");
  Rng rng(seed);
  GenerationTrace trace;
  const Rational horizon(kHorizonBeats);
  const auto& durations = grid_durations();
  std::array<Rational, laban::kColumns> cursor{};
  Vector feature_sum = Vector::Zero(comp.dim());

  for (int k = 0; k < length; ++k) {
    std::vector<bool> column_mask(laban::kColumns);
    bool any = false;
    for (std::size_t c = 0; c < laban::kColumns; ++c) {
      column_mask[c] = cursor[c] + durations[0] <= horizon;
      any = any || column_mask[c];
    }
    if (!any) {
      trace.exhausted = true;
      break;
    }
    GenerationStep step;
    step.history = k == 0 ? Vector::Zero(comp.dim()) : Vector(feature_sum / static_cast<double>(k));
    step.conditioning = conditioning + comp.history * step.history;

    const auto draw = [&](Head h, const std::vector<bool>* mask) {
      const auto i = static_cast<std::size_t>(h);
      step.probs[i] = head_probs(comp, h, step.conditioning, mask);
      step.choice[i] = rng.categorical(std::span<const double>(step.probs[i].data(), step.probs[i].size()));
      trace.log_prob += std::log(step.probs[i][static_cast<Eigen::Index>(step.choice[i])]);
    };
    draw(Head::column, &column_mask);
    const std::size_t col = step.choice[static_cast<std::size_t>(Head::column)];
    std::vector<bool> duration_mask(durations.size());
    for (std::size_t d = 0; d < durations.size(); ++d) duration_mask[d] = cursor[col] + durations[d] <= horizon;
    draw(Head::duration, &duration_mask);
    draw(Head::direction, nullptr);
    draw(Head::level, nullptr);
    draw(Head::rotation, nullptr);
    draw(Head::flexion, nullptr);

    laban::LabanToken t;
    t.action.column = static_cast<Column>(col);
    t.action.direction = static_cast<Direction>(step.choice[static_cast<std::size_t>(Head::direction)]);
    t.action.level = static_cast<Level>(step.choice[static_cast<std::size_t>(Head::level)]);
    t.action.rotation = static_cast<Rotation>(step.choice[static_cast<std::size_t>(Head::rotation)]);
    t.action.flexion = static_cast<Flexion>(step.choice[static_cast<std::size_t>(Head::flexion)]);
    t.time.start = cursor[col];
    t.time.duration = durations[step.choice[static_cast<std::size_t>(Head::duration)]];
    step.start = t.time.start;
    cursor[col] += t.time.duration;
    trace.score.tokens.push_back(t);

    for (Head h : {Head::column, Head::direction, Head::level}) {
      const auto i = static_cast<std::size_t>(h);
      feature_sum += comp.heads[i].col(static_cast<Eigen::Index>(step.choice[i]));
    }
    trace.steps.push_back(std::move(step));
  }
  trace.score = laban::canonicalize(std::move(trace.score));
  return trace;
}

double sequence_log_prob(const Vector& conditioning, const laban::Score& s, const ComposerParams& comp) {
  if (conditioning.size() != comp.dim()) throw Error(ErrorCode::invalid_argument, "conditioning dimension mismatch");
  const laban::Score canon = laban::canonicalize(s);
  const Rational horizon(kHorizonBeats);
  const auto& durations = grid_durations();
  const laban::SpatialAttrs plain;
  std::array<Rational, laban::kColumns> cursor{};
  Vector feature_sum = Vector::Zero(comp.dim());
  double total = 0.0;
  std::size_t k = 0;
  for (const auto& t : canon.tokens) {
    if (t.spatial.path != plain.path || t.spatial.facing != plain.facing || t.spatial.position != plain.position)
      return -INFINITY;
    const std::size_t col = laban::index_of(t.action.column);
    if (t.time.start != cursor[col]) return -INFINITY;
    std::size_t dur = durations.size();
    for (std::size_t d = 0; d < durations.size(); ++d)
      if (durations[d] == t.time.duration) dur = d;
    if (dur == durations.size()) return -INFINITY;

    std::vector<bool> column_mask(laban::kColumns);
    for (std::size_t c = 0; c < laban::kColumns; ++c) column_mask[c] = cursor[c] + durations[0] <= horizon;
    std::vector<bool> duration_mask(durations.size());
    for (std::size_t d = 0; d < durations.size(); ++d) duration_mask[d] = cursor[col] + durations[d] <= horizon;
    if (!column_mask[col] || !duration_mask[dur]) return -INFINITY;

    const Vector history = k == 0 ? Vector::Zero(comp.dim()) : Vector(feature_sum / static_cast<double>(k));
    const Vector c = conditioning + comp.history * history;
    const std::array<std::size_t, kHeads> choice = {col,
                                                    dur,
                                                    laban::index_of(t.action.direction),
                                                    laban::index_of(t.action.level),
                                                    laban::index_of(t.action.rotation),
                                                    laban::index_of(t.action.flexion)};
    const std::array<Head, kHeads> order = {Head::column, Head::duration, Head::direction,
                                            Head::level,  Head::rotation, Head::flexion};
    for (std::size_t i = 0; i < kHeads; ++i) {
      const std::vector<bool>* mask = i == 0 ? &column_mask : i == 1 ? &duration_mask : nullptr;
      const Vector p = head_probs(comp, order[i], c, mask);
      total += std::log(p[static_cast<Eigen::Index>(choice[i])]);
    }
    cursor[col] += t.time.duration;
    feature_sum += comp.heads[static_cast<std::size_t>(Head::column)].col(static_cast<Eigen::Index>(col));
    feature_sum += comp.heads[static_cast<std::size_t>(Head::direction)].col(static_cast<Eigen::Index>(choice[2]));
    feature_sum += comp.heads[static_cast<std::size_t>(Head::level)].col(static_cast<Eigen::Index>(choice[3]));
    ++k;
  }
  return total;
}

GeneratedScore generate_score(const Embedding& condition, const std::optional<Embedding>& guidance,
                              double guidance_weight, int length, const ComposerParams& comp, std::uint64_t seed) {
  if (!(guidance_weight >= 0.0)) throw Error(ErrorCode::invalid_argument, "guidance weight must be >= 0");
  Vector c = condition;
  if (guidance) {
    if (guidance->size() != condition.size()) throw Error(ErrorCode::invalid_argument, "guidance dimension mismatch");
    c += guidance_weight * *guidance;
  }
  auto trace = generate_trace(c, length, comp, seed);
  return {std::move(trace.score), trace.exhausted, trace.log_prob};
}

}  // namespace atelier
