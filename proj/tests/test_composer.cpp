#include "support.hpp"

#include <doctest.h>

using namespace atelier;

namespace {
const Vocab& vocab() {
  static const Vocab v = Vocab::standard();
  return v;
}
}  // namespace

TEST_CASE("textural elements") {
  auto e = parse_textural_elements({"lift", "arm_l"}, vocab());
  REQUIRE(e.size() == 1);
  CHECK(e[0] == TexturalElement{"lift", "arm_l", std::nullopt});

  e = parse_textural_elements({"lift", "arm_l", "slowly", "step", "leg_r"}, vocab());
  REQUIRE(e.size() == 2);
  CHECK(e[0].adverb == std::optional<std::string>("slowly"));
  CHECK(e[1] == TexturalElement{"step", "leg_r", std::nullopt});

  CHECK_THROWS(parse_textural_elements({"slowly"}, vocab()));
  CHECK_THROWS(parse_textural_elements({"lift"}, vocab()));
  CHECK_THROWS(parse_textural_elements({"lift", "tail"}, vocab()));
}

TEST_CASE("compose_attributes") {
  const auto enc = init_encoder(vocab(), 16, 1);
  const auto comp = init_composer(16, 2);
  const auto d = compose_attributes({"lift", "arm_l", "slowly"}, vocab(), enc, comp);
  for (const Vector* v : {&d.direction, &d.level, &d.rotation, &d.flexion})
    CHECK(std::abs(v->sum() - 1.0) < 1e-9);
  CHECK(d.duration_scale == 2.0);
  CHECK(d.column == laban::Column::arm_l);
  CHECK(compose_attributes({"lift", "arm_l", std::nullopt}, vocab(), enc, comp).duration_scale == 1.0);
}

TEST_CASE("composer gradient matches central differences") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) CHECK(atelier::testing::composer_gradient_error(seed) < 1e-4);
}

TEST_CASE("composer training on the procedural corpus") {
  const auto corpus = procedural_corpus(vocab(), 2, 0.1, 42);
  // the loop trains the composer on an aligned encoder
  const auto enc = train_alignment(procedural_pairs(vocab(), 64, 42), vocab(), init_encoder(vocab(), 16, 42), 40, 1.0, 0).params;
  const auto comp = init_composer(16, 43);

  CHECK(flatten(train_composer(corpus, vocab(), enc, comp, 0, 10.0, 42).params) == flatten(comp));
  CHECK_THROWS(train_composer({}, vocab(), enc, comp, 5, 10.0, 42));

  const auto r = train_composer(corpus, vocab(), enc, comp, 200, 10.0, 42);
  REQUIRE(r.trace.size() > 10);
  for (std::size_t k = 1; k <= 10; ++k) CHECK(r.trace[k] > r.trace[k - 1]);

  int agree = 0, total = 0;
  for (const auto& verb : vocab().words_with_role(Role::verb))
    for (const auto& noun : vocab().words_with_role(Role::noun)) {
      const auto d = compose_attributes({verb, noun, std::nullopt}, vocab(), enc, r.params);
      Eigen::Index best;
      d.direction.maxCoeff(&best);
      agree += static_cast<std::size_t>(best) == laban::index_of(canonical_assignment(vocab(), verb, noun).direction);
      ++total;
    }
  CHECK(agree >= 0.9 * total);

  Eigen::Index best;
  compose_attributes({"lift", "arm_l", std::nullopt}, vocab(), enc, r.params).direction.maxCoeff(&best);
  CHECK(static_cast<std::size_t>(best) == laban::index_of(canonical_assignment(vocab(), "lift", "arm_l").direction));
}

TEST_CASE("generation") {
  const auto comp = init_composer(16, 5);
  Rng rng(6);
  const Vector c = atelier::testing::random_vector(rng, 16);
  const Vector g = atelier::testing::random_vector(rng, 16);

  CHECK(generate_score(c, std::nullopt, 0.0, 0, comp, 1).score.tokens.empty());

  const auto a = generate_score(c, g, 0.7, 10, comp, 9);
  CHECK(laban::serialize_score(a.score) == laban::serialize_score(generate_score(c, g, 0.7, 10, comp, 9).score));
  CHECK(a.score.tokens.size() == 10);

  const Vector g2 = atelier::testing::random_vector(rng, 16);
  CHECK(laban::serialize_score(generate_score(c, g, 0.0, 10, comp, 9).score) ==
        laban::serialize_score(generate_score(c, g2, 0.0, 10, comp, 9).score));
  CHECK(laban::serialize_score(generate_score(c, g, 0.5, 10, comp, 9).score) ==
        laban::serialize_score(generate_score(c + 0.5 * g - 0.5 * g2, g2, 0.5, 10, comp, 9).score));
  CHECK_THROWS(generate_score(c, g, -1.0, 4, comp, 1));
  CHECK_THROWS(generate_score(c, g, 1.0, -1, comp, 1));
}

TEST_CASE("generated scores are always valid and on the grid") {
  const auto comp = init_composer(16, 7);
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const Vector c = atelier::testing::random_vector(rng, 16, 3.0);
    const auto out = generate_score(c, std::nullopt, 0.0, 1 + static_cast<int>(rng.index(40)), comp, rng.next());
    REQUIRE(laban::validate_score(out.score).ok());
    REQUIRE(out.score == laban::canonicalize(out.score));
    for (const auto& t : out.score.tokens) {
      REQUIRE((t.time.start * Rational(2)).den() == 1);
      REQUIRE(t.end() <= Rational(kHorizonBeats));
    }
    CHECK(std::isfinite(sequence_log_prob(c, out.score, comp)));
  }
}

TEST_CASE("an exhausted grid returns a shorter score with a flag") {
  const auto comp = init_composer(16, 9);
  const auto out = generate_score(Vector::Zero(16), std::nullopt, 0.0, 500, comp, 3);
  CHECK(out.exhausted);
  CHECK(out.score.tokens.size() < 500);
  CHECK(laban::validate_score(out.score).ok());
}

TEST_CASE("sequence log-probability is normalized over one-token scores") {
  const auto comp = init_composer(16, 11);
  Rng rng(12);
  const Vector c = atelier::testing::random_vector(rng, 16, 2.0);
  double mass = 0.0;
  for (std::size_t col = 0; col < laban::kColumns; ++col)
    for (const Rational& dur : grid_durations())
      for (std::size_t d = 0; d < laban::kDirections; ++d)
        for (std::size_t l = 0; l < laban::kLevels; ++l)
          for (std::size_t r = 0; r < laban::cardinality<laban::Rotation>(); ++r)
            for (std::size_t f = 0; f < laban::cardinality<laban::Flexion>(); ++f) {
              laban::Score s;
              laban::LabanToken t;
              t.action = {static_cast<laban::Column>(col), static_cast<laban::Direction>(d), static_cast<laban::Level>(l),
                          static_cast<laban::Rotation>(r), static_cast<laban::Flexion>(f)};
              t.time.duration = dur;
              s.tokens.push_back(t);
              mass += std::exp(sequence_log_prob(c, s, comp));
            }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));

  for (int i = 0; i < 10; ++i) {
    const auto out = generate_trace(c, 1, comp, rng.next());
    CHECK(sequence_log_prob(c, out.score, comp) == doctest::Approx(out.log_prob).epsilon(1e-12));
  }
  const auto longer = generate_trace(c, 6, comp, 5);
  double sum = 0.0;
  for (const auto& step : longer.steps)
    for (std::size_t h = 0; h < kHeads; ++h) sum += std::log(step.probs[h][static_cast<Eigen::Index>(step.choice[h])]);
  CHECK(sum == doctest::Approx(longer.log_prob).epsilon(1e-12));

  laban::Score off;
  off.tokens.resize(1);
  off.tokens[0].time.duration = Rational(1, 4);
  CHECK(sequence_log_prob(Vector::Zero(16), off, comp) == -INFINITY);
}
