#pragma once

// Shared test fixtures: random scores, finite differences, the brute-force
// trajectory oracle, and the planted-reward recovery study.

#include "atelier/artistio.hpp"
#include "atelier/composer.hpp"
#include "atelier/embedding.hpp"
#include "atelier/engine.hpp"
#include "atelier/labanstr.hpp"
#include "atelier/numeric.hpp"
#include "atelier/params.hpp"
#include "atelier/session.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace atelier::testing {

template <class E>
E random_enum(Rng& rng) {
  return static_cast<E>(rng.index(laban::cardinality<E>()));
}

inline laban::LabanToken random_token(Rng& rng, const laban::Meter& meter) {
  static const Rational durations[] = {Rational(1, 4), Rational(1, 2), Rational(1), Rational(3, 2), Rational(2)};
  laban::LabanToken t;
  t.time.meter = meter;
  t.time.start = Rational(static_cast<std::int64_t>(rng.index(32)), 4);
  t.time.duration = durations[rng.index(5)];
  t.spatial = {random_enum<laban::Path>(rng), random_enum<laban::Facing>(rng), random_enum<laban::Position>(rng)};
  t.action = {random_enum<laban::Column>(rng), random_enum<laban::Direction>(rng), random_enum<laban::Level>(rng),
              random_enum<laban::Rotation>(rng), random_enum<laban::Flexion>(rng)};
  return t;
}

/// A valid score: tokens per column are laid end to end with random gaps.
inline laban::Score random_valid_score(Rng& rng, std::size_t tokens) {
  static const laban::Meter meters[] = {{4, 4}, {3, 4}, {6, 8}};
  laban::Score s;
  s.meter = meters[rng.index(3)];
  std::array<Rational, laban::kColumns> cursor{};
  for (std::size_t i = 0; i < tokens; ++i) {
    laban::LabanToken t = random_token(rng, s.meter);
    auto& c = cursor[laban::index_of(t.action.column)];
    t.time.start = c + Rational(static_cast<std::int64_t>(rng.index(3)), 2);
    c = t.end();
    s.tokens.push_back(t);
  }
  return s;
}

/// Any score, overlaps included.
inline laban::Score random_score(Rng& rng, std::size_t tokens) {
  laban::Score s;
  for (std::size_t i = 0; i < tokens; ++i) s.tokens.push_back(random_token(rng, s.meter));
  return s;
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

/// Central differences of f at x on the listed coordinates (all when empty).
inline Vector central_differences(const std::function<double(const Vector&)>& f, const Vector& x, double h,
                                  const std::vector<Eigen::Index>& coords = {}) {
  Vector g = Vector::Zero(x.size());
  std::vector<Eigen::Index> all = coords;
  if (all.empty()) {
    all.resize(static_cast<std::size_t>(x.size()));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
  }
  Vector y = x;
  for (Eigen::Index i : all) {
    y[i] = x[i] + h;
    const double up = f(y);
    y[i] = x[i] - h;
    const double down = f(y);
    y[i] = x[i];
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline Vector random_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  Vector v(n);
  fill_uniform(v, rng, -scale, scale);
  return v;
}

/// Row-stochastic n x n matrix with entries bounded away from zero.
inline Matrix random_stochastic(Rng& rng, std::size_t n) {
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  fill_uniform(m, rng, 0.1, 1.0);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) /= m.row(i).sum();
  return m;
}

inline ToySpace random_space(Rng& rng, std::size_t states, std::size_t actions, int dim) {
  ToySpace space;
  for (std::size_t s = 0; s < states; ++s) {
    Vector h = Vector::Zero(laban::kCells);
    for (int k = 0; k < 3; ++k) h[static_cast<Eigen::Index>(rng.index(laban::kCells))] += 1.0 / 3.0;
    space.state_features.push_back(h);
  }
  for (std::size_t a = 0; a < actions; ++a) {
    space.action_features.push_back(random_vector(rng, dim));
    space.transitions.push_back(random_stochastic(rng, states));
  }
  space.initial.assign(states, true);
  return space;
}

inline RewardParams random_reward(Rng& rng, int dim, double scale = 1.0) {
  RewardParams r = zero_reward(dim);
  r.histogram = random_vector(rng, static_cast<Eigen::Index>(laban::kCells), scale);
  r.judgement = random_vector(rng, dim, scale);
  r.bias = random_vector(rng, 1, scale);
  return r;
}

/// Every state sequence of length T+1, in lexicographic order.
inline std::vector<std::vector<std::size_t>> all_state_sequences(std::size_t states, std::size_t length) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> seq(length, 0);
  while (true) {
    out.push_back(seq);
    std::size_t i = length;
    while (i > 0 && ++seq[i - 1] == states) seq[--i] = 0;
    if (i == 0) break;
  }
  return out;
}

struct OracleValue {
  double value = 0.0;
  Vector grad;  // flattened like RewardParams
};

/// Direct enumeration of every state sequence under the record's actions.
inline OracleValue brute_force_loglik(const ToyTrajectory& traj, const RewardParams& reward,
                                      const DiscountSchedule& discount, const ToySpace& space) {
  const std::size_t T = traj.actions.size();
  const double legal = static_cast<double>(std::count(space.initial.begin(), space.initial.end(), true));
  auto reward_at = [&](std::size_t t, std::size_t s) {
    double r = reward.histogram.dot(space.state_features[s]) + reward.bias[0];
    if (t < T) r += reward.judgement.dot(space.action_features[traj.actions[t]]);
    return r;
  };
  auto features = [&](const std::vector<std::size_t>& seq) {
    RewardParams f = zero_reward(static_cast<int>(reward.judgement.size()));
    for (std::size_t t = 0; t <= T; ++t) {
      const double g = discount.at(static_cast<int>(t));
      f.histogram += g * space.state_features[seq[t]];
      if (t < T) f.judgement += g * space.action_features[traj.actions[t]];
      f.bias[0] += g;
    }
    return flatten(f);
  };
  auto log_weight = [&](const std::vector<std::size_t>& seq) {
    if (!space.initial[seq[0]]) return -std::numeric_limits<double>::infinity();
    double lw = -std::log(legal);
    for (std::size_t t = 0; t < T; ++t)
      lw += std::log(space.transitions[traj.actions[t]](static_cast<Eigen::Index>(seq[t]),
                                                        static_cast<Eigen::Index>(seq[t + 1])));
    for (std::size_t t = 0; t <= T; ++t) lw += discount.at(static_cast<int>(t)) * reward_at(t, seq[t]);
    return lw;
  };

  const auto seqs = all_state_sequences(space.states(), T + 1);
  std::vector<double> lws;
  for (const auto& seq : seqs) lws.push_back(log_weight(seq));
  const double log_z = log_sum_exp(lws);

  OracleValue out;
  out.value = log_weight(traj.states) - log_z;
  out.grad = features(traj.states);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const double p = std::exp(lws[i] - log_z);
    if (p > 0.0) out.grad -= p * features(seqs[i]);
  }
  return out;
}

inline std::vector<double> ranks(const std::vector<double>& xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> r(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

struct RecoveryStudy {
  std::vector<double> planted;
  std::vector<double> learned;
  double spearman = 0.0;
  std::vector<double> trace;
};

/// Eight states, each a point mass on its own cell; trajectories of length
/// T+1 = 3 are drawn from the reward-tilted path distribution of a planted
/// reward, then the reward is learned back from zero.
inline RecoveryStudy reward_recovery(std::uint64_t seed, int trajectories = 400) {
  constexpr std::size_t kStates = 8;
  constexpr std::size_t kActions = 2;
  constexpr int kDim = 4;
  Rng rng(seed);
  ToySpace space;
  for (std::size_t s = 0; s < kStates; ++s) {
    Vector h = Vector::Zero(laban::kCells);
    h[static_cast<Eigen::Index>(s * 7)] = 1.0;
    space.state_features.push_back(h);
  }
  for (std::size_t a = 0; a < kActions; ++a) {
    space.action_features.push_back(random_vector(rng, kDim));
    space.transitions.push_back(random_stochastic(rng, kStates));
  }
  space.initial.assign(kStates, true);

  RewardParams planted = zero_reward(kDim);
  for (std::size_t s = 0; s < kStates; ++s) planted.histogram[static_cast<Eigen::Index>(s * 7)] = rng.uniform(-1.0, 1.0);
  const DiscountSchedule discount{1.0, 0.9};

  std::vector<ToyTrajectory> trajs;
  const auto seqs = all_state_sequences(kStates, 3);
  for (int n = 0; n < trajectories; ++n) {
    ToyTrajectory probe;
    probe.actions = {rng.index(kActions), rng.index(kActions)};
    std::vector<double> weights;
    for (const auto& seq : seqs) {
      probe.states = seq;
      weights.push_back(std::exp(trajectory_loglik(probe, planted, discount, space)));
    }
    probe.states = seqs[rng.categorical(weights)];
    trajs.push_back(probe);
  }

  auto result = phase2_optimize(trajs, space, zero_reward(kDim), discount, 1e-3, 200, 1.0);
  RecoveryStudy study;
  for (std::size_t s = 0; s < kStates; ++s) {
    study.planted.push_back(planted.histogram.dot(space.state_features[s]));
    study.learned.push_back(result.reward.histogram.dot(space.state_features[s]));
  }
  study.spearman = spearman(study.planted, study.learned);
  study.trace = std::move(result.trace);
  return study;
}

/// Relative error of the analytic alignment gradient at a seeded point.
inline double alignment_gradient_error(std::uint64_t seed) {
  const Vocab vocab = Vocab::standard();
  auto pairs = procedural_pairs(vocab, 2, seed);
  Rng rng(seed);
  EncoderDecoderParams p = init_encoder(vocab, 6, seed);
  assign_flat(p, random_vector(rng, flatten(p).size(), 0.5));
  EncoderDecoderParams g = zeros_like(p);
  alignment_objective(pairs, vocab, p, &g);
  const Vector x = flatten(p);
  const Vector fd = central_differences(
      [&](const Vector& y) {
        EncoderDecoderParams q = p;
        assign_flat(q, y);
        return alignment_objective(pairs, vocab, q);
      },
      x, 1e-5);
  return relative_error(flatten(g), fd);
}

inline double composer_gradient_error(std::uint64_t seed) {
  const Vocab vocab = Vocab::standard();
  auto corpus = procedural_corpus(vocab, 1, 0.3, seed);
  corpus.resize(12);
  Rng rng(seed);
  const EncoderDecoderParams enc = init_encoder(vocab, 6, seed);
  ComposerParams comp = init_composer(6, seed + 1);
  assign_flat(comp, random_vector(rng, flatten(comp).size(), 0.5));
  ComposerParams g = zeros_like(comp);
  composer_objective(corpus, vocab, enc, comp, &g);
  const Vector fd = central_differences(
      [&](const Vector& y) {
        ComposerParams q = comp;
        assign_flat(q, y);
        return composer_objective(corpus, vocab, enc, q);
      },
      flatten(comp), 1e-5);
  return relative_error(flatten(g), fd);
}

struct Phase1GradientCheck {
  double error = 0.0;
  std::size_t compared = 0;
  std::size_t skipped = 0;  // coordinates whose perturbation changes a sampled rollout
};

/// Phase 1 gradient on a 2-item batch. The objective is piecewise smooth in
/// the parameters, so coordinates where a +-h perturbation changes a sampled
/// rollout are excluded from the comparison.
inline Phase1GradientCheck phase1_gradient_error(std::uint64_t seed, const Vocab& vocab) {
  constexpr int kDim = 6;
  constexpr double h = 1e-5;
  Rng rng(seed);
  LoopSettings settings;
  settings.lambda = 0.3;
  Phase1Problem problem;
  problem.vocab = &vocab;
  for (auto& pair : procedural_pairs(vocab, 2, seed)) problem.batch.push_back({pair.text, pair.motion});
  problem.config = LoopConfig(settings);
  problem.reward_energy = 0.5;
  problem.guidance = random_vector(rng, kDim, 0.2);
  problem.guidance_weight = 0.7;
  problem.length = 4;
  problem.seed = seed;

  EncoderDecoderParams enc = init_encoder(vocab, kDim, seed);
  ComposerParams comp = init_composer(kDim, seed + 1);
  assign_flat(enc, random_vector(rng, flatten(enc).size(), 0.3));
  assign_flat(comp, random_vector(rng, flatten(comp).size(), 0.3));

  EncoderDecoderParams eg = zeros_like(enc);
  ComposerParams cg = zeros_like(comp);
  phase1_batch_objective(problem, enc, comp, &eg, &cg);
  Vector analytic(flatten(enc).size() + flatten(comp).size());
  analytic << flatten(eg), flatten(cg);
  const Vector x = (Vector(analytic.size()) << flatten(enc), flatten(comp)).finished();
  const Eigen::Index ne = flatten(enc).size();

  auto unpack = [&](const Vector& y) {
    EncoderDecoderParams e = enc;
    ComposerParams c = comp;
    assign_flat(e, y.head(ne));
    assign_flat(c, y.tail(y.size() - ne));
    return std::pair{e, c};
  };
  const auto base = phase1_rollouts(problem, enc, comp);
  std::vector<Eigen::Index> coords;
  Phase1GradientCheck out;
  Vector y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    bool stable = true;
    for (double s : {h, -h}) {
      y[i] = x[i] + s;
      const auto [e, c] = unpack(y);
      stable = stable && phase1_rollouts(problem, e, c) == base;
    }
    y[i] = x[i];
    if (stable) {
      coords.push_back(i);
    } else {
      ++out.skipped;
    }
  }
  const Vector fd = central_differences(
      [&](const Vector& z) {
        const auto [e, c] = unpack(z);
        return phase1_batch_objective(problem, e, c);
      },
      x, h, coords);
  Vector a(static_cast<Eigen::Index>(coords.size())), b(static_cast<Eigen::Index>(coords.size()));
  for (std::size_t k = 0; k < coords.size(); ++k) {
    a[static_cast<Eigen::Index>(k)] = analytic[coords[k]];
    b[static_cast<Eigen::Index>(k)] = fd[coords[k]];
  }
  out.error = relative_error(a, b);
  out.compared = coords.size();
  return out;
}

inline double phase2_gradient_error(std::uint64_t seed) {
  Rng rng(seed);
  const ToySpace space = random_space(rng, 3, 2, 4);
  std::vector<ToyTrajectory> trajs;
  for (int n = 0; n < 4; ++n) {
    ToyTrajectory t;
    t.states = {rng.index(3), rng.index(3), rng.index(3)};
    t.actions = {rng.index(2), rng.index(2)};
    t.weight = rng.uniform(0.5, 1.5);
    trajs.push_back(t);
  }
  const RewardParams reward = random_reward(rng, 4, 0.5);
  const DiscountSchedule discount{1.0, 0.8};
  RewardParams g;
  phase2_objective(trajs, reward, discount, space, 0.01, &g);
  const Vector fd = central_differences(
      [&](const Vector& y) {
        RewardParams r = reward;
        assign_flat(r, y);
        return phase2_objective(trajs, r, discount, space, 0.01);
      },
      flatten(reward), 1e-5);
  return relative_error(flatten(g), fd);
}

/// Target of the end-to-end loop runs.
inline constexpr const char* kLoopOracle =
    "rmax 1\n"
    "budget 3\n"
    "cell arm_r right_forward high 0.5\n"
    "cell arm_l left_forward high 0.25\n"
    "cell leg_r forward middle 0.25\n";

inline FeedbackSource oracle_source(const OracleSpec& spec) {
  return [spec](const laban::Score& s, int) { return scripted_feedback(spec, s); };
}

/// Small, quick settings for flow tests.
inline LoopSettings quick_settings() {
  LoopSettings s;
  s.embedding_dim = 8;
  s.score_length = 4;
  s.candidates = 2;
  s.alignment_pairs = 8;
  s.alignment_steps = 3;
  s.composer_steps = 3;
  s.phase1_steps = 2;
  s.phase2_steps = 3;
  return s;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("atelier-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace atelier::testing
