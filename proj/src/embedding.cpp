#include "atelier/embedding.hpp"

#include "atelier/error.hpp"
#include "atelier/optimize.hpp"
#include "atelier/params.hpp"

#include <algorithm>
#include <cmath>

namespace atelier {

using laban::LabanToken;
using laban::Score;

std::array<std::size_t, kFamilies> family_indices(const LabanToken& t) {
  return {laban::index_of(t.action.column),   laban::index_of(t.action.direction),
          laban::index_of(t.action.level),    laban::index_of(t.action.rotation),
          laban::index_of(t.action.flexion),  laban::index_of(t.spatial.path),
          laban::index_of(t.spatial.facing),  laban::index_of(t.spatial.position)};
}

EncoderDecoderParams init_encoder(const Vocab& vocab, int dim, std::uint64_t seed) {
  if (dim <= 0) throw Error(ErrorCode::invalid_argument, "embedding dimension must be positive");
  Rng rng(seed);
  EncoderDecoderParams p;
  p.text = Matrix(static_cast<Eigen::Index>(vocab.size()), dim);
  for (std::size_t i = 0; i < kFamilies; ++i) p.motion[i] = Matrix(static_cast<Eigen::Index>(kFamilySizes[i]), dim);
  p.start = Vector(dim);
  p.duration = Vector(dim);
  p.visit([&](std::string_view, auto& m) { fill_uniform(m, rng, -0.1, 0.1); });
  return p;
}

Embedding encode_text_indices(const std::vector<std::size_t>& words, const EncoderDecoderParams& p) {
  Embedding z = Embedding::Zero(p.dim());
  if (words.empty()) return z;
  // fixed summation order keeps the bag of words exactly order-free
  std::vector<std::size_t> sorted = words;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t w : sorted) z += p.text.row(static_cast<Eigen::Index>(w)).transpose();
  return z / static_cast<double>(words.size());
}

Embedding encode_text(const std::vector<std::string>& words, const Vocab& vocab, const EncoderDecoderParams& p) {
  return encode_text_indices(vocab.indices(words), p);
}

Embedding token_embedding(const LabanToken& t, const EncoderDecoderParams& p) {
  Embedding e = Embedding::Zero(p.dim());
  const auto idx = family_indices(t);
  for (std::size_t f = 0; f < kFamilies; ++f) e += p.motion[f].row(static_cast<Eigen::Index>(idx[f])).transpose();
  e += t.time.start.to_double() * p.start + t.time.duration.to_double() * p.duration;
  return e;
}

namespace {

void require_valid(const Score& s) {
  const auto report = laban::validate_score(s);
  if (!report.ok()) throw Error(ErrorCode::invalid_score, "invalid score: " + report.violations.front().message);
}

}  // namespace

Embedding encode_motion(const Score& s, const EncoderDecoderParams& p) {
  require_valid(s);
  Embedding z = Embedding::Zero(p.dim());
  if (s.tokens.empty()) return z;
  for (const auto& t : laban::canonicalize(s).tokens) z += token_embedding(t, p);
  return (p.pooling_scale / static_cast<double>(s.tokens.size())) * z;
}

void accumulate_text_gradient(const std::vector<std::size_t>& words, const Vector& g, EncoderDecoderParams& grad) {
  if (words.empty()) return;
  const double w = 1.0 / static_cast<double>(words.size());
  for (std::size_t i : words) grad.text.row(static_cast<Eigen::Index>(i)) += w * g.transpose();
}

void accumulate_motion_gradient(const Score& s, const Vector& g, const EncoderDecoderParams& p,
                                EncoderDecoderParams& grad) {
  if (s.tokens.empty()) return;
  const double w = p.pooling_scale / static_cast<double>(s.tokens.size());
  for (const auto& t : s.tokens) {
    const auto idx = family_indices(t);
    for (std::size_t f = 0; f < kFamilies; ++f) grad.motion[f].row(static_cast<Eigen::Index>(idx[f])) += w * g.transpose();
    grad.start += (w * t.time.start.to_double()) * g;
    grad.duration += (w * t.time.duration.to_double()) * g;
  }
}

double dot_similarity(const Vector& x, const Vector& y) {
  if (x.size() != y.size())
    throw Error(ErrorCode::invalid_argument, "dimension mismatch: " + std::to_string(x.size()) + " vs " +
                                                 std::to_string(y.size()));
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

std::string_view to_string(SignMode mode) { return mode == SignMode::penalty ? "penalty" : "as_written"; }

SignMode parse_sign_mode(std::string_view text) {
  if (text == "penalty") return SignMode::penalty;
  if (text == "as_written") return SignMode::as_written;
  throw Error(ErrorCode::invalid_config, "unknown sign_mode '" + std::string(text) + "'");
}

double sign_factor(SignMode mode) { return mode == SignMode::penalty ? -1.0 : 1.0; }

double sc_score(const Vector& x, const Vector& x_prime, double reward_energy, double theta_norm, double lambda,
                SignMode mode) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::invalid_argument, "lambda must be in [0, 1]");
  if (!(theta_norm >= 0.0)) throw Error(ErrorCode::invalid_argument, "theta norm must be >= 0");
  const double similarity = dot_similarity(x, x_prime);
  if (lambda == 0.0) return similarity;
  return similarity + sign_factor(mode) * lambda * std::exp(-reward_energy) * theta_norm;
}

Embedding interpolate_embeddings(const Embedding& a, const Embedding& b, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::invalid_argument, "interpolation weight must be in [0, 1]");
  if (a.size() != b.size()) throw Error(ErrorCode::invalid_argument, "dimension mismatch");
  return (1.0 - t) * a + t * b;
}

double alignment_objective(const std::vector<AlignmentPair>& pairs, const Vocab& vocab,
                           const EncoderDecoderParams& p, EncoderDecoderParams* grad) {
  const std::size_t n = pairs.size();
  if (n < 2) throw Error(ErrorCode::invalid_argument, "alignment needs at least 2 pairs");
  std::vector<std::vector<std::size_t>> words;
  std::vector<Embedding> text;
  std::vector<Embedding> motion;
  for (const auto& pair : pairs) {
    words.push_back(vocab.indices(pair.text));
    text.push_back(encode_text_indices(words.back(), p));
    motion.push_back(encode_motion(pair.motion, p));
  }

  std::vector<Vector> g_text(n, Vector::Zero(p.dim()));
  std::vector<Vector> g_motion(n, Vector::Zero(p.dim()));
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  std::vector<double> logits(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) logits[k++] = dot_similarity(text[i], motion[j]);
    const double lse = log_sum_exp(logits);
    total += dot_similarity(text[i], motion[i]) - lse;
    if (!grad) continue;
    g_text[i] += inv_n * motion[i];
    g_motion[i] += inv_n * text[i];
    k = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double pi = std::exp(logits[k++] - lse);
      g_text[i] -= (inv_n * pi) * motion[j];
      g_motion[j] -= (inv_n * pi) * text[i];
    }
  }
  if (grad) {
    *grad = zeros_like(p);
    for (std::size_t i = 0; i < n; ++i) {
      accumulate_text_gradient(words[i], g_text[i], *grad);
      accumulate_motion_gradient(pairs[i].motion, g_motion[i], p, *grad);
    }
  }
  return total * inv_n;
}

AlignmentResult train_alignment(const std::vector<AlignmentPair>& pairs, const Vocab& vocab,
                                EncoderDecoderParams params, int steps, double step_size, std::uint64_t /*seed*/,
                                double max_step_norm) {
  if (pairs.empty()) throw Error(ErrorCode::invalid_argument, "empty pair list");
  if (pairs.size() < 2) throw Error(ErrorCode::invalid_argument, "alignment needs at least 2 pairs");
  EncoderDecoderParams work = params;
  const Objective f = [&](const Vector& x, Vector* g) {
    assign_flat(work, x);
    if (!g) return alignment_objective(pairs, vocab, work);
    EncoderDecoderParams grad;
    const double v = alignment_objective(pairs, vocab, work, &grad);
    *g = flatten(grad);
    return v;
  };
  auto result = gradient_ascent(flatten(params), f, steps, step_size, max_step_norm);
  assign_flat(params, result.x);
  return {std::move(params), std::move(result.trace)};
}

}  // namespace atelier
