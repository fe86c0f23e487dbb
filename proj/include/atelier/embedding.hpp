#pragma once

// The shared text/motion embedding space: encoders, dot similarity, the
// reward-regularized similarity score, contrastive alignment, interpolation.

#include "atelier/labanstr.hpp"
#include "atelier/numeric.hpp"
#include "atelier/vocab.hpp"

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace atelier {

using Embedding = Vector;

inline constexpr int kDefaultDim = 16;

/// Enum families of a token, in table order.
enum class Family : std::uint8_t { column, direction, level, rotation, flexion, path, facing, position };
inline constexpr std::size_t kFamilies = 8;
inline constexpr std::array<std::size_t, kFamilies> kFamilySizes = {
    laban::cardinality<laban::Column>(),   laban::cardinality<laban::Direction>(),
    laban::cardinality<laban::Level>(),    laban::cardinality<laban::Rotation>(),
    laban::cardinality<laban::Flexion>(),  laban::cardinality<laban::Path>(),
    laban::cardinality<laban::Facing>(),   laban::cardinality<laban::Position>()};
inline constexpr std::array<std::string_view, kFamilies> kFamilyNames = {
    "column", "direction", "level", "rotation", "flexion", "path", "facing", "position"};

std::array<std::size_t, kFamilies> family_indices(const laban::LabanToken& t);

/// Encoder parameters. The decoder side of the generator lives in
/// ComposerParams (see composer.hpp).
struct EncoderDecoderParams {
  Matrix text;                           // vocab x d
  std::array<Matrix, kFamilies> motion;  // cardinality x d per family
  Vector start;                          // d, scaled by start beats
  Vector duration;                       // d, scaled by duration beats
  double pooling_scale = 1.0;            // fixed, not trained

  Eigen::Index dim() const { return text.cols(); }

  template <class F>
  void visit(F&& f) {
    f("text", text);
    for (std::size_t i = 0; i < kFamilies; ++i) f(kFamilyNames[i], motion[i]);
    f("start", start);
    f("duration", duration);
  }
  template <class F>
  void visit(F&& f) const {
    f("text", text);
    for (std::size_t i = 0; i < kFamilies; ++i) f(kFamilyNames[i], motion[i]);
    f("start", start);
    f("duration", duration);
  }
};

/// Uniform init in [-0.1, 0.1] from the seeded generator.
EncoderDecoderParams init_encoder(const Vocab& vocab, int dim, std::uint64_t seed);

Embedding encode_text(const std::vector<std::string>& words, const Vocab& vocab, const EncoderDecoderParams& p);
Embedding encode_text_indices(const std::vector<std::size_t>& words, const EncoderDecoderParams& p);
Embedding encode_motion(const laban::Score& s, const EncoderDecoderParams& p);
/// Summed row vector of a single token (before pooling).
Embedding token_embedding(const laban::LabanToken& t, const EncoderDecoderParams& p);

/// Gradient accumulation for the linear encoders: adds d(g . encode)/dparams.
void accumulate_text_gradient(const std::vector<std::size_t>& words, const Vector& g, EncoderDecoderParams& grad);
void accumulate_motion_gradient(const laban::Score& s, const Vector& g, const EncoderDecoderParams& p,
                                EncoderDecoderParams& grad);

double dot_similarity(const Vector& x, const Vector& y);

enum class SignMode : std::uint8_t { penalty, as_written };
std::string_view to_string(SignMode mode);
SignMode parse_sign_mode(std::string_view text);

/// Weight of the parameter-norm term: +1 as written, -1 as a penalty.
double sign_factor(SignMode mode);

/// dot(x, x') +/- lambda * exp(-R) * theta_norm.
double sc_score(const Vector& x, const Vector& x_prime, double reward_energy, double theta_norm, double lambda,
                SignMode mode = SignMode::penalty);

Embedding interpolate_embeddings(const Embedding& a, const Embedding& b, double t);

struct AlignmentPair {
  std::vector<std::string> text;
  laban::Score motion;
};

/// Mean over pairs of matched dot minus log-sum-exp over in-batch mismatches.
double alignment_objective(const std::vector<AlignmentPair>& pairs, const Vocab& vocab,
                           const EncoderDecoderParams& p, EncoderDecoderParams* grad = nullptr);

struct AlignmentResult {
  EncoderDecoderParams params;
  std::vector<double> trace;
};

/// The seed names the run; the procedure itself draws nothing, so equal
/// inputs always give bit-identical parameters.
AlignmentResult train_alignment(const std::vector<AlignmentPair>& pairs, const Vocab& vocab,
                                EncoderDecoderParams params, int steps, double step_size, std::uint64_t seed,
                                double max_step_norm = INFINITY);

}  // namespace atelier
