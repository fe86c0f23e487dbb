#pragma once

// The two optimization phases of the artist loop.
//
// Phase 1 trains encoders and generator under a frozen reward: a weighted sum
// of reward-regularized similarities between inputs and generated output.
// Phase 2 learns the reward from recorded trajectories by maximum likelihood,
// normalized over an enumerable toy trajectory space.

#include "atelier/composer.hpp"
#include "atelier/embedding.hpp"
#include "atelier/labanstr.hpp"
#include "atelier/vocab.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace atelier {

struct LoopSettings {
  // similarity weights, must sum to 1
  double alpha = 0.4;
  double beta = 0.4;
  double gamma_weight = 0.2;
  double lambda = 0.1;
  double discount0 = 1.0;
  double discount_decay = 0.9;
  SignMode sign_mode = SignMode::penalty;
  double accept_threshold = 0.95;
  int phase2_trigger_count = 3;
  int stagnation_window = 4;
  int trajectory_length = 2;
  double reward_l2 = 1e-3;

  int embedding_dim = kDefaultDim;
  int score_length = 8;
  int candidates = 4;
  double guidance_weight = 0.5;
  int alignment_pairs = 64;
  int alignment_steps = 40;
  double alignment_step_size = 1.0;
  int composer_samples = 2;
  int composer_steps = 40;
  double composer_step_size = 10.0;
  int phase1_steps = 8;
  double phase1_step_size = 0.5;
  // longest parameter step of phase 1 training
  double trust_radius = 0.2;
  int phase2_steps = 30;
  double phase2_step_size = 0.5;
  std::vector<std::string> prompt = {"reach", "arm_r"};
};

/// Validated loop settings; invalid settings are unconstructible.
class LoopConfig {
 public:
  LoopConfig() : LoopConfig(LoopSettings{}) {}
  explicit LoopConfig(LoopSettings settings);

  const LoopSettings& operator*() const { return s_; }
  const LoopSettings* operator->() const { return &s_; }

  /// Flat `key = value` lines; unknown keys are errors, missing keys keep defaults.
  static LoopConfig parse(std::string_view text);
  std::string serialize() const;

 private:
  LoopSettings s_;
};

struct CellDelta {
  std::size_t cell = 0;  // laban::cell_index
  double delta = 0.0;
  friend bool operator==(const CellDelta&, const CellDelta&) = default;
};

/// Structured critique: controlled-vocab words plus signed attribute-cell deltas.
struct Judgement {
  std::vector<std::string> text;
  std::vector<CellDelta> targets;
  friend bool operator==(const Judgement&, const Judgement&) = default;
};

enum class Decision : std::uint8_t { none, resample, retrain_generator, retrain_multimodal, accept };
std::string_view to_string(Decision d);
Decision parse_decision(std::string_view text);

struct FeedbackEvent {
  int iteration = 0;
  double rating = 0.0;
  Judgement judgement;
  Decision decision = Decision::none;
  friend bool operator==(const FeedbackEvent&, const FeedbackEvent&) = default;
};

void validate(const Judgement& j);
void validate(const FeedbackEvent& e);

/// encode_text(words) plus delta times the embedding of a unit token in each cell.
Embedding judgement_to_guidance(const Judgement& j, const Vocab& vocab, const EncoderDecoderParams& enc);
Embedding cell_embedding(std::size_t cell, const EncoderDecoderParams& enc);

struct RewardParams {
  Vector histogram;  // kCells
  Vector judgement;  // d
  Vector bias;       // size 1

  template <class F>
  void visit(F&& f) {
    f("histogram", histogram);
    f("judgement", judgement);
    f("bias", bias);
  }
  template <class F>
  void visit(F&& f) const {
    f("histogram", histogram);
    f("judgement", judgement);
    f("bias", bias);
  }
};

RewardParams zero_reward(int dim);

Vector histogram_vector(const laban::Score& s);

/// R(state, action) = w_h . histogram + w_j . judgement_embedding + b.
double reward_value(const RewardParams& r, const Vector& state_histogram, const Vector& action_embedding);

struct DiscountSchedule {
  double discount0 = 1.0;
  double decay = 0.9;
  double at(int t) const;
};

/// Enumerable state/action space. States are scores summarized by histogram;
/// actions by their judgement embedding. transitions[a](s, s') is the frozen
/// decoder's probability of s' after s under action a.
struct ToySpace {
  std::vector<Vector> state_features;
  std::vector<Vector> action_features;
  std::vector<Matrix> transitions;
  std::vector<bool> initial;  // legal initial states, uniform prior over them

  std::size_t states() const { return state_features.size(); }
  void check() const;
};

/// States X'_0..X'_T and actions A_0..A_{T-1}, as toy-space indices. The
/// final state is rewarded with the empty action.
struct ToyTrajectory {
  std::vector<std::size_t> states;
  std::vector<std::size_t> actions;
  double weight = 1.0;
};

inline constexpr double kMaxEnumerable = 1e6;

/// log p(X'_0) + sum log Q + sum_t gamma_t R(X'_t, A_t) - log Z, where Z sums
/// p(tau) exp(sum_t gamma_t R) over all state sequences under the record's
/// actions. Computed by forward recursion.
double trajectory_loglik(const ToyTrajectory& traj, const RewardParams& reward, const DiscountSchedule& discount,
                         const ToySpace& space, RewardParams* grad = nullptr);

/// Weighted mean log-likelihood minus l2 * ||weights||^2 (bias excluded).
double phase2_objective(const std::vector<ToyTrajectory>& trajs, const RewardParams& reward,
                        const DiscountSchedule& discount, const ToySpace& space, double l2,
                        RewardParams* grad = nullptr);

struct Phase2Result {
  RewardParams reward;
  std::vector<double> trace;
};

Phase2Result phase2_optimize(const std::vector<ToyTrajectory>& trajs, const ToySpace& space, RewardParams reward,
                             const DiscountSchedule& discount, double l2, int steps, double step_size);

/// alpha*SC(x1,x1') + beta*SC(x2,x2') + gamma*dot(z1,z1').
double phase1_objective(const Vector& x1, const Vector& x1p, const Vector& x2, const Vector& x2p, const Vector& z1,
                        const Vector& z1p, const LoopConfig& config, double reward_energy, double theta_norm);

double theta_norm(const EncoderDecoderParams& enc, const ComposerParams& comp);

struct Phase1Item {
  std::vector<std::string> text;
  laban::Score reference;
};

/// Everything Phase 1 holds fixed. Output X' for item i is generated with
/// seed + i, conditioned on encode_text(text) + guidance_weight * guidance.
struct Phase1Problem {
  const Vocab* vocab = nullptr;
  std::vector<Phase1Item> batch;
  LoopConfig config;
  double reward_energy = 0.0;
  Vector guidance;  // empty means none
  double guidance_weight = 0.0;
  int length = 8;
  std::uint64_t seed = 0;
};

/// Expected motion embedding and expected histogram of a rollout under the
/// decoder's per-step distributions.
struct ExpectedOutput {
  Vector embedding;
  Vector histogram;
};
ExpectedOutput expected_output(const GenerationTrace& trace, const EncoderDecoderParams& enc, const ComposerParams& comp);

/// Sampled outputs of the batch at the given parameters.
std::vector<laban::Score> phase1_rollouts(const Phase1Problem& problem, const EncoderDecoderParams& enc,
                                          const ComposerParams& comp);

/// Batch-mean Phase 1 objective. Piecewise smooth: the sampled rollouts are
/// locally constant in the parameters and gradients hold wherever they are.
double phase1_batch_objective(const Phase1Problem& problem, const EncoderDecoderParams& enc,
                              const ComposerParams& comp, EncoderDecoderParams* enc_grad = nullptr,
                              ComposerParams* comp_grad = nullptr);

struct Phase1Result {
  EncoderDecoderParams encoder;
  ComposerParams composer;
  std::vector<double> trace;
};

Phase1Result phase1_optimize(const Phase1Problem& problem, EncoderDecoderParams enc, ComposerParams comp, int steps,
                             double step_size, double max_step_norm = INFINITY);

}  // namespace atelier
