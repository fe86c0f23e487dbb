#pragma once

// The artist loop as a stage machine. Each flow_step runs one stage's work,
// logs it, and moves along the fixed edge set:
//
//   MultimodalTrain -> GeneratorTrain -> Generate -> ArtistEval
//   ArtistEval -> Accepted | Generate | RewardLearn | GeneratorTrain | MultimodalTrain
//   RewardLearn -> GeneratorTrain | MultimodalTrain

#include "atelier/composer.hpp"
#include "atelier/embedding.hpp"
#include "atelier/engine.hpp"
#include "atelier/event_log.hpp"
#include "atelier/vocab.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace atelier {

enum class Stage : std::uint8_t { multimodal_train, generator_train, generate, artist_eval, reward_learn, accepted };
std::string_view to_string(Stage s);
Stage parse_stage(std::string_view text);
bool is_edge(Stage from, Stage to);

/// Feedback windows used for reward learning, as recorded scores and judgements.
struct TrajectoryRecord {
  std::vector<laban::Score> states;            // X'_0..X'_T
  std::vector<Judgement> actions;              // A_0..A_{T-1}
  std::vector<std::vector<std::string>> conditions;
  std::vector<double> log_probs;               // decoder log-probability of each state
  double weight = 1.0;
};

/// Cap on distinct states in the session's reward-learning space.
inline constexpr std::size_t kMaxToyStates = 24;
inline constexpr double kTransitionFloor = 1e-3;

struct SessionState {
  LoopConfig config;
  Vocab vocab;
  std::uint64_t seed = 0;
  Rng rng{0};
  EncoderDecoderParams encoder;
  ComposerParams composer;
  RewardParams reward;
  bool composer_pretrained = false;

  Stage stage = Stage::multimodal_train;
  int iteration = 0;  // feedback events so far
  std::optional<laban::Score> latest;
  std::vector<FeedbackEvent> feedback;
  std::vector<laban::Score> rated;  // the score each feedback judged
  std::vector<TrajectoryRecord> trajectories;
  int feedback_since_reward = 0;
  double best_rating = 0.0;
  int best_at = 0;  // feedback count when best_rating was set
};

/// One stage of work plus its transition. Events go to an in-memory log and,
/// when set, to a sink (a file log, for instance).
class Session {
 public:
  using Sink = std::function<void(const Event&)>;

  Session(LoopConfig config, Vocab vocab, std::uint64_t seed, Clock clock = logical_time, Sink sink = {});

  const SessionState& state() const { return state_; }
  Stage stage() const { return state_.stage; }
  const std::vector<Event>& events() const { return events_; }
  void set_sink(Sink sink) { sink_ = std::move(sink); }

  /// Runs the current stage. A feedback event is required exactly at ArtistEval.
  Stage flow_step(const std::optional<FeedbackEvent>& event = std::nullopt);

  /// Ratings in feedback order.
  std::vector<double> ratings() const;

 private:
  void emit(EventKind kind, Json payload);
  void enter(Stage next);
  Stage run_multimodal();
  Stage run_generator();
  Stage run_generate();
  Stage run_eval(FeedbackEvent event);
  Stage run_reward();

  Vector prompt_embedding() const;
  std::optional<Vector> current_guidance() const;
  double reward_energy() const;

  SessionState state_;
  Clock clock_;
  Sink sink_;
  std::vector<Event> events_;
};

/// Supplies feedback for a generated score at a given iteration.
using FeedbackSource = std::function<FeedbackEvent(const laban::Score& latest, int iteration)>;

/// Steps until Accepted or until `max_iterations` feedback events. A session
/// already past that count is returned unchanged.
void drive(Session& session, const FeedbackSource& source, int max_iterations);

Session run_session(const LoopConfig& config, const Vocab& vocab, const FeedbackSource& source, int max_iterations,
                    std::uint64_t seed);

/// Rebuilds a session by re-executing its log: stages are rerun and the logged
/// feedback is fed back at each ArtistEval. Every regenerated event must match
/// the log (timestamps excepted); a torn tail is regenerated.
Session session_load(const std::vector<Event>& log, Clock clock = logical_time);
Session session_load(const std::filesystem::path& path, Clock clock = logical_time);

/// Stage edges of a log; throws invalid_transition at the first one outside the graph.
void lint_log(const std::vector<Event>& log);

}  // namespace atelier
