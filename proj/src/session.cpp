#include "atelier/session.hpp"

#include "atelier/artistio.hpp"
#include "atelier/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace atelier {

namespace {

constexpr std::array<std::string_view, 6> kStageNames = {"MultimodalTrain", "GeneratorTrain", "Generate",
                                                         "ArtistEval",      "RewardLearn",    "Accepted"};

Json trace_json(const std::vector<double>& trace) {
  Json a = Json::array();
  for (double v : trace) a.push_back(v);
  return a;
}

}  // namespace

std::string_view to_string(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

Stage parse_stage(std::string_view text) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i)
    if (kStageNames[i] == text) return static_cast<Stage>(i);
  throw Error(ErrorCode::unknown_enum, "unknown stage '" + std::string(text) + "'");
}

bool is_edge(Stage from, Stage to) {
  switch (from) {
    case Stage::multimodal_train: return to == Stage::generator_train;
    case Stage::generator_train: return to == Stage::generate;
    case Stage::generate: return to == Stage::artist_eval;
    case Stage::artist_eval:
      return to == Stage::accepted || to == Stage::generate || to == Stage::reward_learn ||
             to == Stage::generator_train || to == Stage::multimodal_train;
    case Stage::reward_learn: return to == Stage::generator_train || to == Stage::multimodal_train;
    case Stage::accepted: return false;
  }
  return false;
}

Session::Session(LoopConfig config, Vocab vocab, std::uint64_t seed, Clock clock, Sink sink)
    : clock_(std::move(clock)), sink_(std::move(sink)) {
  state_.config = std::move(config);
  state_.vocab = std::move(vocab);
  state_.seed = seed;
  state_.rng = Rng(seed);
  state_.vocab.indices(state_.config->prompt);
  const int dim = state_.config->embedding_dim;
  state_.encoder = init_encoder(state_.vocab, dim, state_.rng.next());
  state_.composer = init_composer(dim, state_.rng.next());
  state_.reward = zero_reward(dim);
  emit(EventKind::session_created, Json{{"version", 1},
                                        {"seed", seed},
                                        {"stage", to_string(state_.stage)},
                                        {"config", state_.config.serialize()},
                                        {"vocab", state_.vocab.serialize()}});
}

void Session::emit(EventKind kind, Json payload) {
  Event e;
  e.seq = events_.size() + 1;
  e.iso_time = clock_(e.seq);
  e.kind = kind;
  e.payload = std::move(payload);
  events_.push_back(e);
  if (sink_) sink_(events_.back());
}

void Session::enter(Stage next) {
  if (!is_edge(state_.stage, next))
    throw Error(ErrorCode::invalid_transition,
                std::string(to_string(state_.stage)) + " -> " + std::string(to_string(next)) + " is not a flow edge");
  emit(EventKind::stage_entered,
       Json{{"from", to_string(state_.stage)}, {"to", to_string(next)}, {"iteration", state_.iteration}});
  state_.stage = next;
}

std::vector<double> Session::ratings() const {
  std::vector<double> out;
  for (const auto& f : state_.feedback) out.push_back(f.rating);
  return out;
}

Vector Session::prompt_embedding() const { return encode_text(state_.config->prompt, state_.vocab, state_.encoder); }

std::optional<Vector> Session::current_guidance() const {
  if (state_.feedback.empty()) return std::nullopt;
  return judgement_to_guidance(state_.feedback.back().judgement, state_.vocab, state_.encoder);
}

double Session::reward_energy() const {
  const auto& fb = state_.feedback;
  if (fb.empty()) return 0.0;
  const std::size_t n = std::min<std::size_t>(fb.size(), static_cast<std::size_t>(state_.config->phase2_trigger_count));
  double s = 0.0;
  for (std::size_t i = fb.size() - n; i < fb.size(); ++i) s += fb[i].rating;
  return std::max(0.0, s / static_cast<double>(n));
}

Stage Session::flow_step(const std::optional<FeedbackEvent>& event) {
  const Stage stage = state_.stage;
  if (stage == Stage::accepted) throw Error(ErrorCode::invalid_transition, "session already accepted");
  if (stage == Stage::artist_eval && !event) throw Error(ErrorCode::invalid_argument, "ArtistEval needs a feedback event");
  if (stage != Stage::artist_eval && event)
    throw Error(ErrorCode::invalid_transition, "feedback is only accepted at ArtistEval");
  Stage next = stage;
  switch (stage) {
    case Stage::multimodal_train: next = run_multimodal(); break;
    case Stage::generator_train: next = run_generator(); break;
    case Stage::generate: next = run_generate(); break;
    case Stage::artist_eval: next = run_eval(*event); break;
    case Stage::reward_learn: next = run_reward(); break;
    case Stage::accepted: break;
  }
  enter(next);
  if (next == Stage::accepted) {
    const std::string text = state_.latest ? laban::serialize_score(*state_.latest) : std::string();
    emit(EventKind::accepted, Json{{"iteration", state_.iteration},
                                   {"rating", state_.feedback.empty() ? 0.0 : state_.feedback.back().rating},
                                   {"score", text}});
  }
  return next;
}

Stage Session::run_multimodal() {
  const auto& cfg = *state_.config;
  const auto pairs = procedural_pairs(state_.vocab, cfg.alignment_pairs, state_.rng.next());
  auto result = train_alignment(pairs, state_.vocab, state_.encoder, cfg.alignment_steps, cfg.alignment_step_size, 0);
  state_.encoder = std::move(result.params);
  emit(EventKind::phase1_trace,
       Json{{"stage", to_string(Stage::multimodal_train)}, {"objective", "alignment"}, {"trace", trace_json(result.trace)}});
  return Stage::generator_train;
}

Stage Session::run_generator() {
  const auto& cfg = *state_.config;
  if (!state_.composer_pretrained) {
    const auto corpus = procedural_corpus(state_.vocab, cfg.composer_samples, 0.1, state_.rng.next());
    auto result = train_composer(corpus, state_.vocab, state_.encoder, state_.composer, cfg.composer_steps,
                                 cfg.composer_step_size, 0);
    state_.composer = std::move(result.params);
    state_.composer_pretrained = true;
    emit(EventKind::phase1_trace,
         Json{{"stage", to_string(Stage::generator_train)}, {"objective", "composer"}, {"trace", trace_json(result.trace)}});
  }

  Phase1Problem problem;
  problem.vocab = &state_.vocab;
  problem.config = state_.config;
  problem.reward_energy = reward_energy();
  problem.length = cfg.score_length;
  const std::uint64_t batch_seed = state_.rng.next();
  problem.seed = state_.rng.next();
  if (!state_.feedback.empty()) {
    const auto best = static_cast<std::size_t>(state_.best_at - 1);
    problem.batch.push_back({cfg.prompt, state_.rated[best]});
    if (auto g = current_guidance()) {
      problem.guidance = *g;
      problem.guidance_weight = cfg.guidance_weight;
    }
  } else {
    for (auto& pair : procedural_pairs(state_.vocab, 2, batch_seed))
      problem.batch.push_back({std::move(pair.text), std::move(pair.motion)});
  }
  auto result = phase1_optimize(problem, state_.encoder, state_.composer, cfg.phase1_steps, cfg.phase1_step_size,
                                cfg.trust_radius);
  state_.encoder = std::move(result.encoder);
  state_.composer = std::move(result.composer);
  emit(EventKind::phase1_trace, Json{{"stage", to_string(Stage::generator_train)},
                                     {"objective", "phase1"},
                                     {"reward_energy", problem.reward_energy},
                                     {"trace", trace_json(result.trace)}});
  return Stage::generate;
}

Stage Session::run_generate() {
  const auto& cfg = *state_.config;
  const Vector cond = prompt_embedding();
  const std::optional<Vector> guidance = current_guidance();
  const Vector action = guidance ? *guidance : Vector(Vector::Zero(cond.size()));
  std::optional<GeneratedScore> best;
  double best_reward = 0.0;
  int best_index = 0;
  for (int k = 0; k < cfg.candidates; ++k) {
    GeneratedScore g = generate_score(cond, guidance, cfg.guidance_weight, cfg.score_length, state_.composer,
                                      state_.rng.next());
    const double r = reward_value(state_.reward, histogram_vector(g.score), action);
    if (!best || r > best_reward) {
      best = std::move(g);
      best_reward = r;
      best_index = k;
    }
  }
  state_.latest = best->score;
  emit(EventKind::generated, Json{{"iteration", state_.iteration},
                                  {"candidate", best_index},
                                  {"candidates", cfg.candidates},
                                  {"reward", best_reward},
                                  {"log_prob", best->log_prob},
                                  {"exhausted", best->exhausted},
                                  {"score", laban::serialize_score(best->score)}});
  return Stage::artist_eval;
}

Stage Session::run_eval(FeedbackEvent event) {
  const auto& cfg = *state_.config;
  event.iteration = state_.iteration;
  validate(event);
  state_.vocab.indices(event.judgement.text);
  emit(EventKind::feedback, to_json(event));
  state_.feedback.push_back(event);
  state_.rated.push_back(state_.latest.value_or(laban::Score{}));
  ++state_.iteration;
  ++state_.feedback_since_reward;
  if (state_.iteration == 1 || event.rating > state_.best_rating) {
    state_.best_rating = event.rating;
    state_.best_at = state_.iteration;
  }

  if (event.rating >= cfg.accept_threshold) return Stage::accepted;
  switch (event.decision) {
    case Decision::accept: return Stage::accepted;
    case Decision::resample: return Stage::generate;
    case Decision::retrain_generator: return Stage::generator_train;
    case Decision::retrain_multimodal: return Stage::multimodal_train;
    case Decision::none: break;
  }
  if (state_.feedback_since_reward >= cfg.phase2_trigger_count) return Stage::reward_learn;
  return Stage::generate;
}

Stage Session::run_reward() {
  const auto& cfg = *state_.config;
  const std::size_t n = state_.feedback.size();
  const std::size_t first = n > kMaxToyStates ? n - kMaxToyStates : 0;
  const auto T = static_cast<std::size_t>(cfg.trajectory_length);

  ToySpace space;
  std::map<std::string, std::size_t> state_ids;
  std::vector<std::size_t> state_of(n, 0);
  std::vector<laban::Score> states;
  for (std::size_t i = first; i < n; ++i) {
    const std::string text = laban::serialize_score(state_.rated[i]);
    auto [it, inserted] = state_ids.emplace(text, states.size());
    if (inserted) {
      states.push_back(state_.rated[i]);
      space.state_features.push_back(histogram_vector(state_.rated[i]));
    }
    state_of[i] = it->second;
  }
  space.initial.assign(states.size(), true);

  std::map<std::string, std::size_t> action_ids;
  std::vector<std::size_t> action_of(n, 0);
  std::vector<Judgement> actions;
  for (std::size_t i = first; i + T < n; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      const auto& j = state_.feedback[i + t].judgement;
      auto [it, inserted] = action_ids.emplace(to_json(j).dump(), actions.size());
      if (inserted) actions.push_back(j);
      action_of[i + t] = it->second;
    }
  }

  const Vector prompt = prompt_embedding();
  std::vector<Vector> log_q;
  for (const auto& a : actions) {
    const Vector g = judgement_to_guidance(a, state_.vocab, state_.encoder);
    space.action_features.push_back(g);
    const Vector cond = prompt + cfg.guidance_weight * g;
    Vector lp(static_cast<Eigen::Index>(states.size()));
    for (std::size_t s = 0; s < states.size(); ++s)
      lp[static_cast<Eigen::Index>(s)] = sequence_log_prob(cond, states[s], state_.composer);
    const double z = log_sum_exp(std::span<const double>(lp.data(), states.size()));
    // a uniform floor keeps every observed transition possible
    const double uniform = 1.0 / static_cast<double>(lp.size());
    Vector row = Vector::Constant(lp.size(), uniform);
    if (std::isfinite(z)) row = (1.0 - kTransitionFloor) * Vector((lp.array() - z).exp().matrix()) + kTransitionFloor * row;
    row /= row.sum();
    space.transitions.push_back(row.transpose().replicate(lp.size(), 1));
    log_q.push_back(row.array().log().matrix());
  }

  std::vector<ToyTrajectory> trajs;
  state_.trajectories.clear();
  for (std::size_t i = first; i + T < n; ++i) {
    ToyTrajectory traj;
    TrajectoryRecord rec;
    double rating = 0.0;
    for (std::size_t t = 0; t <= T; ++t) {
      traj.states.push_back(state_of[i + t]);
      rec.states.push_back(state_.rated[i + t]);
      rec.conditions.push_back(cfg.prompt);
      rating += state_.feedback[i + t].rating;
      rec.log_probs.push_back(t == 0 ? sequence_log_prob(prompt, state_.rated[i], state_.composer)
                                     : log_q[action_of[i + t - 1]][static_cast<Eigen::Index>(state_of[i + t])]);
      if (t < T) {
        traj.actions.push_back(action_of[i + t]);
        rec.actions.push_back(state_.feedback[i + t].judgement);
      }
    }
    traj.weight = rating / static_cast<double>(T + 1);
    rec.weight = traj.weight;
    trajs.push_back(std::move(traj));
    state_.trajectories.push_back(std::move(rec));
  }
  double total_weight = 0.0;
  for (const auto& t : trajs) total_weight += t.weight;
  if (total_weight <= 0.0)
    for (auto& t : trajs) t.weight = 1.0;

  std::vector<double> trace;
  if (!trajs.empty()) {
    const DiscountSchedule discount{cfg.discount0, cfg.discount_decay};
    auto result = phase2_optimize(trajs, space, state_.reward, discount, cfg.reward_l2, cfg.phase2_steps,
                                  cfg.phase2_step_size);
    state_.reward = std::move(result.reward);
    trace = std::move(result.trace);
  }
  state_.feedback_since_reward = 0;
  emit(EventKind::phase2_trace, Json{{"states", states.size()},
                                     {"actions", actions.size()},
                                     {"trajectories", trajs.size()},
                                     {"trace", trace_json(trace)}});

  if (state_.iteration - state_.best_at >= cfg.stagnation_window) return Stage::multimodal_train;
  return Stage::generator_train;
}

void drive(Session& session, const FeedbackSource& source, int max_iterations) {
  while (session.stage() != Stage::accepted && session.state().iteration < max_iterations) {
    if (session.stage() == Stage::artist_eval) {
      const laban::Score latest = session.state().latest.value_or(laban::Score{});
      session.flow_step(source(latest, session.state().iteration));
    } else {
      session.flow_step();
    }
  }
}

Session run_session(const LoopConfig& config, const Vocab& vocab, const FeedbackSource& source, int max_iterations,
                    std::uint64_t seed) {
  if (max_iterations < 0) throw Error(ErrorCode::invalid_argument, "max_iterations must be >= 0");
  Session session(config, vocab, seed);
  drive(session, source, max_iterations);
  return session;
}

Session session_load(const std::vector<Event>& log, Clock clock) {
  if (log.empty() || log.front().kind != EventKind::session_created)
    throw Error(ErrorCode::invalid_argument, "missing session_created");
  const Json& created = log.front().payload;
  try {
    if (created.at("version").get<int>() != 1) throw Error(ErrorCode::version_mismatch, "unsupported session version");
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::syntax, std::string("bad session_created: ") + e.what());
  }
  const auto feedback = replay_feedback(log);
  std::size_t next_feedback = 0;

  Session session(LoopConfig::parse(created.at("config").get<std::string>()),
                  Vocab::parse(created.at("vocab").get<std::string>()), created.at("seed").get<std::uint64_t>(),
                  std::move(clock));
  std::size_t checked = 0;
  const auto verify = [&] {
    const auto& regenerated = session.events();
    for (; checked < std::min(regenerated.size(), log.size()); ++checked) {
      const Event& a = regenerated[checked];
      const Event& b = log[checked];
      if (a.seq != b.seq || a.kind != b.kind || a.payload.dump() != b.payload.dump())
        throw Error(ErrorCode::storage, "log diverges from re-execution at seq " + std::to_string(b.seq));
    }
  };
  verify();
  while (session.events().size() < log.size() && session.stage() != Stage::accepted) {
    if (session.stage() == Stage::artist_eval) {
      if (next_feedback == feedback.size()) break;
      session.flow_step(feedback[next_feedback++]);
    } else {
      session.flow_step();
    }
    verify();
  }
  if (session.events().size() < log.size())
    throw Error(ErrorCode::storage, "log has events past the point re-execution can reach");
  return session;
}

Session session_load(const std::filesystem::path& path, Clock clock) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return session_load(parse_event_log(ss.str()), std::move(clock));
}

void lint_log(const std::vector<Event>& log) {
  Stage at = Stage::multimodal_train;
  for (const auto& e : log) {
    if (e.kind != EventKind::stage_entered) continue;
    const Stage from = parse_stage(e.payload.at("from").get<std::string>());
    const Stage to = parse_stage(e.payload.at("to").get<std::string>());
    if (from != at || !is_edge(from, to))
      throw Error(ErrorCode::invalid_transition, "seq " + std::to_string(e.seq) + ": " + std::string(to_string(from)) +
                                                     " -> " + std::string(to_string(to)) + " is not a flow edge");
    at = to;
  }
}

}  // namespace atelier
