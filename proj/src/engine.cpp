#include "atelier/engine.hpp"

#include "atelier/error.hpp"
#include "atelier/optimize.hpp"
#include "atelier/params.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <variant>

namespace atelier {

namespace {

using Field = std::variant<double LoopSettings::*, int LoopSettings::*>;

struct FieldSpec {
  std::string_view name;
  Field field;
};

constexpr std::array<FieldSpec, 26> kFields = {{
    {"alpha", &LoopSettings::alpha},
    {"beta", &LoopSettings::beta},
    {"gamma_weight", &LoopSettings::gamma_weight},
    {"lambda", &LoopSettings::lambda},
    {"discount0", &LoopSettings::discount0},
    {"discount_decay", &LoopSettings::discount_decay},
    {"accept_threshold", &LoopSettings::accept_threshold},
    {"phase2_trigger_count", &LoopSettings::phase2_trigger_count},
    {"stagnation_window", &LoopSettings::stagnation_window},
    {"trajectory_length", &LoopSettings::trajectory_length},
    {"reward_l2", &LoopSettings::reward_l2},
    {"embedding_dim", &LoopSettings::embedding_dim},
    {"score_length", &LoopSettings::score_length},
    {"candidates", &LoopSettings::candidates},
    {"guidance_weight", &LoopSettings::guidance_weight},
    {"alignment_pairs", &LoopSettings::alignment_pairs},
    {"alignment_steps", &LoopSettings::alignment_steps},
    {"alignment_step_size", &LoopSettings::alignment_step_size},
    {"composer_samples", &LoopSettings::composer_samples},
    {"composer_steps", &LoopSettings::composer_steps},
    {"composer_step_size", &LoopSettings::composer_step_size},
    {"phase1_steps", &LoopSettings::phase1_steps},
    {"phase1_step_size", &LoopSettings::phase1_step_size},
    {"trust_radius", &LoopSettings::trust_radius},
    {"phase2_steps", &LoopSettings::phase2_steps},
    {"phase2_step_size", &LoopSettings::phase2_step_size},
}};

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::invalid_config, what);
}

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

LoopConfig::LoopConfig(LoopSettings s) : s_(std::move(s)) {
  require(in_unit(s_.alpha) && in_unit(s_.beta) && in_unit(s_.gamma_weight), "alpha, beta, gamma_weight must be in [0, 1]");
  require(std::abs(s_.alpha + s_.beta + s_.gamma_weight - 1.0) <= 1e-12,
          "alpha + beta + gamma_weight must equal 1 (simplex violated)");
  require(in_unit(s_.lambda), "lambda must be in [0, 1]");
  require(s_.discount0 > 0.0 && s_.discount0 <= 1.0, "discount0 must be in (0, 1]");
  require(s_.discount_decay > 0.0 && s_.discount_decay <= 1.0, "discount_decay must be in (0, 1]");
  require(std::isfinite(s_.accept_threshold), "accept_threshold must be finite");
  require(s_.phase2_trigger_count >= 1, "phase2_trigger_count must be >= 1");
  require(s_.stagnation_window >= 1, "stagnation_window must be >= 1");
  require(s_.trajectory_length >= 1, "trajectory_length must be >= 1");
  require(s_.reward_l2 >= 0.0 && std::isfinite(s_.reward_l2), "reward_l2 must be >= 0");
  require(s_.embedding_dim >= 1 && s_.embedding_dim <= 1024, "embedding_dim must be in [1, 1024]");
  require(s_.score_length >= 0 && s_.score_length <= 128, "score_length must be in [0, 128]");
  require(s_.candidates >= 1, "candidates must be >= 1");
  require(s_.guidance_weight >= 0.0 && std::isfinite(s_.guidance_weight), "guidance_weight must be >= 0");
  require(s_.alignment_pairs >= 2, "alignment_pairs must be >= 2");
  require(s_.composer_samples >= 1, "composer_samples must be >= 1");
  require(s_.alignment_steps >= 0 && s_.composer_steps >= 0 && s_.phase1_steps >= 0 && s_.phase2_steps >= 0,
          "step counts must be >= 0");
  for (double size : {s_.alignment_step_size, s_.composer_step_size, s_.phase1_step_size, s_.phase2_step_size,
                      s_.trust_radius})
    require(size > 0.0 && std::isfinite(size), "step sizes must be positive");
  require(!s_.prompt.empty(), "prompt must not be empty");
}

LoopConfig LoopConfig::parse(std::string_view text) {
  LoopSettings s;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const std::string line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty() || line[0] == '#') {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(ErrorCode::syntax, static_cast<int>(line_no), 1, "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key == "sign_mode") {
      s.sign_mode = parse_sign_mode(value);
    } else if (key == "prompt") {
      s.prompt.clear();
      std::istringstream in(value);
      for (std::string w; in >> w;) s.prompt.push_back(w);
    } else {
      bool found = false;
      for (const auto& spec : kFields) {
        if (spec.name != key) continue;
        found = true;
        std::visit(
            [&](auto member) {
              using T = std::remove_reference_t<decltype(s.*member)>;
              T v{};
              const auto r = std::from_chars(value.data(), value.data() + value.size(), v);
              if (r.ec != std::errc() || r.ptr != value.data() + value.size())
                throw ParseError(ErrorCode::syntax, static_cast<int>(line_no), static_cast<int>(eq + 2), "bad value for '" + key + "'");
              s.*member = v;
            },
            spec.field);
      }
      if (!found) throw ParseError(ErrorCode::invalid_config, static_cast<int>(line_no), 1, "unknown key '" + key + "'");
    }
    if (end == text.size()) break;
  }
  return LoopConfig(std::move(s));
}

std::string LoopConfig::serialize() const {
  std::string out;
  for (const auto& spec : kFields) {
    out += spec.name;
    out += " = ";
    std::visit(
        [&](auto member) {
          if constexpr (std::is_same_v<std::remove_cvref_t<decltype(s_.*member)>, double>)
            out += format_double(s_.*member);
          else
            out += std::to_string(s_.*member);
        },
        spec.field);
    out += '\n';
  }
  out += "sign_mode = ";
  out += to_string(s_.sign_mode);
  out += "\nprompt =";
  for (const auto& w : s_.prompt) out += " " + w;
  out += '\n';
  return out;
}

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::none: return "none";
    case Decision::resample: return "resample";
    case Decision::retrain_generator: return "retrain_generator";
    case Decision::retrain_multimodal: return "retrain_multimodal";
    case Decision::accept: return "accept";
  }
  return "none";
}

Decision parse_decision(std::string_view text) {
  for (Decision d : {Decision::none, Decision::resample, Decision::retrain_generator, Decision::retrain_multimodal,
                     Decision::accept})
    if (to_string(d) == text) return d;
  throw Error(ErrorCode::unknown_enum, "unknown decision '" + std::string(text) + "'");
}

void validate(const Judgement& j) {
  for (const auto& t : j.targets) {
    if (t.cell >= laban::kCells) throw Error(ErrorCode::invalid_argument, "judgement cell out of range");
    if (!std::isfinite(t.delta)) throw Error(ErrorCode::invalid_argument, "judgement delta must be finite");
  }
}

void validate(const FeedbackEvent& e) {
  if (!std::isfinite(e.rating) || e.rating < 0.0)
    throw Error(ErrorCode::invalid_argument, "rating must be finite and >= 0");
  validate(e.judgement);
}

Embedding cell_embedding(std::size_t cell, const EncoderDecoderParams& enc) {
  if (cell >= laban::kCells) throw Error(ErrorCode::invalid_argument, "cell out of range");
  laban::LabanToken t;
  const auto [col, dir, lvl] = laban::cell_at(cell);
  t.action.column = col;
  t.action.direction = dir;
  t.action.level = lvl;
  laban::Score s;
  s.tokens.push_back(t);
  return encode_motion(s, enc);
}

Embedding judgement_to_guidance(const Judgement& j, const Vocab& vocab, const EncoderDecoderParams& enc) {
  validate(j);
  Embedding g = encode_text(j.text, vocab, enc);
  for (const auto& t : j.targets) g += t.delta * cell_embedding(t.cell, enc);
  return g;
}

RewardParams zero_reward(int dim) {
  if (dim <= 0) throw Error(ErrorCode::invalid_argument, "dimension must be positive");
  return {Vector::Zero(static_cast<Eigen::Index>(laban::kCells)), Vector::Zero(dim), Vector::Zero(1)};
}

Vector histogram_vector(const laban::Score& s) {
  const auto h = laban::attribute_histogram(s);
  Vector v(static_cast<Eigen::Index>(laban::kCells));
  for (std::size_t i = 0; i < laban::kCells; ++i) v[static_cast<Eigen::Index>(i)] = h.mass[i];
  return v;
}

double reward_value(const RewardParams& r, const Vector& state_histogram, const Vector& action_embedding) {
  return r.histogram.dot(state_histogram) + r.judgement.dot(action_embedding) + r.bias[0];
}

double DiscountSchedule::at(int t) const { return discount0 * std::pow(decay, t); }

void ToySpace::check() const {
  const std::size_t n = states();
  if (n == 0) throw Error(ErrorCode::invalid_argument, "toy space has no states");
  if (transitions.size() != action_features.size())
    throw Error(ErrorCode::invalid_argument, "one transition matrix per action required");
  if (initial.size() != n) throw Error(ErrorCode::invalid_argument, "initial mask size mismatch");
  if (std::none_of(initial.begin(), initial.end(), [](bool b) { return b; }))
    throw Error(ErrorCode::invalid_argument, "no legal initial state");
  for (const auto& q : transitions) {
    if (q.rows() != static_cast<Eigen::Index>(n) || q.cols() != static_cast<Eigen::Index>(n))
      throw Error(ErrorCode::invalid_argument, "transition matrix shape mismatch");
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      if (!((q.row(i).array() >= 0.0).all() && q.row(i).allFinite()))
        throw Error(ErrorCode::invalid_argument, "transition probabilities must be finite and >= 0");
      if (std::abs(q.row(i).sum() - 1.0) > 1e-9) throw Error(ErrorCode::invalid_argument, "transition rows must sum to 1");
    }
  }
}

namespace {

void check_shapes(const RewardParams& r, const ToySpace& space) {
  if (r.bias.size() != 1) throw Error(ErrorCode::invalid_argument, "reward bias must have size 1");
  for (const auto& f : space.state_features)
    if (f.size() != r.histogram.size()) throw Error(ErrorCode::invalid_argument, "state feature size mismatch");
  for (const auto& f : space.action_features)
    if (f.size() != r.judgement.size()) throw Error(ErrorCode::invalid_argument, "action feature size mismatch");
}

double lse(const Vector& v) { return log_sum_exp(std::span<const double>(v.data(), static_cast<std::size_t>(v.size()))); }

}  // namespace

double trajectory_loglik(const ToyTrajectory& traj, const RewardParams& reward, const DiscountSchedule& discount,
                         const ToySpace& space, RewardParams* grad) {
  space.check();
  check_shapes(reward, space);
  const std::size_t n = space.states();
  const std::size_t horizon = traj.actions.size();
  if (traj.states.size() != horizon + 1) throw Error(ErrorCode::invalid_argument, "inconsistent record: need T+1 states");
  for (std::size_t s : traj.states)
    if (s >= n) throw Error(ErrorCode::invalid_argument, "inconsistent record: state out of range");
  for (std::size_t a : traj.actions)
    if (a >= space.action_features.size()) throw Error(ErrorCode::invalid_argument, "inconsistent record: action out of range");
  if (std::pow(static_cast<double>(n), static_cast<double>(horizon + 1)) > kMaxEnumerable)
    throw Error(ErrorCode::too_large, "toy space too large to enumerate");
  if (!space.initial[traj.states[0]]) throw Error(ErrorCode::invalid_argument, "inconsistent record: illegal initial state");

  const auto N = static_cast<Eigen::Index>(n);
  const double legal = static_cast<double>(std::count(space.initial.begin(), space.initial.end(), true));
  Vector log_p0(N);
  for (Eigen::Index s = 0; s < N; ++s) log_p0[s] = space.initial[static_cast<std::size_t>(s)] ? -std::log(legal) : -INFINITY;

  Vector state_term(N);
  for (Eigen::Index s = 0; s < N; ++s)
    state_term[s] = reward.histogram.dot(space.state_features[static_cast<std::size_t>(s)]) + reward.bias[0];
  // r[t](s) = gamma_t * R(s, A_t); the final step has the empty action
  std::vector<Vector> r(horizon + 1);
  std::vector<double> gamma(horizon + 1);
  for (std::size_t t = 0; t <= horizon; ++t) {
    gamma[t] = discount.at(static_cast<int>(t));
    const double action_term = t < horizon ? reward.judgement.dot(space.action_features[traj.actions[t]]) : 0.0;
    r[t] = gamma[t] * (state_term.array() + action_term).matrix();
  }
  std::vector<Matrix> log_q(horizon);
  for (std::size_t t = 0; t < horizon; ++t) log_q[t] = space.transitions[traj.actions[t]].array().log().matrix();

  double observed = log_p0[static_cast<Eigen::Index>(traj.states[0])];
  for (std::size_t t = 0; t < horizon; ++t)
    observed += log_q[t](static_cast<Eigen::Index>(traj.states[t]), static_cast<Eigen::Index>(traj.states[t + 1]));
  if (!std::isfinite(observed)) throw Error(ErrorCode::invalid_argument, "inconsistent record: zero-probability trajectory");
  for (std::size_t t = 0; t <= horizon; ++t) observed += r[t][static_cast<Eigen::Index>(traj.states[t])];

  std::vector<Vector> alpha(horizon + 1, Vector(N));
  alpha[0] = log_p0 + r[0];
  Vector tmp(N);
  for (std::size_t t = 0; t < horizon; ++t) {
    for (Eigen::Index j = 0; j < N; ++j) {
      tmp = alpha[t] + log_q[t].col(j);
      alpha[t + 1][j] = lse(tmp) + r[t + 1][j];
    }
  }
  const double log_z = lse(alpha[horizon]);
  const double value = observed - log_z;

  if (grad) {
    std::vector<Vector> beta(horizon + 1, Vector::Zero(N));
    for (std::size_t t = horizon; t-- > 0;) {
      for (Eigen::Index i = 0; i < N; ++i) {
        tmp = log_q[t].row(i).transpose() + r[t + 1] + beta[t + 1];
        beta[t][i] = lse(tmp);
      }
    }
    *grad = zeros_like(reward);
    for (std::size_t t = 0; t <= horizon; ++t) {
      grad->histogram += gamma[t] * space.state_features[traj.states[t]];
      for (Eigen::Index s = 0; s < N; ++s) {
        const double q = std::exp(alpha[t][s] + beta[t][s] - log_z);
        if (q > 0.0) grad->histogram -= (gamma[t] * q) * space.state_features[static_cast<std::size_t>(s)];
      }
      // action and bias terms are the same for every state sequence and cancel against log Z
    }
  }
  return value;
}

double phase2_objective(const std::vector<ToyTrajectory>& trajs, const RewardParams& reward,
                        const DiscountSchedule& discount, const ToySpace& space, double l2, RewardParams* grad) {
  if (trajs.empty()) throw Error(ErrorCode::invalid_argument, "no trajectories");
  if (!(l2 >= 0.0)) throw Error(ErrorCode::invalid_argument, "l2 must be >= 0");
  double total_weight = 0.0;
  for (const auto& t : trajs) {
    if (!(t.weight >= 0.0) || !std::isfinite(t.weight)) throw Error(ErrorCode::invalid_argument, "weights must be >= 0");
    total_weight += t.weight;
  }
  if (total_weight <= 0.0) throw Error(ErrorCode::invalid_argument, "trajectory weights sum to zero");
  if (grad) *grad = zeros_like(reward);
  double value = 0.0;
  RewardParams g;
  for (const auto& t : trajs) {
    const double w = t.weight / total_weight;
    value += w * trajectory_loglik(t, reward, discount, space, grad ? &g : nullptr);
    if (grad) {
      grad->histogram += w * g.histogram;
      grad->judgement += w * g.judgement;
      grad->bias += w * g.bias;
    }
  }
  value -= l2 * (reward.histogram.squaredNorm() + reward.judgement.squaredNorm());
  if (grad) {
    grad->histogram -= 2.0 * l2 * reward.histogram;
    grad->judgement -= 2.0 * l2 * reward.judgement;
  }
  return value;
}

Phase2Result phase2_optimize(const std::vector<ToyTrajectory>& trajs, const ToySpace& space, RewardParams reward,
                             const DiscountSchedule& discount, double l2, int steps, double step_size) {
  if (trajs.empty()) throw Error(ErrorCode::invalid_argument, "no trajectories");
  if (steps < 0) throw Error(ErrorCode::invalid_argument, "steps must be >= 0");
  RewardParams work = reward;
  const Objective f = [&](const Vector& x, Vector* g) {
    assign_flat(work, x);
    if (!g) return phase2_objective(trajs, work, discount, space, l2);
    RewardParams grad;
    const double v = phase2_objective(trajs, work, discount, space, l2, &grad);
    *g = flatten(grad);
    return v;
  };
  auto result = gradient_ascent(flatten(reward), f, steps, step_size);
  assign_flat(reward, result.x);
  return {std::move(reward), std::move(result.trace)};
}

double phase1_objective(const Vector& x1, const Vector& x1p, const Vector& x2, const Vector& x2p, const Vector& z1,
                        const Vector& z1p, const LoopConfig& config, double reward_energy, double theta_norm) {
  const auto& c = *config;
  return c.alpha * sc_score(x1, x1p, reward_energy, theta_norm, c.lambda, c.sign_mode) +
         c.beta * sc_score(x2, x2p, reward_energy, theta_norm, c.lambda, c.sign_mode) +
         c.gamma_weight * dot_similarity(z1, z1p);
}

double theta_norm(const EncoderDecoderParams& enc, const ComposerParams& comp) {
  return std::sqrt(flatten(enc).squaredNorm() + flatten(comp).squaredNorm());
}

namespace {

constexpr std::array<Head, 5> kAttributeHeads = {Head::column, Head::direction, Head::level, Head::rotation,
                                                 Head::flexion};

// family rows every generated token carries (spatial attributes at defaults)
Vector constant_rows(const EncoderDecoderParams& enc) {
  const laban::SpatialAttrs plain;
  return enc.motion[static_cast<std::size_t>(Family::path)].row(static_cast<Eigen::Index>(laban::index_of(plain.path))).transpose() +
         enc.motion[static_cast<std::size_t>(Family::facing)].row(static_cast<Eigen::Index>(laban::index_of(plain.facing))).transpose() +
         enc.motion[static_cast<std::size_t>(Family::position)].row(static_cast<Eigen::Index>(laban::index_of(plain.position))).transpose();
}

double expected_duration(const Vector& p) {
  const auto& d = grid_durations();
  double e = 0.0;
  for (std::size_t v = 0; v < d.size(); ++v) e += p[static_cast<Eigen::Index>(v)] * d[v].to_double();
  return e;
}

Eigen::Index cell(std::size_t c, std::size_t d, std::size_t l) {
  return static_cast<Eigen::Index>((c * laban::kDirections + d) * laban::kLevels + l);
}

Vector conditioning_for(const Phase1Problem& problem, const Phase1Item& item, const EncoderDecoderParams& enc) {
  Vector c = encode_text(item.text, *problem.vocab, enc);
  if (problem.guidance.size() > 0) {
    if (problem.guidance.size() != c.size()) throw Error(ErrorCode::invalid_argument, "guidance dimension mismatch");
    c += problem.guidance_weight * problem.guidance;
  }
  return c;
}

void check_problem(const Phase1Problem& problem) {
  if (!problem.vocab) throw Error(ErrorCode::invalid_argument, "phase 1 needs a vocab");
  if (problem.batch.empty()) throw Error(ErrorCode::invalid_argument, "empty batch");
}

}  // namespace

ExpectedOutput expected_output(const GenerationTrace& trace, const EncoderDecoderParams& enc, const ComposerParams&) {
  ExpectedOutput out{Vector::Zero(enc.dim()), Vector::Zero(static_cast<Eigen::Index>(laban::kCells))};
  const std::size_t L = trace.steps.size();
  if (L == 0) return out;
  const Vector fixed = constant_rows(enc);
  for (const auto& step : trace.steps) {
    Vector e = fixed;
    for (Head h : kAttributeHeads) {
      const auto i = static_cast<std::size_t>(h);
      e += enc.motion[i].transpose() * step.probs[i];
    }
    e += step.start.to_double() * enc.start;
    e += expected_duration(step.probs[static_cast<std::size_t>(Head::duration)]) * enc.duration;
    out.embedding += e;
    const Vector& pc = step.probs[static_cast<std::size_t>(Head::column)];
    const Vector& pd = step.probs[static_cast<std::size_t>(Head::direction)];
    const Vector& pl = step.probs[static_cast<std::size_t>(Head::level)];
    for (std::size_t c = 0; c < laban::kColumns; ++c)
      for (std::size_t d = 0; d < laban::kDirections; ++d)
        for (std::size_t l = 0; l < laban::kLevels; ++l)
          out.histogram[cell(c, d, l)] += pc[static_cast<Eigen::Index>(c)] * pd[static_cast<Eigen::Index>(d)] *
                                          pl[static_cast<Eigen::Index>(l)];
  }
  out.embedding *= enc.pooling_scale / static_cast<double>(L);
  out.histogram /= static_cast<double>(L);
  return out;
}

std::vector<laban::Score> phase1_rollouts(const Phase1Problem& problem, const EncoderDecoderParams& enc,
                                          const ComposerParams& comp) {
  check_problem(problem);
  std::vector<laban::Score> out;
  for (std::size_t i = 0; i < problem.batch.size(); ++i)
    out.push_back(generate_trace(conditioning_for(problem, problem.batch[i], enc), problem.length, comp,
                                 problem.seed + i)
                      .score);
  return out;
}

double phase1_batch_objective(const Phase1Problem& problem, const EncoderDecoderParams& enc,
                              const ComposerParams& comp, EncoderDecoderParams* enc_grad, ComposerParams* comp_grad) {
  check_problem(problem);
  const auto& cfg = *problem.config;
  const double norm = theta_norm(enc, comp);
  const double inv_b = 1.0 / static_cast<double>(problem.batch.size());
  const bool want = enc_grad || comp_grad;
  EncoderDecoderParams ge;
  ComposerParams gc;
  if (want) {
    ge = zeros_like(enc);
    gc = zeros_like(comp);
  }

  double total = 0.0;
  for (std::size_t i = 0; i < problem.batch.size(); ++i) {
    const Phase1Item& item = problem.batch[i];
    const auto words = problem.vocab->indices(item.text);
    const Vector x1 = encode_text_indices(words, enc);
    const Vector x2 = histogram_vector(item.reference);
    const Vector z1 = encode_motion(item.reference, enc);
    const GenerationTrace trace =
        generate_trace(conditioning_for(problem, item, enc), problem.length, comp, problem.seed + i);
    const ExpectedOutput out = expected_output(trace, enc, comp);
    total += phase1_objective(x1, out.embedding, x2, out.histogram, z1, out.embedding, problem.config,
                              problem.reward_energy, norm);
    if (!want) continue;

    // dJ/dZ' and dJ/dhist', scaled by the batch mean
    const Vector g_z = inv_b * (cfg.alpha * x1 + cfg.gamma_weight * z1);
    const Vector g_hist = inv_b * cfg.beta * x2;
    Vector g_c0 = inv_b * cfg.alpha * out.embedding;
    accumulate_motion_gradient(item.reference, inv_b * cfg.gamma_weight * out.embedding, enc, ge);

    const std::size_t L = trace.steps.size();
    if (L > 0) {
      const double inv_l = 1.0 / static_cast<double>(L);
      const double scale = enc.pooling_scale * inv_l;
      const Vector g_e = scale * g_z;
      const laban::SpatialAttrs plain;
      ge.motion[static_cast<std::size_t>(Family::path)].row(static_cast<Eigen::Index>(laban::index_of(plain.path))) +=
          static_cast<double>(L) * g_e.transpose();
      ge.motion[static_cast<std::size_t>(Family::facing)].row(static_cast<Eigen::Index>(laban::index_of(plain.facing))) +=
          static_cast<double>(L) * g_e.transpose();
      ge.motion[static_cast<std::size_t>(Family::position)].row(
          static_cast<Eigen::Index>(laban::index_of(plain.position))) += static_cast<double>(L) * g_e.transpose();

      std::vector<Vector> g_cond(L);
      for (std::size_t k = 0; k < L; ++k) {
        const GenerationStep& step = trace.steps[k];
        std::array<Vector, kHeads> a;
        for (Head h : kAttributeHeads) {
          const auto fi = static_cast<std::size_t>(h);
          a[fi] = enc.motion[fi] * g_e;
          ge.motion[fi] += step.probs[fi] * g_e.transpose();
        }
        const auto di = static_cast<std::size_t>(Head::duration);
        const auto& durations = grid_durations();
        const double gu = g_e.dot(enc.duration);
        a[di] = Vector(static_cast<Eigen::Index>(durations.size()));
        for (std::size_t v = 0; v < durations.size(); ++v) a[di][static_cast<Eigen::Index>(v)] = gu * durations[v].to_double();
        ge.start += step.start.to_double() * g_e;
        ge.duration += expected_duration(step.probs[di]) * g_e;

        const Vector& pc = step.probs[static_cast<std::size_t>(Head::column)];
        const Vector& pd = step.probs[static_cast<std::size_t>(Head::direction)];
        const Vector& pl = step.probs[static_cast<std::size_t>(Head::level)];
        Vector& ac = a[static_cast<std::size_t>(Head::column)];
        Vector& ad = a[static_cast<std::size_t>(Head::direction)];
        Vector& al = a[static_cast<std::size_t>(Head::level)];
        for (std::size_t c = 0; c < laban::kColumns; ++c)
          for (std::size_t d = 0; d < laban::kDirections; ++d)
            for (std::size_t l = 0; l < laban::kLevels; ++l) {
              const double g = inv_l * g_hist[cell(c, d, l)];
              if (g == 0.0) continue;
              const auto C = static_cast<Eigen::Index>(c), D = static_cast<Eigen::Index>(d),
                         Lv = static_cast<Eigen::Index>(l);
              ac[C] += g * pd[D] * pl[Lv];
              ad[D] += g * pc[C] * pl[Lv];
              al[Lv] += g * pc[C] * pd[D];
            }

        Vector gck = Vector::Zero(comp.dim());
        for (std::size_t h = 0; h < kHeads; ++h) {
          const Vector& p = step.probs[h];
          const Vector delta = (p.array() * (a[h].array() - p.dot(a[h]))).matrix() / comp.temperature;
          gck += comp.heads[h] * delta;
          gc.heads[h] += step.conditioning * delta.transpose();
          gc.bias[h] += delta;
        }
        g_c0 += gck;
        gc.history += gck * step.history.transpose();
        g_cond[k] = gck;
      }
      // history h_k is the mean feature of tokens j < k
      Vector suffix = Vector::Zero(comp.dim());
      for (std::size_t j = L; j-- > 0;) {
        if (!suffix.isZero(0.0)) {
          const GenerationStep& step = trace.steps[j];
          for (Head h : {Head::column, Head::direction, Head::level}) {
            const auto hi = static_cast<std::size_t>(h);
            gc.heads[hi].col(static_cast<Eigen::Index>(step.choice[hi])) += suffix;
          }
        }
        if (j > 0) suffix += comp.history.transpose() * g_cond[j] / static_cast<double>(j);
      }
    }
    accumulate_text_gradient(words, g_c0, ge);
  }
  total *= inv_b;

  if (want && norm > 0.0 && cfg.lambda > 0.0) {
    const double k = (cfg.alpha + cfg.beta) * sign_factor(cfg.sign_mode) * cfg.lambda *
                     std::exp(-problem.reward_energy) / norm;
    assign_flat(ge, Vector(flatten(ge) + k * flatten(enc)));
    assign_flat(gc, Vector(flatten(gc) + k * flatten(comp)));
  }
  if (enc_grad) *enc_grad = std::move(ge);
  if (comp_grad) *comp_grad = std::move(gc);
  return total;
}

Phase1Result phase1_optimize(const Phase1Problem& problem, EncoderDecoderParams enc, ComposerParams comp, int steps,
                             double step_size, double max_step_norm) {
  check_problem(problem);
  if (steps < 0) throw Error(ErrorCode::invalid_argument, "steps must be >= 0");
  const auto ne = static_cast<Eigen::Index>(parameter_count(enc));
  const auto nc = static_cast<Eigen::Index>(parameter_count(comp));
  EncoderDecoderParams we = enc;
  ComposerParams wc = comp;
  const Objective f = [&](const Vector& x, Vector* g) {
    assign_flat(we, Vector(x.head(ne)));
    assign_flat(wc, Vector(x.tail(nc)));
    if (!g) return phase1_batch_objective(problem, we, wc);
    EncoderDecoderParams ge;
    ComposerParams gc;
    const double v = phase1_batch_objective(problem, we, wc, &ge, &gc);
    g->resize(ne + nc);
    g->head(ne) = flatten(ge);
    g->tail(nc) = flatten(gc);
    return v;
  };
  Vector x0(ne + nc);
  x0.head(ne) = flatten(enc);
  x0.tail(nc) = flatten(comp);
  auto result = gradient_ascent(std::move(x0), f, steps, step_size, max_step_norm);
  assign_flat(enc, Vector(result.x.head(ne)));
  assign_flat(comp, Vector(result.x.tail(nc)));
  return {std::move(enc), std::move(comp), std::move(result.trace)};
}

}  // namespace atelier
