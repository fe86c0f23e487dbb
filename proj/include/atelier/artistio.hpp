#pragma once

// Artist-side adapters: a deterministic scripted oracle and feedback replay.

#include "atelier/engine.hpp"
#include "atelier/event_log.hpp"
#include "atelier/labanstr.hpp"

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace atelier {

struct OracleSpec {
  std::array<double, laban::kCells> target{};
  double rmax = 1.0;
  int budget = 3;

  /// Target sums to 1 within 1e-9, entries >= 0, rmax > 0, budget >= 0.
  void check() const;

  /// Lines `cell <col> <dir> <lvl> <mass>`, `rmax <v>`, `budget <n>`; `#` comments.
  static OracleSpec parse(std::string_view text);
  std::string serialize() const;
};

/// Half the L1 distance.
double tv_distance(const std::array<double, laban::kCells>& a, const std::array<double, laban::kCells>& b);

/// Rating rmax * (1 - TV(histogram(s), target)), 0 for an empty score. The
/// judgement targets the `budget` cells with the largest positive deficit,
/// ties broken by cell index.
FeedbackEvent scripted_feedback(const OracleSpec& spec, const laban::Score& s);

/// Feedback events of a log, in seq order.
std::vector<FeedbackEvent> replay_feedback(const std::vector<Event>& log);
std::vector<FeedbackEvent> replay_feedback(std::string_view log_text);

Json to_json(const Judgement& j);
Judgement judgement_from_json(const Json& j);
Json to_json(const FeedbackEvent& e);
FeedbackEvent feedback_from_json(const Json& j);

}  // namespace atelier
