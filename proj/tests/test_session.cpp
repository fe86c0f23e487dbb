#include "support.hpp"

#include <doctest.h>

#include <fstream>

using namespace atelier;
using namespace atelier::testing;

namespace {

void to_eval(Session& s) {
  while (s.stage() != Stage::artist_eval) s.flow_step();
}

FeedbackEvent rated(double r, Decision d = Decision::none) {
  FeedbackEvent e;
  e.rating = r;
  e.decision = d;
  return e;
}

std::vector<Stage> entered(const Session& s) {
  std::vector<Stage> out;
  for (const auto& e : s.events())
    if (e.kind == EventKind::stage_entered) out.push_back(parse_stage(e.payload.at("to").get<std::string>()));
  return out;
}

}  // namespace

TEST_CASE("stage graph") {
  CHECK(is_edge(Stage::multimodal_train, Stage::generator_train));
  CHECK(is_edge(Stage::artist_eval, Stage::reward_learn));
  CHECK(is_edge(Stage::reward_learn, Stage::multimodal_train));
  CHECK_FALSE(is_edge(Stage::generate, Stage::accepted));
  CHECK_FALSE(is_edge(Stage::accepted, Stage::generate));
  CHECK_FALSE(is_edge(Stage::reward_learn, Stage::generate));
  CHECK(parse_stage(to_string(Stage::artist_eval)) == Stage::artist_eval);
  CHECK_THROWS(parse_stage("Dancing"));
}

TEST_CASE("flow rules") {
  const Vocab vocab = Vocab::standard();
  LoopSettings s = quick_settings();

  SUBCASE("a rating equal to the threshold is accepted") {
    s.accept_threshold = 0.5;
    Session session(LoopConfig(s), vocab, 1);
    to_eval(session);
    CHECK(session.flow_step(rated(0.5)) == Stage::accepted);
    CHECK(session.events().back().kind == EventKind::accepted);
    CHECK_THROWS_AS(session.flow_step(), Error);
  }
  SUBCASE("the trigger-count feedback starts reward learning") {
    s.phase2_trigger_count = 3;
    Session session(LoopConfig(s), vocab, 2);
    to_eval(session);
    CHECK(session.flow_step(rated(0.1)) == Stage::generate);
    to_eval(session);
    CHECK(session.flow_step(rated(0.2)) == Stage::generate);
    to_eval(session);
    CHECK(session.flow_step(rated(0.3)) == Stage::reward_learn);
    CHECK(session.flow_step() == Stage::generator_train);
  }
  SUBCASE("stagnation retrains the multimodal encoders") {
    s.phase2_trigger_count = 3;
    s.stagnation_window = 2;
    Session session(LoopConfig(s), vocab, 3);
    for (int i = 0; i < 3; ++i) {
      to_eval(session);
      session.flow_step(rated(0.4));
    }
    REQUIRE(session.stage() == Stage::reward_learn);
    CHECK(session.flow_step() == Stage::multimodal_train);
  }
  SUBCASE("explicit decisions") {
    Session session(LoopConfig(s), vocab, 4);
    to_eval(session);
    CHECK(session.flow_step(rated(0.1, Decision::retrain_generator)) == Stage::generator_train);
    to_eval(session);
    CHECK(session.flow_step(rated(0.1, Decision::retrain_multimodal)) == Stage::multimodal_train);
    to_eval(session);
    CHECK(session.flow_step(rated(0.1, Decision::resample)) == Stage::generate);
    to_eval(session);
    CHECK(session.flow_step(rated(0.1, Decision::accept)) == Stage::accepted);
  }
  SUBCASE("feedback only at ArtistEval") {
    Session session(LoopConfig(s), vocab, 5);
    try {
      session.flow_step(rated(0.1));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::invalid_transition);
    }
    to_eval(session);
    CHECK_THROWS(session.flow_step());
    CHECK_THROWS(session.flow_step(rated(-1.0)));
    FeedbackEvent bad = rated(0.1);
    bad.judgement.text = {"pirouette"};
    CHECK_THROWS(session.flow_step(bad));
  }
}

TEST_CASE("zero iterations log only the creation event") {
  const auto spec = OracleSpec::parse(kLoopOracle);
  const Session s = run_session(LoopConfig(quick_settings()), Vocab::standard(), oracle_source(spec), 0, 7);
  REQUIRE(s.events().size() == 1);
  CHECK(s.events()[0].kind == EventKind::session_created);
  CHECK(s.events()[0].seq == 1);
  CHECK_THROWS(run_session(LoopConfig(quick_settings()), Vocab::standard(), oracle_source(spec), -1, 7));
}

TEST_CASE("a session log is reproducible, loadable, resumable and lint-clean") {
  const Vocab vocab = Vocab::standard();
  const LoopConfig config(quick_settings());
  const auto spec = OracleSpec::parse(kLoopOracle);
  const Session full = run_session(config, vocab, oracle_source(spec), 20, 7);
  const std::string text = serialize_event_log(full.events());
  REQUIRE(full.state().iteration == 20);

  CHECK(serialize_event_log(run_session(config, vocab, oracle_source(spec), 20, 7).events()) == text);
  CHECK(serialize_event_log(run_session(config, vocab, oracle_source(spec), 20, 8).events()) != text);

  const Session loaded = session_load(parse_event_log(text));
  CHECK(loaded.state().iteration == 20);
  CHECK(serialize_event_log(loaded.events()) == text);
  CHECK(flatten(loaded.state().encoder) == flatten(full.state().encoder));
  CHECK(loaded.ratings() == full.ratings());

  Session half = run_session(config, vocab, oracle_source(spec), 10, 7);
  Session resumed = session_load(half.events());
  drive(resumed, oracle_source(spec), 20);
  CHECK(serialize_event_log(resumed.events()) == text);

  // a log cut mid-stage loads and continues to the same place
  std::vector<Event> cut(full.events().begin(), full.events().begin() + static_cast<long>(full.events().size() / 2));
  Session from_cut = session_load(cut);
  drive(from_cut, oracle_source(spec), 20);
  CHECK(serialize_event_log(from_cut.events()) == text);

  CHECK_NOTHROW(lint_log(full.events()));

  const auto feedback = replay_feedback(text);
  REQUIRE(feedback.size() == 20);
  std::size_t next = 0;
  const Session replayed =
      run_session(config, vocab, [&](const laban::Score&, int) { return feedback.at(next++); }, 20, 7);
  CHECK(serialize_event_log(replayed.events()) == text);
}

TEST_CASE("loading rejects logs that diverge or lack a header") {
  try {
    session_load(std::vector<Event>{});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("missing session_created") != std::string::npos);
  }
  const Session s = run_session(LoopConfig(quick_settings()), Vocab::standard(),
                                oracle_source(OracleSpec::parse(kLoopOracle)), 3, 7);
  auto events = s.events();
  for (auto& e : events)
    if (e.kind == EventKind::generated) {
      e.payload["score"] = "LABANSTR 1\nmeter 4/4\n";
      break;
    }
  CHECK_THROWS(session_load(events));
}

TEST_CASE("lint rejects edges outside the stage graph") {
  const Session s = run_session(LoopConfig(quick_settings()), Vocab::standard(),
                                oracle_source(OracleSpec::parse(kLoopOracle)), 2, 7);
  auto events = s.events();
  for (auto& e : events)
    if (e.kind == EventKind::stage_entered && e.payload.at("to") == to_string(Stage::generate)) {
      e.payload["to"] = std::string(to_string(Stage::accepted));
      break;
    }
  try {
    lint_log(events);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::invalid_transition);
  }
}

TEST_CASE("stages follow the graph") {
  const Session s = run_session(LoopConfig(quick_settings()), Vocab::standard(),
                                oracle_source(OracleSpec::parse(kLoopOracle)), 8, 3);
  Stage prev = Stage::multimodal_train;
  for (Stage next : entered(s)) {
    CHECK(is_edge(prev, next));
    prev = next;
  }
}

TEST_CASE("file-backed session log") {
  const auto dir = scratch_dir("log");
  const auto path = dir / "session.jsonl";
  {
    SessionLog log(path, true);
    CHECK(log.events().empty());
    Event e;
    e.kind = EventKind::session_created;
    e.iso_time = logical_time(1);
    CHECK(log.append(e) == 1);
    e.kind = EventKind::stage_entered;
    e.payload = Json{{"stage", "Generate"}};
    CHECK(log.append(e) == 2);
    e.seq = 7;
    CHECK_THROWS(log.append(e));
  }
  {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << R"({"seq":3,"iso_time":"x","ki)";
  }
  const auto size_before = std::filesystem::file_size(path);
  {
    SessionLog log(path, false);
    CHECK(log.recovery().truncated);
    CHECK(log.recovery().last_seq == 2);
    CHECK(log.recovery().dropped_bytes == 27);
    CHECK(std::filesystem::file_size(path) == size_before - 27);
    REQUIRE(log.events().size() == 2);
    CHECK(log.events()[1].payload.at("stage") == "Generate");
    Event e;
    e.kind = EventKind::generated;
    CHECK(log.append(e) == 3);
  }
  CHECK(parse_event_log(std::string(std::istreambuf_iterator<char>(std::ifstream(path).rdbuf()), {})).size() == 3);

  const auto empty = dir / "empty.jsonl";
  std::ofstream(empty).close();
  try {
    session_load(empty);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("missing session_created") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("event lines") {
  Event e;
  e.seq = 4;
  e.iso_time = logical_time(4);
  e.kind = EventKind::feedback;
  e.payload = Json{{"rating", 0.5}};
  const Event back = parse_event_line(to_line(e), 1);
  CHECK(to_line(back) == to_line(e));
  CHECK(to_line(e).find('\n') == std::string::npos);
  CHECK_THROWS_AS(parse_event_line("{not json", 3), ParseError);
  CHECK_THROWS_AS(parse_event_line(R"({"seq":1,"iso_time":"x","kind":"party","payload":{}})", 1), ParseError);
  CHECK_THROWS(parse_event_log(to_line(e) + "\n"));
  CHECK(logical_time(1) != logical_time(2));
}
