// Command-line entry points.

#include "atelier/artistio.hpp"
#include "atelier/error.hpp"
#include "atelier/labanstr.hpp"
#include "atelier/service.hpp"
#include "atelier/session.hpp"
#include "atelier/snapshot.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace atelier;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw Error(ErrorCode::storage, "cannot write " + path);
}

LoopConfig load_config(const std::string& path) { return path.empty() ? LoopConfig() : LoopConfig::parse(read_file(path)); }

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int run_command(const std::string& oracle_path, const std::string& config_path, const std::string& out, int iters,
                std::uint64_t seed) {
  const OracleSpec spec = OracleSpec::parse(read_file(oracle_path));
  SessionLog log(out, false);
  if (log.recovery().truncated)
    std::cerr << "recovered " << out << ": dropped " << log.recovery().dropped_bytes << " bytes of a torn write\n";

  std::optional<Session> session;
  if (log.events().empty()) {
    session.emplace(load_config(config_path), Vocab::standard(), seed, logical_time,
                    [&log](const Event& e) { log.append(e); });
  } else {
    session.emplace(session_load(log.events()));
    for (std::size_t i = log.events().size(); i < session->events().size(); ++i) log.append(session->events()[i]);
    session->set_sink([&log](const Event& e) { log.append(e); });
    std::cerr << "resumed at iteration " << session->state().iteration << "\n";
  }
  drive(
      *session, [&](const laban::Score& s, int) { return scripted_feedback(spec, s); }, iters);

  const auto ratings = session->ratings();
  std::cout << "stage " << to_string(session->stage()) << "\niterations " << session->state().iteration << "\n";
  if (!ratings.empty()) {
    std::cout << "first_rating " << ratings.front() << "\nlast_rating " << ratings.back() << "\nbest_rating "
              << session->state().best_rating << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"atelier: artist-in-the-loop symbolic dance generation"};
  app.require_subcommand(1);

  std::string vocab_out;
  auto* init_vocab = app.add_subcommand("init-vocab", "write the built-in vocabulary");
  init_vocab->add_option("file", vocab_out, "output file")->required();

  std::string config_path;
  std::string params_out = "atelier.params";
  std::uint64_t seed = 0;
  auto* train = app.add_subcommand("train", "run multimodal and generator training, write parameters");
  train->add_option("--config", config_path, "loop config file");
  train->add_option("--seed", seed, "seed");
  train->add_option("--out", params_out, "parameter snapshot file");

  std::string oracle_path;
  std::string log_out;
  int iters = 20;
  auto* run = app.add_subcommand("run", "run a session against a scripted oracle; resumes an existing log");
  run->add_option("--oracle", oracle_path, "oracle spec file")->required();
  run->add_option("--iters", iters, "feedback iterations")->check(CLI::NonNegativeNumber);
  run->add_option("--seed", seed, "seed");
  run->add_option("--out", log_out, "event log (JSONL)")->required();
  run->add_option("--config", config_path, "loop config file");

  std::string replay_path;
  auto* replay = app.add_subcommand("replay", "re-execute a log and check it reproduces");
  replay->add_option("--log", replay_path, "event log")->required();

  std::string score_path;
  auto* lint = app.add_subcommand("lint", "parse and validate a score file");
  lint->add_option("score", score_path, "score file")->required();

  int port = 8080;
  std::string data_dir = "sessions";
  auto* serve = app.add_subcommand("serve", "serve the HTTP session API");
  serve->add_option("--port", port, "port");
  serve->add_option("--data", data_dir, "directory for session logs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*init_vocab) {
      write_file(vocab_out, Vocab::standard().serialize());
    } else if (*train) {
      Session session(load_config(config_path), Vocab::standard(), seed);
      session.flow_step();
      session.flow_step();
      for (const auto& e : session.events())
        if (e.kind == EventKind::phase1_trace) {
          const auto& trace = e.payload["trace"];
          std::cout << e.payload["objective"].get<std::string>() << " " << trace.front().get<double>() << " -> "
                    << trace.back().get<double>() << "\n";
        }
      write_file(params_out, write_snapshot(session.state().encoder, session.state().composer));
    } else if (*run) {
      return run_command(oracle_path, config_path, log_out, iters, seed);
    } else if (*replay) {
      const auto log = parse_event_log(read_file(replay_path));
      lint_log(log);
      const Session session = session_load(log);
      std::cout << "verified " << log.size() << " events, " << session.state().iteration << " feedback, stage "
                << to_string(session.stage()) << "\n";
    } else if (*lint) {
      const laban::Score score = laban::parse_score(read_file(score_path));
      const auto report = laban::validate_score(score);
      for (const auto& v : report.violations) std::cout << score_path << ": " << v.message << "\n";
      if (!report.ok()) return 1;
      std::cout << score_path << ": ok, " << score.tokens.size() << " tokens\n";
    } else if (*serve) {
      ServiceOptions options;
      options.data_dir = data_dir;
      Service service(std::move(options));
      HttpServer server(service);
      const int bound = server.bind("0.0.0.0", port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on port " << bound << std::endl;
      server.listen();
      g_server = nullptr;
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
