#pragma once

// Concurrent live sessions behind an HTTP API under /api/v1. Each session runs
// on its own worker thread and blocks at ArtistEval until feedback arrives in
// its mailbox.

#include "atelier/engine.hpp"
#include "atelier/event_log.hpp"
#include "atelier/session.hpp"
#include "atelier/vocab.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace atelier {

struct ServiceOptions {
  std::filesystem::path data_dir;  // empty keeps logs in memory only
  Vocab vocab = Vocab::standard();
  bool fsync_on_append = false;
  int max_iterations = 1000;
  Clock clock = wall_time;
};

struct SessionSnapshot {
  std::string id;
  Stage stage = Stage::multimodal_train;
  int iteration = 0;
  std::string latest_score;  // canonical text, empty before the first generation
  std::vector<double> ratings;
  bool awaiting_feedback = false;
  std::string error;  // set when the worker stopped on an error
};

Json to_json(const SessionSnapshot& s);

class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Starts a session; ids are "s1", "s2", ... per process.
  std::string create_session(const LoopConfig& config, std::uint64_t seed);
  SessionSnapshot snapshot(const std::string& id) const;
  /// Queues feedback; throws invalid_transition once the session has finished.
  void submit_feedback(const std::string& id, const FeedbackEvent& event);
  std::vector<Event> events(const std::string& id, std::uint64_t since) const;
  std::string latest_artifact(const std::string& id) const;
  const Vocab& vocab() const { return options_.vocab; }

  /// Blocks until the session reaches `stage` or waits for feedback at it.
  bool wait_for(const std::string& id, Stage stage, std::chrono::milliseconds timeout) const;

  /// Registers the /api/v1 routes.
  void mount(httplib::Server& server);

 private:
  struct Live;
  std::shared_ptr<Live> find(const std::string& id) const;

  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Live>> sessions_;
  std::uint64_t next_id_ = 1;
};

/// Blocking server on host:port until stop() is called from another thread.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  void listen();
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace atelier
