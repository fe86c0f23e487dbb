#include "atelier/service.hpp"

#include "atelier/artistio.hpp"
#include "atelier/error.hpp"

#include <httplib.h>

#include <charconv>
#include <condition_variable>
#include <deque>
#include <thread>

namespace atelier {

Json to_json(const SessionSnapshot& s) {
  return Json{{"id", s.id},
              {"stage", to_string(s.stage)},
              {"iteration", s.iteration},
              {"latest_score", s.latest_score},
              {"ratings", s.ratings},
              {"awaiting_feedback", s.awaiting_feedback},
              {"error", s.error}};
}

struct Service::Live {
  mutable std::mutex m;
  mutable std::condition_variable cv;
  std::deque<FeedbackEvent> mailbox;
  bool stop = false;
  bool finished = false;
  SessionSnapshot snap;
  std::vector<Event> events;
  std::optional<SessionLog> log;
  std::thread worker;
};

Service::Service(ServiceOptions options) : options_(std::move(options)) {
  if (!options_.data_dir.empty()) std::filesystem::create_directories(options_.data_dir);
}

Service::~Service() {
  std::map<std::string, std::shared_ptr<Live>> all;
  {
    std::lock_guard lock(mutex_);
    all = sessions_;
  }
  for (auto& [id, live] : all) {
    {
      std::lock_guard lock(live->m);
      live->stop = true;
    }
    live->cv.notify_all();
  }
  for (auto& [id, live] : all)
    if (live->worker.joinable()) live->worker.join();
}

std::shared_ptr<Service::Live> Service::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::not_found, "no session '" + id + "'");
  return it->second;
}

std::string Service::create_session(const LoopConfig& config, std::uint64_t seed) {
  options_.vocab.indices(config->prompt);
  auto live = std::make_shared<Live>();
  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = "s" + std::to_string(next_id_++);
    sessions_[id] = live;
  }
  live->snap.id = id;
  if (!options_.data_dir.empty())
    live->log.emplace(options_.data_dir / (id + ".jsonl"), options_.fsync_on_append);

  const auto publish = [live](const Session& s) {
    std::lock_guard lock(live->m);
    live->snap.stage = s.stage();
    live->snap.iteration = s.state().iteration;
    live->snap.ratings = s.ratings();
    if (s.state().latest) live->snap.latest_score = laban::serialize_score(*s.state().latest);
    live->snap.awaiting_feedback = s.stage() == Stage::artist_eval && live->mailbox.empty();
    live->cv.notify_all();
  };
  Session::Sink sink = [live](const Event& e) {
    std::lock_guard lock(live->m);
    if (live->log) live->log->append(e);
    live->events.push_back(e);
  };

  live->worker = std::thread([this, live, config, seed, publish, sink] {
    try {
      Session session(config, options_.vocab, seed, options_.clock, sink);
      publish(session);
      while (session.stage() != Stage::accepted && session.state().iteration < options_.max_iterations) {
        if (session.stage() == Stage::artist_eval) {
          std::unique_lock lock(live->m);
          live->cv.wait(lock, [&] { return live->stop || !live->mailbox.empty(); });
          if (live->stop) break;
          FeedbackEvent fb = live->mailbox.front();
          live->mailbox.pop_front();
          live->snap.awaiting_feedback = false;
          lock.unlock();
          session.flow_step(fb);
        } else {
          {
            std::lock_guard lock(live->m);
            if (live->stop) break;
          }
          session.flow_step();
        }
        publish(session);
      }
    } catch (const std::exception& e) {
      std::lock_guard lock(live->m);
      live->snap.error = e.what();
    }
    std::lock_guard lock(live->m);
    live->finished = true;
    live->snap.awaiting_feedback = false;
    live->cv.notify_all();
  });
  return id;
}

SessionSnapshot Service::snapshot(const std::string& id) const {
  const auto live = find(id);
  std::lock_guard lock(live->m);
  return live->snap;
}

void Service::submit_feedback(const std::string& id, const FeedbackEvent& event) {
  validate(event);
  options_.vocab.indices(event.judgement.text);
  const auto live = find(id);
  {
    std::lock_guard lock(live->m);
    if (live->finished || live->snap.stage == Stage::accepted)
      throw Error(ErrorCode::invalid_transition, "session '" + id + "' is finished");
    live->mailbox.push_back(event);
    live->snap.awaiting_feedback = false;
  }
  live->cv.notify_all();
}

std::vector<Event> Service::events(const std::string& id, std::uint64_t since) const {
  const auto live = find(id);
  std::lock_guard lock(live->m);
  std::vector<Event> out;
  for (const auto& e : live->events)
    if (e.seq > since) out.push_back(e);
  return out;
}

std::string Service::latest_artifact(const std::string& id) const {
  const auto live = find(id);
  std::lock_guard lock(live->m);
  if (live->snap.latest_score.empty()) throw Error(ErrorCode::not_found, "session '" + id + "' has no score yet");
  return live->snap.latest_score;
}

bool Service::wait_for(const std::string& id, Stage stage, std::chrono::milliseconds timeout) const {
  const auto live = find(id);
  std::unique_lock lock(live->m);
  return live->cv.wait_for(lock, timeout, [&] {
    if (live->snap.stage != stage) return live->finished;
    return stage != Stage::artist_eval || live->snap.awaiting_feedback;
  }) && live->snap.stage == stage;
}

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::invalid_transition: return 409;
    case ErrorCode::storage:
    case ErrorCode::numeric: return 500;
    default: return 400;
  }
}

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, http_status(code), Json{{"code", to_string(code)}, {"message", message}});
}

template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const Json::exception& e) {
      send_error(res, ErrorCode::syntax, e.what());
    }
  };
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  Json j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::syntax, "request body must be a JSON object");
  return j;
}

LoopConfig config_from_json(const Json& c) {
  if (c.is_null()) return LoopConfig();
  if (c.is_string()) return LoopConfig::parse(c.get<std::string>());
  if (!c.is_object()) throw Error(ErrorCode::invalid_config, "config must be a string or an object");
  std::string text;
  for (const auto& [key, value] : c.items()) {
    text += key + " = ";
    if (value.is_string()) {
      text += value.get<std::string>();
    } else if (value.is_array()) {
      for (const auto& w : value) text += " " + w.get<std::string>();
    } else {
      text += value.dump();
    }
    text += "\n";
  }
  return LoopConfig::parse(text);
}

Json event_json(const Event& e) {
  return Json{{"seq", e.seq}, {"iso_time", e.iso_time}, {"kind", to_string(e.kind)}, {"payload", e.payload}};
}

}  // namespace

void Service::mount(httplib::Server& server) {
  server.Post("/api/v1/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const Json body = parse_body(req);
                const LoopConfig config = config_from_json(body.contains("config") ? body["config"] : Json());
                const std::uint64_t seed = body.contains("seed") ? body["seed"].get<std::uint64_t>() : 0;
                send_json(res, 201, Json{{"id", create_session(config, seed)}});
              }));
  server.Get(R"(/api/v1/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, to_json(snapshot(req.matches[1])));
             }));
  server.Post(R"(/api/v1/sessions/([^/]+)/feedback)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                submit_feedback(req.matches[1], feedback_from_json(parse_body(req)));
                send_json(res, 202, Json{{"queued", true}});
              }));
  server.Get(R"(/api/v1/sessions/([^/]+)/events)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               std::uint64_t since = 0;
               if (req.has_param("since")) {
                 const std::string s = req.get_param_value("since");
                 const auto r = std::from_chars(s.data(), s.data() + s.size(), since);
                 if (r.ec != std::errc() || r.ptr != s.data() + s.size())
                   throw Error(ErrorCode::invalid_argument, "since must be a sequence number");
               }
               Json out = Json::array();
               for (const auto& e : events(req.matches[1], since)) out.push_back(event_json(e));
               send_json(res, 200, out);
             }));
  server.Get(R"(/api/v1/sessions/([^/]+)/artifact/latest)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               res.set_content(latest_artifact(req.matches[1]), "text/plain");
             }));
  server.Get("/api/v1/vocab", guarded([this](const httplib::Request&, httplib::Response& res) {
               Json words = Json::array();
               for (const auto& e : options_.vocab.entries()) {
                 Json w{{"word", e.word}, {"role", to_string(e.role)}};
                 if (e.column) w["column"] = laban::name_of(*e.column);
                 if (e.role == Role::adverb) w["duration_scale"] = e.duration_scale;
                 words.push_back(std::move(w));
               }
               send_json(res, 200, Json{{"words", words}});
             }));
}

HttpServer::HttpServer(Service& service) : server_(std::make_unique<httplib::Server>()) { service.mount(*server_); }

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  if (!server_->bind_to_port(host, port)) throw Error(ErrorCode::storage, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_) server_->stop();
}

}  // namespace atelier
