#pragma once

// Append-only JSONL session log: one {seq, iso_time, kind, payload} object per line.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace atelier {

using Json = nlohmann::ordered_json;

enum class EventKind : std::uint8_t {
  session_created,
  stage_entered,
  generated,
  feedback,
  phase1_trace,
  phase2_trace,
  accepted,
};
std::string_view to_string(EventKind k);
EventKind parse_event_kind(std::string_view text);

struct Event {
  std::uint64_t seq = 0;
  std::string iso_time;
  EventKind kind = EventKind::session_created;
  Json payload = Json::object();
};

/// Compact JSON, no trailing newline.
std::string to_line(const Event& e);
/// Throws ParseError(line = line_no) naming the reason.
Event parse_event_line(std::string_view line, std::size_t line_no);
/// Every line must parse and seqs must run 1, 2, 3, ...
std::vector<Event> parse_event_log(std::string_view text);
std::string serialize_event_log(const std::vector<Event>& events);

/// Timestamp source keyed by seq. The logical clock makes logs reproducible.
using Clock = std::function<std::string(std::uint64_t seq)>;
std::string logical_time(std::uint64_t seq);
std::string wall_time(std::uint64_t seq);

struct RecoveryReport {
  bool truncated = false;
  std::size_t dropped_bytes = 0;
  std::uint64_t last_seq = 0;
};

/// File-backed log. Opening recovers from a torn final write by truncating to
/// the last complete line.
class SessionLog {
 public:
  SessionLog(std::filesystem::path path, bool fsync_on_append);
  SessionLog(const SessionLog&) = delete;
  SessionLog& operator=(const SessionLog&) = delete;
  SessionLog(SessionLog&&) noexcept;
  SessionLog& operator=(SessionLog&&) noexcept;
  ~SessionLog();

  /// Appends with the next seq; the event's own seq must match or be 0.
  std::uint64_t append(Event e);
  const std::vector<Event>& events() const { return events_; }
  const RecoveryReport& recovery() const { return recovery_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  bool fsync_ = false;
  int fd_ = -1;
  std::vector<Event> events_;
  RecoveryReport recovery_;
};

}  // namespace atelier
