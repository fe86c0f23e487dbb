#include "atelier/event_log.hpp"

#include "atelier/error.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

namespace atelier {

namespace {

constexpr std::array<std::string_view, 7> kKindNames = {"session_created", "stage_entered", "generated", "feedback",
                                                        "phase1_trace",    "phase2_trace",  "accepted"};

std::string format_utc(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

[[noreturn]] void storage_error(const std::string& what) {
  throw Error(ErrorCode::storage, what + ": " + std::strerror(errno));
}

}  // namespace

std::string_view to_string(EventKind k) { return kKindNames[static_cast<std::size_t>(k)]; }

EventKind parse_event_kind(std::string_view text) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == text) return static_cast<EventKind>(i);
  throw Error(ErrorCode::unknown_enum, "unknown event kind '" + std::string(text) + "'");
}

std::string to_line(const Event& e) {
  Json j;
  j["seq"] = e.seq;
  j["iso_time"] = e.iso_time;
  j["kind"] = to_string(e.kind);
  j["payload"] = e.payload;
  return j.dump();
}

Event parse_event_line(std::string_view line, std::size_t line_no) {
  const int ln = static_cast<int>(line_no);
  Json j = Json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError(ErrorCode::syntax, ln, 1, "not a JSON object");
  for (const char* key : {"seq", "iso_time", "kind", "payload"})
    if (!j.contains(key)) throw ParseError(ErrorCode::syntax, ln, 1, std::string("missing field '") + key + "'");
  if (!j["seq"].is_number_unsigned()) throw ParseError(ErrorCode::syntax, ln, 1, "seq must be a positive integer");
  if (!j["iso_time"].is_string() || !j["kind"].is_string())
    throw ParseError(ErrorCode::syntax, ln, 1, "iso_time and kind must be strings");
  Event e;
  e.seq = j["seq"].get<std::uint64_t>();
  e.iso_time = j["iso_time"].get<std::string>();
  try {
    e.kind = parse_event_kind(j["kind"].get<std::string>());
  } catch (const Error& err) {
    throw ParseError(ErrorCode::unknown_enum, ln, 1, err.what());
  }
  e.payload = std::move(j["payload"]);
  return e;
}

std::vector<Event> parse_event_log(std::string_view text) {
  std::vector<Event> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    ++line_no;
    if (end == std::string_view::npos)
      throw ParseError(ErrorCode::syntax, static_cast<int>(line_no), 1, "incomplete final line");
    Event e = parse_event_line(text.substr(pos, end - pos), line_no);
    if (e.seq != out.size() + 1)
      throw ParseError(ErrorCode::storage, static_cast<int>(line_no), 1,
                       "seq gap: expected " + std::to_string(out.size() + 1) + ", found " + std::to_string(e.seq));
    out.push_back(std::move(e));
    pos = end + 1;
  }
  return out;
}

std::string serialize_event_log(const std::vector<Event>& events) {
  std::string out;
  for (const auto& e : events) {
    out += to_line(e);
    out += '\n';
  }
  return out;
}

std::string logical_time(std::uint64_t seq) {
  // 2000-01-01T00:00:00Z plus one second per event
  return format_utc(static_cast<std::time_t>(946684800 + seq));
}

std::string wall_time(std::uint64_t) {
  return format_utc(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now()));
}

SessionLog::SessionLog(std::filesystem::path path, bool fsync_on_append) : path_(std::move(path)), fsync_(fsync_on_append) {
  std::string text;
  if (std::filesystem::exists(path_)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) storage_error("cannot read " + path_.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  const auto last_newline = text.rfind('\n');
  const std::size_t keep = last_newline == std::string::npos ? 0 : last_newline + 1;
  if (keep < text.size()) {
    recovery_.truncated = true;
    recovery_.dropped_bytes = text.size() - keep;
    text.resize(keep);
    std::filesystem::resize_file(path_, keep);
  }
  events_ = parse_event_log(text);
  recovery_.last_seq = events_.size();

  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) storage_error("cannot open " + path_.string());
}

SessionLog::SessionLog(SessionLog&& other) noexcept
    : path_(std::move(other.path_)),
      fsync_(other.fsync_),
      fd_(std::exchange(other.fd_, -1)),
      events_(std::move(other.events_)),
      recovery_(other.recovery_) {}

SessionLog& SessionLog::operator=(SessionLog&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    path_ = std::move(other.path_);
    fsync_ = other.fsync_;
    fd_ = std::exchange(other.fd_, -1);
    events_ = std::move(other.events_);
    recovery_ = other.recovery_;
  }
  return *this;
}

SessionLog::~SessionLog() {
  if (fd_ >= 0) ::close(fd_);
}

std::uint64_t SessionLog::append(Event e) {
  const std::uint64_t seq = events_.size() + 1;
  if (e.seq != 0 && e.seq != seq)
    throw Error(ErrorCode::storage, "seq gap: expected " + std::to_string(seq) + ", got " + std::to_string(e.seq));
  e.seq = seq;
  const std::string line = to_line(e) + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const auto n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      storage_error("write failed for " + path_.string());
    }
    written += static_cast<std::size_t>(n);
  }
  if (fsync_ && ::fsync(fd_) != 0) storage_error("fsync failed for " + path_.string());
  events_.push_back(std::move(e));
  return seq;
}

}  // namespace atelier
