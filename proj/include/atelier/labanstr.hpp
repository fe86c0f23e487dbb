#pragma once

// LabanSTR: note-based symbolic tokens for Labanotation scores. Every token
// carries its own start and duration, so a score is a multiset of tokens and
// has a single canonical ordering.

#include "atelier/error.hpp"
#include "atelier/rational.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace atelier::laban {

enum class Column : std::uint8_t { support_l, support_r, leg_l, leg_r, body, arm_l, arm_r, head };
enum class Direction : std::uint8_t {
  place, forward, back, left, right, left_forward, right_forward, left_back, right_back
};
enum class Level : std::uint8_t { low, middle, high };
enum class Rotation : std::uint8_t { none, cw_quarter, cw_half, ccw_quarter, ccw_half };
enum class Flexion : std::uint8_t { none, flexed, extended };
enum class Path : std::uint8_t { none, straight, circular_cw, circular_ccw };
enum class Facing : std::uint8_t {
  front, front_right, right, back_right, back, back_left, left, front_left
};
enum class Position : std::uint8_t {
  upstage_left, upstage_center, upstage_right,
  center_left, center_center, center_right,
  downstage_left, downstage_center, downstage_right
};

template <class E>
struct EnumTraits;

#define ATELIER_ENUM_TRAITS(E, KEY, ...)                                        \
  template <>                                                                   \
  struct EnumTraits<E> {                                                        \
    static constexpr std::string_view key = KEY;                                \
    static constexpr auto names = std::to_array<std::string_view>({__VA_ARGS__}); \
  };

ATELIER_ENUM_TRAITS(Column, "col", "support_l", "support_r", "leg_l", "leg_r", "body", "arm_l",
                    "arm_r", "head")
ATELIER_ENUM_TRAITS(Direction, "dir", "place", "forward", "back", "left", "right", "left_forward",
                    "right_forward", "left_back", "right_back")
ATELIER_ENUM_TRAITS(Level, "lvl", "low", "middle", "high")
ATELIER_ENUM_TRAITS(Rotation, "rot", "none", "cw_quarter", "cw_half", "ccw_quarter", "ccw_half")
ATELIER_ENUM_TRAITS(Flexion, "flex", "none", "flexed", "extended")
ATELIER_ENUM_TRAITS(Path, "path", "none", "straight", "circular_cw", "circular_ccw")
ATELIER_ENUM_TRAITS(Facing, "face", "front", "front_right", "right", "back_right", "back",
                    "back_left", "left", "front_left")
ATELIER_ENUM_TRAITS(Position, "pos", "upstage_left", "upstage_center", "upstage_right",
                    "center_left", "center_center", "center_right", "downstage_left",
                    "downstage_center", "downstage_right")

#undef ATELIER_ENUM_TRAITS

template <class E>
constexpr std::size_t cardinality() {
  return EnumTraits<E>::names.size();
}

template <class E>
constexpr std::size_t index_of(E e) {
  return static_cast<std::size_t>(e);
}

template <class E>
constexpr std::string_view name_of(E e) {
  return EnumTraits<E>::names[index_of(e)];
}

template <class E>
constexpr std::optional<E> parse_enum(std::string_view text) {
  for (std::size_t i = 0; i < EnumTraits<E>::names.size(); ++i)
    if (EnumTraits<E>::names[i] == text) return static_cast<E>(i);
  return std::nullopt;
}

/// parse_enum that throws unknown_enum naming the field.
template <class E>
E require_enum(std::string_view text) {
  if (auto e = parse_enum<E>(text)) return *e;
  throw Error(ErrorCode::unknown_enum, "unknown value '" + std::string(text) + "' for field '" +
                                           std::string(EnumTraits<E>::key) + "'");
}

inline constexpr std::size_t kColumns = cardinality<Column>();
inline constexpr std::size_t kDirections = cardinality<Direction>();
inline constexpr std::size_t kLevels = cardinality<Level>();
/// Number of (column, direction, level) attribute cells.
inline constexpr std::size_t kCells = kColumns * kDirections * kLevels;

struct Meter {
  int beats = 4;
  int unit = 4;
  friend bool operator==(const Meter&, const Meter&) = default;
  friend auto operator<=>(const Meter&, const Meter&) = default;
};

struct TimeAttrs {
  Meter meter;
  Rational start;
  Rational duration{1};
  friend bool operator==(const TimeAttrs&, const TimeAttrs&) = default;
};

struct SpatialAttrs {
  Path path = Path::none;
  Facing facing = Facing::front;
  Position position = Position::center_center;
  friend bool operator==(const SpatialAttrs&, const SpatialAttrs&) = default;
};

struct ActionAttrs {
  Column column = Column::body;
  Direction direction = Direction::place;
  Level level = Level::middle;
  Rotation rotation = Rotation::none;
  Flexion flexion = Flexion::none;
  friend bool operator==(const ActionAttrs&, const ActionAttrs&) = default;
};

struct LabanToken {
  TimeAttrs time;
  SpatialAttrs spatial;
  ActionAttrs action;
  friend bool operator==(const LabanToken&, const LabanToken&) = default;

  Rational end() const { return time.start + time.duration; }
};

struct Score {
  Meter meter;
  std::vector<LabanToken> tokens;
  friend bool operator==(const Score&, const Score&) = default;
};

/// Index of the (column, direction, level) cell in [0, kCells).
constexpr std::size_t cell_index(Column c, Direction d, Level l) {
  return (index_of(c) * kDirections + index_of(d)) * kLevels + index_of(l);
}

struct Cell {
  Column column;
  Direction direction;
  Level level;
  friend bool operator==(const Cell&, const Cell&) = default;
};

constexpr Cell cell_at(std::size_t index) {
  return Cell{static_cast<Column>(index / (kDirections * kLevels)),
              static_cast<Direction>((index / kLevels) % kDirections),
              static_cast<Level>(index % kLevels)};
}

/// Strict comparison by the canonical key: start, column, duration, direction,
/// level, rotation, flexion, path, facing, position, then meter.
bool canonical_less(const LabanToken& a, const LabanToken& b);

Score parse_score(std::string_view text);
std::string serialize_score(const Score& s);
std::string serialize_token(const LabanToken& t);
Score canonicalize(Score s);

struct Violation {
  enum class Kind { overlap, nonpositive_duration, negative_start, meter_mismatch };
  Kind kind;
  std::size_t first;                  // token index
  std::optional<std::size_t> second;  // other token, for overlaps
  std::string message;
  friend bool operator==(const Violation& a, const Violation& b) {
    return a.kind == b.kind && a.first == b.first && a.second == b.second;
  }
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate_score(const Score& s);

using Vec3 = std::array<double, 3>;

/// Kinematic target of a direction/level pair: (dx, dy) from the direction
/// table and z from the level.
Vec3 target_vector(Direction d, Level l);

/// Column value at time t (beats). The score must be valid.
Vec3 column_value_at(const Score& s, Column column, double t);

struct ChannelSamples {
  int samples_per_beat = 1;
  /// Sample k of each column is at time k / samples_per_beat.
  std::array<std::vector<Vec3>, kColumns> columns;
};

/// Samples every column from t = 0 to max(score end, horizon) inclusive.
ChannelSamples decode_channels(const Score& s, int samples_per_beat, double horizon_beats = 0.0);

struct Histogram {
  std::array<double, kCells> mass{};
  bool empty = true;
};

Histogram attribute_histogram(const Score& s);

}  // namespace atelier::laban
