#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace atelier {

/// Exact rational beat value, always in lowest terms with a positive denominator.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1);

  std::int64_t num() const noexcept { return num_; }
  std::int64_t den() const noexcept { return den_; }
  double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

  /// Parses `a/b`; the numerator may be negative. Returns nullopt when malformed.
  static std::optional<Rational> parse(std::string_view text);
  std::string to_string() const;

  friend Rational operator+(Rational a, Rational b);
  friend Rational operator-(Rational a, Rational b);
  friend Rational operator*(Rational a, Rational b);
  Rational& operator+=(Rational b) { return *this = *this + b; }

  friend bool operator==(Rational a, Rational b) noexcept = default;
  friend std::strong_ordering operator<=>(Rational a, Rational b) noexcept;

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace atelier
