#include "atelier/rational.hpp"

#include "atelier/error.hpp"

#include <charconv>
#include <numeric>

namespace atelier {

namespace {

std::int64_t narrow(__int128 v) {
  if (v > INT64_MAX || v < INT64_MIN) throw Error(ErrorCode::numeric, "rational overflow");
  return static_cast<std::int64_t>(v);
}

Rational from_wide(__int128 num, __int128 den) {
  if (den < 0) {
    num = -num;
    den = -den;
  }
  __int128 a = num < 0 ? -num : num;
  __int128 b = den;
  while (b != 0) {
    const __int128 t = a % b;
    a = b;
    b = t;
  }
  if (a > 1) {
    num /= a;
    den /= a;
  }
  return Rational(narrow(num), narrow(den));
}

}  // namespace

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw Error(ErrorCode::malformed_rational, "zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  num_ = g > 1 ? num / g : num;
  den_ = g > 1 ? den / g : den;
}

std::optional<Rational> Rational::parse(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) return std::nullopt;
  const std::string_view lhs = text.substr(0, slash);
  const std::string_view rhs = text.substr(slash + 1);
  const auto digits_only = [](std::string_view s) {
    if (s.empty() || s.size() > 18) return false;
    for (char c : s)
      if (c < '0' || c > '9') return false;
    return true;
  };
  const bool negative = !lhs.empty() && lhs.front() == '-';
  const std::string_view num_digits = negative ? lhs.substr(1) : lhs;
  if (!digits_only(num_digits) || !digits_only(rhs)) return std::nullopt;
  std::int64_t num = 0;
  std::int64_t den = 0;
  std::from_chars(num_digits.data(), num_digits.data() + num_digits.size(), num);
  std::from_chars(rhs.data(), rhs.data() + rhs.size(), den);
  if (den == 0) return std::nullopt;
  return Rational(negative ? -num : num, den);
}

std::string Rational::to_string() const { return std::to_string(num_) + "/" + std::to_string(den_); }

Rational operator+(Rational a, Rational b) {
  return from_wide(static_cast<__int128>(a.num_) * b.den_ + static_cast<__int128>(b.num_) * a.den_,
                   static_cast<__int128>(a.den_) * b.den_);
}

Rational operator-(Rational a, Rational b) {
  return from_wide(static_cast<__int128>(a.num_) * b.den_ - static_cast<__int128>(b.num_) * a.den_,
                   static_cast<__int128>(a.den_) * b.den_);
}

Rational operator*(Rational a, Rational b) {
  return from_wide(static_cast<__int128>(a.num_) * b.num_, static_cast<__int128>(a.den_) * b.den_);
}

std::strong_ordering operator<=>(Rational a, Rational b) noexcept {
  const __int128 lhs = static_cast<__int128>(a.num_) * b.den_;
  const __int128 rhs = static_cast<__int128>(b.num_) * a.den_;
  if (lhs < rhs) return std::strong_ordering::less;
  if (lhs > rhs) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

}  // namespace atelier
