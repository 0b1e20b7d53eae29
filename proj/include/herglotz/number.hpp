#pragma once

// Exact-or-float scalar used as the coefficient type of canonical expressions.
// Arithmetic stays exact (GMP rationals) until a float operand shows up, after
// which the result is a double.

#include <gmpxx.h>

#include <charconv>
#include <cmath>
#include <compare>
#include <stdexcept>
#include <string>
#include <system_error>
#include <variant>

namespace herglotz {

using Rational = mpq_class;

class Number {
 public:
  Number() : value_(Rational(0)) {}
  Number(long v) : value_(Rational(v)) {}  // NOLINT(google-explicit-constructor)
  Number(int v) : value_(Rational(v)) {}   // NOLINT(google-explicit-constructor)
  explicit Number(Rational v) : value_(std::move(v)) { std::get<Rational>(value_).canonicalize(); }
  explicit Number(double v) : value_(v) {}

  static Number ratio(long num, long den) {
    if (den == 0) throw std::domain_error("zero denominator");
    Rational q(num, den);
    q.canonicalize();
    return Number(std::move(q));
  }

  bool is_exact() const { return std::holds_alternative<Rational>(value_); }
  const Rational& rational() const { return std::get<Rational>(value_); }
  double floating() const { return std::get<double>(value_); }

  double to_double() const {
    return is_exact() ? rational().get_d() : floating();
  }

  bool is_zero() const { return is_exact() ? sgn(rational()) == 0 : floating() == 0.0; }
  bool is_exact_one() const { return is_exact() && rational() == 1; }
  bool is_exact_integer() const { return is_exact() && rational().get_den() == 1; }
  bool is_negative() const { return is_exact() ? sgn(rational()) < 0 : std::signbit(floating()); }

  friend Number operator+(const Number& a, const Number& b) {
    if (a.is_exact() && b.is_exact()) return Number(Rational(a.rational() + b.rational()));
    return Number(a.to_double() + b.to_double());
  }
  friend Number operator-(const Number& a, const Number& b) {
    if (a.is_exact() && b.is_exact()) return Number(Rational(a.rational() - b.rational()));
    return Number(a.to_double() - b.to_double());
  }
  friend Number operator*(const Number& a, const Number& b) {
    if (a.is_exact() && b.is_exact()) return Number(Rational(a.rational() * b.rational()));
    return Number(a.to_double() * b.to_double());
  }
  friend Number operator/(const Number& a, const Number& b) {
    if (b.is_zero()) throw std::domain_error("division by zero");
    if (a.is_exact() && b.is_exact()) return Number(Rational(a.rational() / b.rational()));
    return Number(a.to_double() / b.to_double());
  }
  Number operator-() const {
    if (is_exact()) return Number(Rational(-rational()));
    return Number(-floating());
  }

  Number pow(long n) const {
    if (n < 0) return Number(1) / pow(-n);
    if (!is_exact()) return Number(std::pow(floating(), static_cast<double>(n)));
    mpz_class num, den;
    mpz_pow_ui(num.get_mpz_t(), rational().get_num_mpz_t(), static_cast<unsigned long>(n));
    mpz_pow_ui(den.get_mpz_t(), rational().get_den_mpz_t(), static_cast<unsigned long>(n));
    return Number(Rational(num, den));
  }

  // Structural identity: an exact 2 and a float 2.0 are different numbers.
  friend bool operator==(const Number& a, const Number& b) {
    if (a.is_exact() != b.is_exact()) return false;
    if (a.is_exact()) return a.rational() == b.rational();
    return a.floating() == b.floating();
  }

  // Total order used for canonical sorting: exact before float, then by value.
  friend std::strong_ordering compare(const Number& a, const Number& b) {
    if (a.is_exact() != b.is_exact()) return a.is_exact() ? std::strong_ordering::less
                                                          : std::strong_ordering::greater;
    if (a.is_exact()) {
      int c = cmp(a.rational(), b.rational());
      return c < 0 ? std::strong_ordering::less
                   : (c > 0 ? std::strong_ordering::greater : std::strong_ordering::equal);
    }
    if (a.floating() < b.floating()) return std::strong_ordering::less;
    if (a.floating() > b.floating()) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
  }

  // Surface syntax that the parser reads back to an identical Number.
  // Rationals print as "p" or "p/q"; floats always carry a '.' or exponent.
  std::string to_string() const {
    if (is_exact()) {
      const Rational& q = rational();
      if (q.get_den() == 1) return q.get_num().get_str();
      return q.get_num().get_str() + "/" + q.get_den().get_str();
    }
    return format_double(floating());
  }

  static std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    std::string s(buf, res.ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
  }

 private:
  std::variant<Rational, double> value_;
};

}  // namespace herglotz
