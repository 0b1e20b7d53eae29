#pragma once

// Deterministic surface-syntax printer. Output is accepted by the problem-file
// parser and reads back to a canonically equal expression.
//
// Equation residuals are printed as "<expr> = 0". For higher-order
// derivations the stored residual is the negated alternating Herglotz sum, so
// that r = 1 derivations print identically through either route.

#include "herglotz/expr.hpp"

#include <string>

namespace herglotz {

namespace detail {

enum Prec : int { kSum = 1, kProduct = 2, kUnary = 3, kPower = 4, kAtom = 5 };

inline bool is_negative_term(const Expr& e) {
  switch (e.kind()) {
    case Expr::Kind::Number:
      return e.number().is_negative();
    case Expr::Kind::Negate:
      return true;
    case Expr::Kind::Product:
      return e.operands()[0].is_number() && e.operands()[0].number().is_negative();
    default:
      return false;
  }
}

// Drops the sign of a term for which is_negative_term holds.
inline Expr negated_term(const Expr& e) {
  switch (e.kind()) {
    case Expr::Kind::Number:
      return Expr(-e.number());
    case Expr::Kind::Negate:
      return e.operands()[0];
    case Expr::Kind::Product: {
      std::vector<Expr> ops(e.operands().begin(), e.operands().end());
      Number c = -ops[0].number();
      if (c.is_exact_one()) {
        ops.erase(ops.begin());
      } else {
        ops[0] = Expr(c);
      }
      return Expr::product(std::move(ops));
    }
    default:
      return e;
  }
}

inline std::string print(const Expr& e, int parent);

inline std::string print_number(const Number& n, int parent) {
  std::string s = n.to_string();
  bool needs_parens = (n.is_negative() && parent > kSum) ||
                      (n.is_exact() && !n.is_exact_integer() && parent >= kProduct);
  return needs_parens ? "(" + s + ")" : s;
}

inline std::string print_sum(const Expr& e, int parent) {
  std::string out;
  bool first = true;
  for (const auto& t : e.operands()) {
    if (first) {
      out += print(t, kSum);
      first = false;
    } else if (is_negative_term(t)) {
      out += " - " + print(negated_term(t), kSum + 1);
    } else {
      out += " + " + print(t, kSum + 1);
    }
  }
  return parent > kSum ? "(" + out + ")" : out;
}

inline std::string print_product(const Expr& e, int parent) {
  if (is_negative_term(e)) {
    std::string out = "-" + print(negated_term(e), kProduct);
    return parent > kSum ? "(" + out + ")" : out;
  }
  std::string out;
  for (size_t i = 0; i < e.operands().size(); ++i) {
    if (i > 0) out += "*";
    out += print(e.operands()[i], kProduct);
  }
  return parent > kProduct ? "(" + out + ")" : out;
}

inline std::string print(const Expr& e, int parent) {
  switch (e.kind()) {
    case Expr::Kind::Number:
      return print_number(e.number(), parent);
    case Expr::Kind::Symbol:
      return e.symbol().to_string();
    case Expr::Kind::Sum:
      return print_sum(e, parent);
    case Expr::Kind::Product:
      return print_product(e, parent);
    case Expr::Kind::Power: {
      std::string s = print(e.operands()[0], kAtom) + "^" + std::to_string(e.exponent());
      return parent > kPower ? "(" + s + ")" : s;
    }
    case Expr::Kind::Negate: {
      std::string s = "-" + print(e.operands()[0], kProduct);
      return parent > kSum ? "(" + s + ")" : s;
    }
    case Expr::Kind::Call:
      return std::string(func_name(e.func())) + "(" + print(e.operands()[0], 0) + ")";
  }
  return {};
}

}  // namespace detail

inline std::string print_expression(const Expr& e) { return detail::print(e, 0); }

}  // namespace herglotz
