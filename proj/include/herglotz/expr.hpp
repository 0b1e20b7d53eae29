#pragma once

// Immutable symbolic expression trees and the polynomial canonical form.
//
// Canonical form: a sum of monomials, each monomial a coefficient times a
// product of atom powers. Atoms are symbols (coordinates, constants, jet
// variables) and elementary-function applications whose argument is itself
// canonical. Two expressions in the polynomial-with-function-atom fragment are
// equal iff their canonical trees are structurally identical.

#include "herglotz/number.hpp"

#include <algorithm>
#include <cmath>
#include <compare>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace herglotz {

// Kind order is the atom order used for canonical sorting and printing:
// coordinates < constants < jet variables < function atoms.
enum class SymbolKind : unsigned char { Coordinate = 0, Constant = 1, FieldJet = 2, ActionJet = 3 };

struct Symbol {
  SymbolKind kind = SymbolKind::Constant;
  // Coordinate, constant or field name. For action jets: the component coordinate.
  std::string name;
  // Derivative suffix of a jet, one letter per derivative in coordinate order.
  std::string deriv;

  static Symbol coordinate(std::string n) { return {SymbolKind::Coordinate, std::move(n), {}}; }
  static Symbol constant(std::string n) { return {SymbolKind::Constant, std::move(n), {}}; }
  static Symbol field(std::string n, std::string d = {}) {
    return {SymbolKind::FieldJet, std::move(n), std::move(d)};
  }
  static Symbol action(std::string component, std::string d = {}) {
    return {SymbolKind::ActionJet, std::move(component), std::move(d)};
  }

  bool is_jet() const { return kind == SymbolKind::FieldJet || kind == SymbolKind::ActionJet; }
  int jet_order() const { return static_cast<int>(deriv.size()); }

  std::string to_string() const {
    switch (kind) {
      case SymbolKind::Coordinate:
      case SymbolKind::Constant:
        return name;
      case SymbolKind::FieldJet:
        return deriv.empty() ? name : name + "_" + deriv;
      case SymbolKind::ActionJet:
        return deriv.empty() ? "z^" + name : "z^" + name + "_" + deriv;
    }
    return name;
  }

  friend bool operator==(const Symbol&, const Symbol&) = default;
  friend std::strong_ordering operator<=>(const Symbol& a, const Symbol& b) {
    if (auto c = a.kind <=> b.kind; c != 0) return c;
    if (auto c = a.name <=> b.name; c != 0) return c;
    if (auto c = a.deriv.size() <=> b.deriv.size(); c != 0) return c;
    return a.deriv <=> b.deriv;
  }
};

enum class Func : unsigned char { Sin, Cos, Exp, Log, Inv };

inline const char* func_name(Func f) {
  switch (f) {
    case Func::Sin: return "sin";
    case Func::Cos: return "cos";
    case Func::Exp: return "exp";
    case Func::Log: return "log";
    case Func::Inv: return "inv";
  }
  return "?";
}

class UnboundSymbolError : public std::runtime_error {
 public:
  explicit UnboundSymbolError(Symbol s)
      : std::runtime_error("unbound symbol '" + s.to_string() + "'"), symbol_(std::move(s)) {}
  const Symbol& symbol() const { return symbol_; }

 private:
  Symbol symbol_;
};

class Expr {
 public:
  enum class Kind : unsigned char { Number, Symbol, Sum, Product, Power, Negate, Call };

  Expr() : Expr(herglotz::Number(0)) {}
  Expr(int v) : Expr(herglotz::Number(v)) {}  // NOLINT(google-explicit-constructor)
  Expr(herglotz::Number n) {                   // NOLINT(google-explicit-constructor)
    auto node = std::make_shared<Node>();
    node->kind = Kind::Number;
    node->num = std::move(n);
    node_ = std::move(node);
  }
  Expr(herglotz::Symbol s) {  // NOLINT(google-explicit-constructor)
    auto node = std::make_shared<Node>();
    node->kind = Kind::Symbol;
    node->sym = std::move(s);
    node_ = std::move(node);
  }

  static Expr sum(std::vector<Expr> terms) {
    if (terms.empty()) return Expr(0);
    if (terms.size() == 1) return std::move(terms.front());
    return make(Kind::Sum, std::move(terms));
  }
  static Expr product(std::vector<Expr> factors) {
    if (factors.empty()) return Expr(1);
    if (factors.size() == 1) return std::move(factors.front());
    return make(Kind::Product, std::move(factors));
  }
  static Expr power(Expr base, long exponent) {
    return make(Kind::Power, {std::move(base)}, Func::Sin, exponent);
  }
  static Expr negate(Expr e) { return make(Kind::Negate, {std::move(e)}); }
  static Expr call(Func f, Expr arg) { return make(Kind::Call, {std::move(arg)}, f); }

  Kind kind() const { return node_->kind; }
  const herglotz::Number& number() const { return node_->num; }
  const herglotz::Symbol& symbol() const { return node_->sym; }
  Func func() const { return node_->func; }
  long exponent() const { return node_->exponent; }
  std::span<const Expr> operands() const { return node_->args; }

  bool is_number() const { return kind() == Kind::Number; }
  bool is_zero_literal() const { return is_number() && number().is_zero(); }

  friend Expr operator+(Expr a, Expr b) { return sum({std::move(a), std::move(b)}); }
  friend Expr operator-(Expr a, Expr b) { return sum({std::move(a), negate(std::move(b))}); }
  friend Expr operator*(Expr a, Expr b) { return product({std::move(a), std::move(b)}); }
  Expr operator-() const { return negate(*this); }

  friend std::strong_ordering compare(const Expr& a, const Expr& b);
  friend bool operator==(const Expr& a, const Expr& b) { return compare(a, b) == 0; }

 private:
  struct Node {
    Kind kind = Kind::Number;
    herglotz::Number num;
    herglotz::Symbol sym;
    Func func = Func::Sin;
    long exponent = 1;
    std::vector<Expr> args;
  };

  static Expr make(Kind k, std::vector<Expr> args, Func f = Func::Sin, long exponent = 1) {
    auto node = std::make_shared<Node>();
    node->kind = k;
    node->func = f;
    node->exponent = exponent;
    node->args = std::move(args);
    Expr e;
    e.node_ = std::move(node);
    return e;
  }

  std::shared_ptr<const Node> node_;
};

inline std::strong_ordering compare(const Expr& a, const Expr& b) {
  if (a.node_ == b.node_) return std::strong_ordering::equal;
  if (auto c = a.kind() <=> b.kind(); c != 0) return c;
  switch (a.kind()) {
    case Expr::Kind::Number:
      return compare(a.number(), b.number());
    case Expr::Kind::Symbol:
      return a.symbol() <=> b.symbol();
    case Expr::Kind::Power:
      if (auto c = a.exponent() <=> b.exponent(); c != 0) return c;
      break;
    case Expr::Kind::Call:
      if (auto c = a.func() <=> b.func(); c != 0) return c;
      break;
    default:
      break;
  }
  auto lhs = a.operands();
  auto rhs = b.operands();
  for (size_t i = 0; i < std::min(lhs.size(), rhs.size()); ++i) {
    if (auto c = compare(lhs[i], rhs[i]); c != 0) return c;
  }
  return lhs.size() <=> rhs.size();
}

inline Expr pow(Expr base, long n) { return Expr::power(std::move(base), n); }
inline Expr sin(Expr e) { return Expr::call(Func::Sin, std::move(e)); }
inline Expr cos(Expr e) { return Expr::call(Func::Cos, std::move(e)); }
inline Expr exp(Expr e) { return Expr::call(Func::Exp, std::move(e)); }
inline Expr log(Expr e) { return Expr::call(Func::Log, std::move(e)); }
inline Expr inv(Expr e) { return Expr::call(Func::Inv, std::move(e)); }
inline Expr rational(long p, long q) { return Expr(Number::ratio(p, q)); }

namespace detail {

// An atom of a monomial: a symbol or a function applied to a canonical argument.
struct Factor {
  bool is_call = false;
  Symbol sym;
  Func func = Func::Sin;
  Expr arg;

  friend std::strong_ordering operator<=>(const Factor& a, const Factor& b) {
    if (a.is_call != b.is_call) return a.is_call ? std::strong_ordering::greater
                                                 : std::strong_ordering::less;
    if (!a.is_call) return a.sym <=> b.sym;
    if (auto c = a.func <=> b.func; c != 0) return c;
    return compare(a.arg, b.arg);
  }
  friend bool operator==(const Factor& a, const Factor& b) { return (a <=> b) == 0; }
};

using Monomial = std::vector<std::pair<Factor, long>>;

inline std::strong_ordering compare_monomials(const Monomial& a, const Monomial& b) {
  for (size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (auto c = a[i].first <=> b[i].first; c != 0) return c;
    if (auto c = a[i].second <=> b[i].second; c != 0) return c;
  }
  return a.size() <=> b.size();
}

struct MonomialLess {
  bool operator()(const Monomial& a, const Monomial& b) const { return compare_monomials(a, b) < 0; }
};

inline Monomial multiply(const Monomial& a, const Monomial& b) {
  Monomial out;
  out.reserve(a.size() + b.size());
  size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i].first < b[j].first)) {
      out.push_back(a[i++]);
    } else if (i == a.size() || b[j].first < a[i].first) {
      out.push_back(b[j++]);
    } else {
      long e = a[i].second + b[j].second;
      if (e != 0) out.emplace_back(a[i].first, e);
      ++i;
      ++j;
    }
  }
  return out;
}

class Poly {
 public:
  using Terms = std::map<Monomial, Number, MonomialLess>;

  Poly() = default;
  static Poly constant(const Number& c) {
    Poly p;
    if (!c.is_zero()) p.terms_.emplace(Monomial{}, c);
    return p;
  }
  static Poly atom(Factor f) {
    Poly p;
    p.terms_.emplace(Monomial{{std::move(f), 1}}, Number(1));
    return p;
  }

  const Terms& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  bool is_constant() const { return terms_.empty() || (terms_.size() == 1 && terms_.begin()->first.empty()); }
  Number constant_value() const { return terms_.empty() ? Number(0) : terms_.begin()->second; }

  void add_term(const Monomial& m, const Number& c) {
    if (c.is_zero()) return;
    auto [it, inserted] = terms_.emplace(m, c);
    if (!inserted) {
      it->second = it->second + c;
      if (it->second.is_zero()) terms_.erase(it);
    }
  }

  friend Poly operator+(Poly a, const Poly& b) {
    for (const auto& [m, c] : b.terms_) a.add_term(m, c);
    return a;
  }
  friend Poly operator-(Poly a, const Poly& b) {
    for (const auto& [m, c] : b.terms_) a.add_term(m, -c);
    return a;
  }
  friend Poly operator*(const Poly& a, const Poly& b) {
    Poly out;
    for (const auto& [ma, ca] : a.terms_) {
      for (const auto& [mb, cb] : b.terms_) out.add_term(multiply(ma, mb), ca * cb);
    }
    return out;
  }
  Poly scaled(const Number& s) const {
    Poly out;
    for (const auto& [m, c] : terms_) out.add_term(m, c * s);
    return out;
  }
  Poly pow(long n) const {
    if (n < 0) {
      if (!is_constant()) throw std::domain_error("negative power of a non-numeric expression");
      return constant(constant_value().pow(n));
    }
    Poly result = constant(Number(1));
    Poly base = *this;
    while (n > 0) {
      if (n & 1) result = result * base;
      n >>= 1;
      if (n > 0) base = base * base;
    }
    return result;
  }

 private:
  Terms terms_;
};

Poly to_poly(const Expr& e);
Expr from_poly(const Poly& p);

inline Poly call_poly(Func f, const Poly& arg) {
  if (arg.is_constant()) {
    Number c = arg.constant_value();
    if (c.is_exact()) {
      if (c.is_zero()) {
        if (f == Func::Sin) return Poly::constant(Number(0));
        if (f == Func::Cos || f == Func::Exp) return Poly::constant(Number(1));
      }
      if (f == Func::Log && c.is_exact_one()) return Poly::constant(Number(0));
      if (f == Func::Inv && !c.is_zero()) return Poly::constant(Number(1) / c);
    } else {
      double v = c.floating();
      switch (f) {
        case Func::Sin: return Poly::constant(Number(std::sin(v)));
        case Func::Cos: return Poly::constant(Number(std::cos(v)));
        case Func::Exp: return Poly::constant(Number(std::exp(v)));
        case Func::Log:
          if (v > 0) return Poly::constant(Number(std::log(v)));
          break;
        case Func::Inv:
          if (v != 0) return Poly::constant(Number(1.0 / v));
          break;
      }
    }
  }
  Factor fac;
  fac.is_call = true;
  fac.func = f;
  fac.arg = from_poly(arg);
  return Poly::atom(std::move(fac));
}

inline Poly to_poly(const Expr& e) {
  switch (e.kind()) {
    case Expr::Kind::Number:
      return Poly::constant(e.number());
    case Expr::Kind::Symbol: {
      Factor f;
      f.sym = e.symbol();
      return Poly::atom(std::move(f));
    }
    case Expr::Kind::Sum: {
      Poly p;
      for (const auto& t : e.operands()) p = p + to_poly(t);
      return p;
    }
    case Expr::Kind::Product: {
      Poly p = Poly::constant(Number(1));
      for (const auto& f : e.operands()) {
        p = p * to_poly(f);
        if (p.empty()) break;
      }
      return p;
    }
    case Expr::Kind::Power:
      return to_poly(e.operands()[0]).pow(e.exponent());
    case Expr::Kind::Negate:
      return to_poly(e.operands()[0]).scaled(Number(-1));
    case Expr::Kind::Call:
      return call_poly(e.func(), to_poly(e.operands()[0]));
  }
  return {};
}

inline Expr factor_expr(const Factor& f) {
  if (f.is_call) return Expr::call(f.func, f.arg);
  return Expr(f.sym);
}

// Jet factors of a monomial, highest derivative order first; drives term order.
inline std::vector<std::pair<const Symbol*, long>> jet_signature(const Monomial& m) {
  std::vector<std::pair<const Symbol*, long>> sig;
  for (const auto& [f, e] : m) {
    if (!f.is_call && f.sym.is_jet()) sig.emplace_back(&f.sym, e);
  }
  std::stable_sort(sig.begin(), sig.end(), [](const auto& a, const auto& b) {
    return a.first->jet_order() > b.first->jet_order();
  });
  return sig;
}

// Printing/canonical term order: terms with higher-order jets first; among
// equal orders, field before action, then name and suffix; more jet factors first.
inline bool term_before(const Monomial& a, const Monomial& b) {
  auto sa = jet_signature(a);
  auto sb = jet_signature(b);
  for (size_t i = 0; i < std::min(sa.size(), sb.size()); ++i) {
    const Symbol& x = *sa[i].first;
    const Symbol& y = *sb[i].first;
    if (x.jet_order() != y.jet_order()) return x.jet_order() > y.jet_order();
    if (x.kind != y.kind) return x.kind < y.kind;
    if (x.name != y.name) return x.name < y.name;
    if (x.deriv != y.deriv) return x.deriv < y.deriv;
    if (sa[i].second != sb[i].second) return sa[i].second > sb[i].second;
  }
  if (sa.size() != sb.size()) return sa.size() > sb.size();
  if (a.empty() != b.empty()) return b.empty();
  return compare_monomials(a, b) < 0;
}

inline Expr from_poly(const Poly& p) {
  std::vector<const Poly::Terms::value_type*> ordered;
  ordered.reserve(p.terms().size());
  for (const auto& t : p.terms()) ordered.push_back(&t);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return term_before(a->first, b->first); });

  std::vector<Expr> terms;
  terms.reserve(ordered.size());
  for (const auto* t : ordered) {
    const auto& [mono, coeff] = *t;
    std::vector<Expr> factors;
    if (mono.empty() || !coeff.is_exact_one()) factors.emplace_back(coeff);
    for (const auto& [f, e] : mono) {
      factors.push_back(e == 1 ? factor_expr(f) : Expr::power(factor_expr(f), e));
    }
    terms.push_back(Expr::product(std::move(factors)));
  }
  return Expr::sum(std::move(terms));
}

inline Poly func_derivative(Func f, const Expr& arg) {
  Poly a = to_poly(arg);
  switch (f) {
    case Func::Sin: return call_poly(Func::Cos, a);
    case Func::Cos: return call_poly(Func::Sin, a).scaled(Number(-1));
    case Func::Exp: return call_poly(Func::Exp, a);
    case Func::Log: return call_poly(Func::Inv, a);
    case Func::Inv: return call_poly(Func::Inv, a).pow(2).scaled(Number(-1));
  }
  return {};
}

inline Poly diff(const Poly& p, const Symbol& v);

inline Poly diff_factor(const Factor& f, const Symbol& v) {
  if (!f.is_call) return Poly::constant(Number(f.sym == v ? 1 : 0));
  Poly inner = diff(to_poly(f.arg), v);
  if (inner.empty()) return {};
  return func_derivative(f.func, f.arg) * inner;
}

inline Poly diff(const Poly& p, const Symbol& v) {
  Poly out;
  for (const auto& [mono, coeff] : p.terms()) {
    for (size_t i = 0; i < mono.size(); ++i) {
      Poly df = diff_factor(mono[i].first, v);
      if (df.empty()) continue;
      Monomial rest = mono;
      long e = rest[i].second;
      if (e == 1) {
        rest.erase(rest.begin() + static_cast<long>(i));
      } else {
        rest[i].second = e - 1;
      }
      Poly term;
      term.add_term(rest, coeff * Number(e));
      out = out + term * df;
    }
  }
  return out;
}

inline void collect_symbols(const Poly& p, std::set<Symbol>& out);

inline void collect_symbols(const Expr& e, std::set<Symbol>& out) {
  if (e.kind() == Expr::Kind::Symbol) {
    out.insert(e.symbol());
    return;
  }
  for (const auto& c : e.operands()) collect_symbols(c, out);
}

inline void collect_symbols(const Poly& p, std::set<Symbol>& out) {
  for (const auto& [mono, coeff] : p.terms()) {
    for (const auto& [f, e] : mono) {
      if (f.is_call) {
        collect_symbols(f.arg, out);
      } else {
        out.insert(f.sym);
      }
    }
  }
}

}  // namespace detail

inline Expr simplify(const Expr& e) { return detail::from_poly(detail::to_poly(e)); }

inline bool is_zero(const Expr& e) { return detail::to_poly(e).empty(); }

inline bool canonically_equal(const Expr& a, const Expr& b) { return simplify(a) == simplify(b); }

inline Expr partial_deriv(const Expr& e, const Symbol& v) {
  return detail::from_poly(detail::diff(detail::to_poly(e), v));
}

inline std::set<Symbol> free_symbols(const Expr& e) {
  std::set<Symbol> out;
  detail::collect_symbols(e, out);
  return out;
}

using SymbolMap = std::map<Symbol, Expr>;
using Binding = std::map<Symbol, double>;

namespace detail {
inline Expr replace(const Expr& e, const SymbolMap& bindings) {
  switch (e.kind()) {
    case Expr::Kind::Number:
      return e;
    case Expr::Kind::Symbol: {
      auto it = bindings.find(e.symbol());
      return it == bindings.end() ? e : it->second;
    }
    case Expr::Kind::Sum:
    case Expr::Kind::Product: {
      std::vector<Expr> ops;
      ops.reserve(e.operands().size());
      for (const auto& c : e.operands()) ops.push_back(replace(c, bindings));
      return e.kind() == Expr::Kind::Sum ? Expr::sum(std::move(ops)) : Expr::product(std::move(ops));
    }
    case Expr::Kind::Power:
      return Expr::power(replace(e.operands()[0], bindings), e.exponent());
    case Expr::Kind::Negate:
      return Expr::negate(replace(e.operands()[0], bindings));
    case Expr::Kind::Call:
      return Expr::call(e.func(), replace(e.operands()[0], bindings));
  }
  return e;
}
}  // namespace detail

// Simultaneous replacement; inserted subtrees are not substituted again.
inline Expr substitute(const Expr& e, const SymbolMap& bindings) {
  return simplify(detail::replace(e, bindings));
}

inline double apply_func(Func f, double x) {
  switch (f) {
    case Func::Sin: return std::sin(x);
    case Func::Cos: return std::cos(x);
    case Func::Exp: return std::exp(x);
    case Func::Log:
      if (!(x > 0)) throw std::domain_error("log of non-positive argument " + Number::format_double(x));
      return std::log(x);
    case Func::Inv:
      if (x == 0) throw std::domain_error("inv of zero");
      return 1.0 / x;
  }
  return 0;
}

inline double eval_numeric(const Expr& e, const Binding& binding) {
  switch (e.kind()) {
    case Expr::Kind::Number:
      return e.number().to_double();
    case Expr::Kind::Symbol: {
      auto it = binding.find(e.symbol());
      if (it == binding.end()) throw UnboundSymbolError(e.symbol());
      return it->second;
    }
    case Expr::Kind::Sum: {
      double s = 0;
      for (const auto& c : e.operands()) s += eval_numeric(c, binding);
      return s;
    }
    case Expr::Kind::Product: {
      double p = 1;
      for (const auto& c : e.operands()) p *= eval_numeric(c, binding);
      return p;
    }
    case Expr::Kind::Power: {
      double b = eval_numeric(e.operands()[0], binding);
      long n = e.exponent();
      double r = 1;
      for (long i = 0; i < std::abs(n); ++i) r *= b;
      return n < 0 ? 1.0 / r : r;
    }
    case Expr::Kind::Negate:
      return -eval_numeric(e.operands()[0], binding);
    case Expr::Kind::Call:
      return apply_func(e.func(), eval_numeric(e.operands()[0], binding));
  }
  return 0;
}

}  // namespace herglotz
