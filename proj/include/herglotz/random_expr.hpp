#pragma once

// Random expression and Lagrangian generators for property checks.

#include "herglotz/expr.hpp"
#include "herglotz/jet.hpp"

#include <random>
#include <vector>

namespace herglotz {

struct RandomExprOptions {
  int max_depth = 4;
  int max_exponent = 2;
  long coefficient_bound = 8;
  bool allow_functions = true;
  bool allow_floats = false;
};

class RandomExprGenerator {
 public:
  RandomExprGenerator(std::vector<Symbol> atoms, RandomExprOptions opts, std::uint64_t seed)
      : atoms_(std::move(atoms)), opts_(opts), rng_(seed) {}

  Expr operator()() { return node(opts_.max_depth); }

  Expr coefficient() {
    long b = opts_.coefficient_bound;
    if (opts_.allow_floats && uniform(0, 5) == 0) {
      std::uniform_real_distribution<double> d(-static_cast<double>(b), static_cast<double>(b));
      return Expr(Number(d(rng_)));
    }
    long p = uniform(-b, b);
    long q = uniform(0, 3) == 0 ? uniform(1, 4) : 1;
    return Expr(Number::ratio(p, q));
  }

  Expr atom() { return Expr(atoms_[static_cast<size_t>(uniform(0, static_cast<long>(atoms_.size()) - 1))]); }

  std::mt19937_64& rng() { return rng_; }

  long uniform(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng_); }

 private:
  Expr node(int depth) {
    if (depth <= 1 || uniform(0, 4) == 0) return uniform(0, 2) == 0 ? coefficient() : atom();
    switch (uniform(0, 9)) {
      case 0:
      case 1:
      case 2:
        return node(depth - 1) + node(depth - 1);
      case 3:
        return node(depth - 1) - node(depth - 1);
      case 4:
      case 5:
        return node(depth - 1) * node(depth - 1);
      case 6:
        if (depth <= 3) return pow(node(depth - 1), uniform(0, opts_.max_exponent));
        return node(depth - 1) * atom();
      case 7:
        return -node(depth - 1);
      case 8:
        if (opts_.allow_functions) {
          Expr arg = node(std::min(depth - 1, 2));
          switch (uniform(0, 2)) {
            case 0: return sin(arg);
            case 1: return cos(arg);
            default: return exp(arg);
          }
        }
        return node(depth - 1) + atom();
      default:
        return coefficient() * node(depth - 1);
    }
  }

  std::vector<Symbol> atoms_;
  RandomExprOptions opts_;
  std::mt19937_64 rng_;
};

// First-order Lagrangians on coordinates (t, x) with one field u. When
// `closed` is set, the action coupling is -D_mu(h) z^mu for a polynomial h(t, x),
// which has closed action dependence; otherwise the coupling coefficients are
// arbitrary polynomials in the jets.
class RandomLagrangianGenerator {
 public:
  explicit RandomLagrangianGenerator(std::uint64_t seed) : rng_(seed) {}

  static LagrangianSpec base_spec() {
    LagrangianSpec spec;
    spec.coords = {"t", "x"};
    spec.fields = {"u"};
    spec.order = 1;
    spec.constants = {{"a", 0.7}, {"b", -1.3}};
    return spec;
  }

  static std::vector<Symbol> jet_atoms() {
    return {Symbol::coordinate("t"), Symbol::coordinate("x"), Symbol::constant("a"), Symbol::field("u"),
            Symbol::field("u", "t"), Symbol::field("u", "x")};
  }

  LagrangianSpec lagrangian(bool closed) {
    LagrangianSpec spec = base_spec();
    Expr L0 = polynomial(jet_atoms(), 3, 2);
    Expr zt = Expr(Symbol::action("t"));
    Expr zx = Expr(Symbol::action("x"));
    if (closed) {
      Expr h = polynomial({Symbol::coordinate("t"), Symbol::coordinate("x"), Symbol::constant("b")}, 3, 2);
      spec.lagrangian = simplify(L0 - total_derivative(spec, h, 0) * zt - total_derivative(spec, h, 1) * zx);
    } else {
      Expr ct = polynomial(jet_atoms(), 2, 2);
      Expr cx = polynomial(jet_atoms(), 2, 2);
      Expr quad = uniform(0, 2) == 0 ? polynomial(jet_atoms(), 1, 1) * zt * zx : Expr(0);
      spec.lagrangian = simplify(L0 + ct * zt + cx * zx + quad);
    }
    return spec;
  }

  Expr test_function() {
    std::vector<Symbol> atoms = jet_atoms();
    atoms.push_back(Symbol::action("t"));
    atoms.push_back(Symbol::action("x"));
    return polynomial(atoms, 3, 2);
  }

  // Sum of up to `terms` monomials of total degree <= degree.
  Expr polynomial(const std::vector<Symbol>& atoms, int terms, int degree) {
    std::vector<Expr> out;
    int n = static_cast<int>(uniform(1, terms));
    for (int k = 0; k < n; ++k) {
      std::vector<Expr> factors{Expr(Number::ratio(uniform(-5, 5), uniform(1, 3)))};
      int d = static_cast<int>(uniform(0, degree));
      for (int i = 0; i < d; ++i) factors.emplace_back(atoms[static_cast<size_t>(uniform(0, static_cast<long>(atoms.size()) - 1))]);
      out.push_back(Expr::product(std::move(factors)));
    }
    return simplify(Expr::sum(std::move(out)));
  }

 private:
  long uniform(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng_); }
  std::mt19937_64 rng_;
};

}  // namespace herglotz
