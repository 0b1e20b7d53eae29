#pragma once

// Jet-space bookkeeping and the Herglotz derivations: total derivatives,
// Herglotz operators, field equations (mechanics, first order, higher order),
// the action constraint, closedness residuals and the dissipation form.

#include "herglotz/expr.hpp"
#include "herglotz/printer.hpp"

#include <json.hpp>

#include <cstddef>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace herglotz {

class DerivationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raising a jet would exceed the configured maximum jet order.
class OrderOverflowError : public DerivationError {
 public:
  using DerivationError::DerivationError;
};

// The derivation route does not match the Lagrangian's order.
class OrderMismatchError : public DerivationError {
 public:
  using DerivationError::DerivationError;
};

using ExprMatrix = std::vector<std::vector<Expr>>;

// Higher-order derivation of a Lagrangian without closed action dependence.
class NotClosedError : public DerivationError {
 public:
  explicit NotClosedError(ExprMatrix residuals, const std::string& detail)
      : DerivationError("Lagrangian does not have closed action dependence: " + detail),
        residuals_(std::move(residuals)) {}
  const ExprMatrix& residuals() const { return residuals_; }

 private:
  ExprMatrix residuals_;
};

struct MultiIndex {
  std::vector<int> counts;

  MultiIndex() = default;
  explicit MultiIndex(size_t m) : counts(m, 0) {}
  explicit MultiIndex(std::vector<int> c) : counts(std::move(c)) {}

  int order() const {
    int n = 0;
    for (int c : counts) n += c;
    return n;
  }
  MultiIndex raised(size_t mu) const {
    MultiIndex out = *this;
    ++out.counts.at(mu);
    return out;
  }
  friend auto operator<=>(const MultiIndex&, const MultiIndex&) = default;
};

// All multi-indices of dimension m with |I| <= max_order, ordered by |I| then lexicographically.
inline std::vector<MultiIndex> multi_indices_up_to(size_t m, int max_order) {
  std::vector<MultiIndex> out;
  MultiIndex cur(m);
  auto rec = [&](auto&& self, size_t pos, int remaining) -> void {
    if (pos == m) {
      out.push_back(cur);
      return;
    }
    for (int k = 0; k <= remaining; ++k) {
      cur.counts[pos] = k;
      self(self, pos + 1, remaining - k);
    }
    cur.counts[pos] = 0;
  };
  rec(rec, 0, max_order);
  std::stable_sort(out.begin(), out.end(), [](const MultiIndex& a, const MultiIndex& b) {
    return a.order() < b.order();
  });
  return out;
}

struct ConstantDecl {
  std::string name;
  std::optional<double> value;
};

struct LagrangianSpec {
  std::vector<std::string> coords;
  std::vector<std::string> fields;
  int order = 1;
  std::vector<ConstantDecl> constants;
  Expr lagrangian;
  // Highest jet order derivations may produce; 0 selects 2*order + 2.
  int max_jet_order = 0;

  size_t dimension() const { return coords.size(); }
  bool is_mechanics() const { return coords.size() == 1; }
  int jet_limit() const { return max_jet_order > 0 ? max_jet_order : 2 * order + 2; }

  Symbol coordinate(size_t mu) const { return Symbol::coordinate(coords.at(mu)); }

  std::string suffix(const MultiIndex& index) const {
    std::string s;
    for (size_t mu = 0; mu < coords.size(); ++mu) s.append(static_cast<size_t>(index.counts.at(mu)), coords[mu][0]);
    return s;
  }

  Symbol field_jet(size_t a, const MultiIndex& index) const {
    return Symbol::field(fields.at(a), suffix(index));
  }
  Symbol field_jet(size_t a) const { return Symbol::field(fields.at(a)); }
  Symbol action_jet(size_t nu, const MultiIndex& index) const {
    return Symbol::action(coords.at(nu), suffix(index));
  }
  Symbol action_jet(size_t nu) const { return Symbol::action(coords.at(nu)); }

  MultiIndex index_of(const Symbol& jet) const {
    MultiIndex index(coords.size());
    for (char c : jet.deriv) {
      size_t mu = coordinate_index(std::string(1, c));
      ++index.counts[mu];
    }
    return index;
  }

  size_t coordinate_index(const std::string& name) const {
    for (size_t mu = 0; mu < coords.size(); ++mu) {
      if (coords[mu] == name) return mu;
    }
    throw std::out_of_range("unknown coordinate '" + name + "'");
  }

  std::optional<double> constant_value(const std::string& name) const {
    for (const auto& c : constants) {
      if (c.name == name) return c.value;
    }
    return std::nullopt;
  }

  // Numeric values of every constant that has one, plus pi.
  Binding constant_binding() const {
    Binding b;
    b[Symbol::constant("pi")] = std::numbers::pi;
    for (const auto& c : constants) {
      if (c.value) b[Symbol::constant(c.name)] = *c.value;
    }
    return b;
  }
};

enum class DerivationKind { Mechanics, FirstOrder, HigherOrder };

inline const char* to_string(DerivationKind k) {
  switch (k) {
    case DerivationKind::Mechanics: return "mechanics";
    case DerivationKind::FirstOrder: return "first-order";
    case DerivationKind::HigherOrder: return "higher-order";
  }
  return "?";
}

struct EquationSet {
  DerivationKind kind = DerivationKind::FirstOrder;
  std::vector<std::string> fields;
  // One residual per field; solutions satisfy residuals[a] == 0.
  std::vector<Expr> residuals;
  Expr constraint;
  // closedness[mu][nu] = D_nu theta_mu - D_mu theta_nu (antisymmetric).
  ExprMatrix closedness;
  std::vector<Expr> dissipation;

  bool closed() const {
    for (const auto& row : closedness) {
      for (const auto& c : row) {
        if (!is_zero(c)) return false;
      }
    }
    return true;
  }
};

// Herglotz equations of a mechanical system in the solved form
// mass * q_tt = force, with force depending on (t, q, q_t, z).
struct MechanicsEquations {
  EquationSet equations;
  ExprMatrix mass;
  std::vector<Expr> force;
};

namespace detail {

inline Poly total_derivative_poly(const LagrangianSpec& spec, const Poly& p, size_t mu) {
  std::set<Symbol> symbols;
  collect_symbols(p, symbols);
  Poly out;
  for (const auto& s : symbols) {
    switch (s.kind) {
      case SymbolKind::Constant:
        break;
      case SymbolKind::Coordinate:
        if (s.name == spec.coords.at(mu)) out = out + diff(p, s);
        break;
      case SymbolKind::FieldJet:
      case SymbolKind::ActionJet: {
        MultiIndex raised = spec.index_of(s).raised(mu);
        if (raised.order() > spec.jet_limit()) {
          throw OrderOverflowError("total derivative of '" + s.to_string() + "' exceeds jet order " +
                                   std::to_string(spec.jet_limit()));
        }
        Symbol next = s;
        next.deriv = spec.suffix(raised);
        Factor f;
        f.sym = next;
        Poly d = diff(p, s);
        if (!d.empty()) out = out + Poly::atom(std::move(f)) * d;
        break;
      }
    }
  }
  return out;
}

inline std::vector<Poly> dissipation_poly(const LagrangianSpec& spec) {
  Poly L = to_poly(spec.lagrangian);
  std::vector<Poly> theta;
  for (size_t mu = 0; mu < spec.dimension(); ++mu) theta.push_back(diff(L, spec.action_jet(mu)));
  return theta;
}

inline Poly herglotz_poly(const LagrangianSpec& spec, const std::vector<Poly>& theta, const Poly& F,
                          size_t mu) {
  return total_derivative_poly(spec, F, mu) - F * theta[mu];
}

}  // namespace detail

inline Expr total_derivative(const LagrangianSpec& spec, const Expr& e, size_t mu) {
  return detail::from_poly(detail::total_derivative_poly(spec, detail::to_poly(e), mu));
}

inline std::vector<Expr> dissipation_form(const LagrangianSpec& spec) {
  std::vector<Expr> out;
  for (const auto& p : detail::dissipation_poly(spec)) out.push_back(detail::from_poly(p));
  return out;
}

// D^L_mu F = D_mu F - F * dL/dz^mu
inline Expr herglotz_operator(const LagrangianSpec& spec, const Expr& F, size_t mu) {
  auto theta = detail::dissipation_poly(spec);
  return detail::from_poly(detail::herglotz_poly(spec, theta, detail::to_poly(F), mu));
}

inline Expr commutator_residual(const LagrangianSpec& spec, const Expr& F, size_t mu, size_t nu) {
  auto theta = detail::dissipation_poly(spec);
  detail::Poly f = detail::to_poly(F);
  detail::Poly a = detail::herglotz_poly(spec, theta, detail::herglotz_poly(spec, theta, f, nu), mu);
  detail::Poly b = detail::herglotz_poly(spec, theta, detail::herglotz_poly(spec, theta, f, mu), nu);
  return detail::from_poly(a - b);
}

inline ExprMatrix closed_action_residuals(const LagrangianSpec& spec) {
  auto theta = detail::dissipation_poly(spec);
  size_t m = spec.dimension();
  ExprMatrix c(m, std::vector<Expr>(m, Expr(0)));
  for (size_t mu = 0; mu < m; ++mu) {
    for (size_t nu = 0; nu < m; ++nu) {
      if (mu == nu) continue;
      c[mu][nu] = detail::from_poly(detail::total_derivative_poly(spec, theta[mu], nu) -
                                    detail::total_derivative_poly(spec, theta[nu], mu));
    }
  }
  return c;
}

inline bool has_closed_action_dependence(const ExprMatrix& residuals) {
  for (const auto& row : residuals) {
    for (const auto& c : row) {
      if (!is_zero(c)) return false;
    }
  }
  return true;
}

// z^mu_mu - L, summed over mu. For mechanics this is z^t_t - L, i.e. zdot - L.
inline Expr constraint_expression(const LagrangianSpec& spec) {
  detail::Poly phi = detail::to_poly(spec.lagrangian).scaled(Number(-1));
  for (size_t mu = 0; mu < spec.dimension(); ++mu) {
    detail::Factor f;
    f.sym = spec.action_jet(mu, MultiIndex(spec.dimension()).raised(mu));
    phi = phi + detail::Poly::atom(std::move(f));
  }
  return detail::from_poly(phi);
}

namespace detail {

inline EquationSet base_equation_set(const LagrangianSpec& spec, DerivationKind kind) {
  EquationSet eq;
  eq.kind = kind;
  eq.fields = spec.fields;
  eq.constraint = constraint_expression(spec);
  eq.closedness = closed_action_residuals(spec);
  eq.dissipation = dissipation_form(spec);
  return eq;
}

// D_mu(dL/du^a_mu) - dL/du^a - theta_mu dL/du^a_mu, summed over mu.
inline Poly first_order_residual(const LagrangianSpec& spec, const std::vector<Poly>& theta,
                                 const Poly& L, size_t a) {
  size_t m = spec.dimension();
  Poly r = diff(L, spec.field_jet(a)).scaled(Number(-1));
  for (size_t mu = 0; mu < m; ++mu) {
    Poly p = diff(L, spec.field_jet(a, MultiIndex(m).raised(mu)));
    r = r + total_derivative_poly(spec, p, mu) - theta[mu] * p;
  }
  return r;
}

}  // namespace detail

inline EquationSet derive_first_order_equations(const LagrangianSpec& spec) {
  if (spec.order != 1) {
    throw OrderMismatchError("first-order derivation requires a first-order Lagrangian (order " +
                             std::to_string(spec.order) + " given)");
  }
  EquationSet eq = detail::base_equation_set(spec, DerivationKind::FirstOrder);
  auto theta = detail::dissipation_poly(spec);
  detail::Poly L = detail::to_poly(spec.lagrangian);
  for (size_t a = 0; a < spec.fields.size(); ++a) {
    eq.residuals.push_back(detail::from_poly(detail::first_order_residual(spec, theta, L, a)));
  }
  return eq;
}

// Residual: -sum_{|I| <= r} (-1)^|I| D^L_I (dL/du^a_I). Requires closed action
// dependence so that the composite operator D^L_I is well defined.
inline EquationSet derive_higher_order_equations(const LagrangianSpec& spec) {
  if (spec.order < 1) throw OrderMismatchError("Lagrangian order must be at least 1");
  if (2 * spec.order > spec.jet_limit()) {
    throw OrderOverflowError("equations of order " + std::to_string(2 * spec.order) +
                             " exceed jet order " + std::to_string(spec.jet_limit()));
  }
  EquationSet eq = detail::base_equation_set(spec, DerivationKind::HigherOrder);
  if (!eq.closed()) {
    std::string detail;
    for (size_t mu = 0; mu < spec.dimension(); ++mu) {
      for (size_t nu = mu + 1; nu < spec.dimension(); ++nu) {
        if (is_zero(eq.closedness[mu][nu])) continue;
        if (!detail.empty()) detail += ", ";
        detail += "C_" + spec.coords[mu] + spec.coords[nu] + " = " +
                  print_expression(eq.closedness[mu][nu]);
      }
    }
    throw NotClosedError(eq.closedness, detail);
  }
  auto theta = detail::dissipation_poly(spec);
  detail::Poly L = detail::to_poly(spec.lagrangian);
  size_t m = spec.dimension();
  auto indices = multi_indices_up_to(m, spec.order);
  for (size_t a = 0; a < spec.fields.size(); ++a) {
    detail::Poly total;
    for (const auto& I : indices) {
      detail::Poly term = detail::diff(L, spec.field_jet(a, I));
      for (size_t mu = 0; mu < m && !term.empty(); ++mu) {
        for (int k = 0; k < I.counts[mu]; ++k) term = detail::herglotz_poly(spec, theta, term, mu);
      }
      total = I.order() % 2 == 0 ? total - term : total + term;
    }
    eq.residuals.push_back(detail::from_poly(total));
  }
  return eq;
}

inline MechanicsEquations derive_mechanics_equations(const LagrangianSpec& spec) {
  if (!spec.is_mechanics()) throw DerivationError("mechanics derivation requires a single coordinate");
  if (spec.order != 1) throw OrderMismatchError("mechanics derivation requires a first-order Lagrangian");
  MechanicsEquations out;
  out.equations = detail::base_equation_set(spec, DerivationKind::Mechanics);
  auto theta = detail::dissipation_poly(spec);
  detail::Poly L = detail::to_poly(spec.lagrangian);
  MultiIndex first = MultiIndex(1).raised(0);
  MultiIndex second = first.raised(0);
  // Along motions zdot = L.
  SymbolMap on_shell{{spec.action_jet(0, first), spec.lagrangian}};
  size_t n = spec.fields.size();
  for (size_t i = 0; i < n; ++i) {
    Expr r = detail::from_poly(detail::first_order_residual(spec, theta, L, i));
    r = substitute(r, on_shell);
    out.equations.residuals.push_back(r);
    std::vector<Expr> row;
    SymbolMap no_acceleration;
    for (size_t j = 0; j < n; ++j) {
      row.push_back(partial_deriv(r, spec.field_jet(j, second)));
      no_acceleration[spec.field_jet(j, second)] = Expr(0);
    }
    out.mass.push_back(std::move(row));
    out.force.push_back(simplify(-substitute(r, no_acceleration)));
  }
  return out;
}

enum class DerivationMode { Auto, FirstOrder, HigherOrder };

// Auto routes order-1 Lagrangians through the first-order theorem (mechanics
// when there is a single coordinate) and everything else through the
// higher-order theorem.
inline EquationSet derive_equations(const LagrangianSpec& spec, DerivationMode mode = DerivationMode::Auto) {
  switch (mode) {
    case DerivationMode::FirstOrder:
      return derive_first_order_equations(spec);
    case DerivationMode::HigherOrder:
      return derive_higher_order_equations(spec);
    case DerivationMode::Auto:
      break;
  }
  if (spec.order == 1) {
    if (spec.is_mechanics()) return derive_mechanics_equations(spec).equations;
    return derive_first_order_equations(spec);
  }
  return derive_higher_order_equations(spec);
}

inline nlohmann::ordered_json to_json(const LagrangianSpec& spec, const EquationSet& eq) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(eq.kind);
  j["coordinates"] = spec.coords;
  j["lagrangian"] = print_expression(simplify(spec.lagrangian));
  auto& equations = j["equations"] = nlohmann::ordered_json::array();
  for (size_t a = 0; a < eq.residuals.size(); ++a) {
    equations.push_back({{"field", eq.fields[a]}, {"residual", print_expression(eq.residuals[a])}});
  }
  j["constraint"] = print_expression(eq.constraint);
  auto& theta = j["dissipation_form"] = nlohmann::ordered_json::object();
  for (size_t mu = 0; mu < eq.dissipation.size(); ++mu) {
    theta[spec.coords[mu]] = print_expression(eq.dissipation[mu]);
  }
  auto& closed = j["closedness"] = nlohmann::ordered_json::object();
  for (size_t mu = 0; mu < eq.closedness.size(); ++mu) {
    for (size_t nu = mu + 1; nu < eq.closedness.size(); ++nu) {
      closed[spec.coords[mu] + spec.coords[nu]] = print_expression(eq.closedness[mu][nu]);
    }
  }
  j["closed_action_dependence"] = eq.closed();
  return j;
}

}  // namespace herglotz
