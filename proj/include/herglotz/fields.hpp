#pragma once

// Field sections on a uniform (t, x) grid: solvers for the damped string and
// the damped KdV equation, action-density reconstruction under the gauge
// z^x = 0, the residual engine and the discrete action gradient check.

#include "herglotz/compiled.hpp"
#include "herglotz/jet.hpp"
#include "herglotz/parallel.hpp"
#include "herglotz/stencil.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace herglotz {

class StabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FixedPointDivergenceError : public std::runtime_error {
 public:
  FixedPointDivergenceError(double t, double x)
      : std::runtime_error("action-density fixed point diverged at t = " + Number::format_double(t) +
                           ", x = " + Number::format_double(x)),
        t_(t),
        x_(x) {}
  double t() const { return t_; }
  double x() const { return x_; }

 private:
  double t_, x_;
};

class ConstraintViolationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Boundary { Fixed, Periodic };

struct Grid2D {
  std::string t_name = "t";
  std::string x_name = "x";
  double t0 = 0, t1 = 1;
  double x0 = 0, x1 = 1;
  size_t nt = 0, nx = 0;
  // The t edges are always fixed; x edges are fixed or a periodic pair.
  Boundary x_boundary = Boundary::Fixed;

  bool periodic() const { return x_boundary == Boundary::Periodic; }
  double dt() const { return (t1 - t0) / static_cast<double>(nt - 1); }
  // A periodic grid does not repeat the right edge x1 (identified with x0).
  double dx() const { return (x1 - x0) / static_cast<double>(periodic() ? nx : nx - 1); }
  double t(size_t k) const { return t0 + static_cast<double>(k) * dt(); }
  double x(size_t j) const { return x0 + static_cast<double>(j) * dx(); }
  size_t size() const { return nt * nx; }
  size_t index(size_t k, size_t j) const { return k * nx + j; }

  void validate() const {
    if (nt < 4 || nx < 4) throw std::invalid_argument("grid needs at least 4 points per direction");
    if (!(t1 > t0) || !(x1 > x0)) throw std::invalid_argument("grid ranges must be increasing");
    if (!(dt() > 0) || !(dx() > 0)) throw std::invalid_argument("grid spacings must be positive");
  }
};

enum class Provenance { Solved, AnalyticSection };

inline const char* to_string(Provenance p) { return p == Provenance::Solved ? "solved" : "analytic-section"; }

struct SectionExprs {
  Expr u, zt, zx;
};

struct FieldSolution {
  Grid2D grid;
  std::vector<double> u, zt, zx;
  // Periodic grids only: u(t_k, x + period) = u(t_k, x) + u_period_shift[k].
  std::vector<double> u_period_shift;
  Provenance provenance = Provenance::Solved;
  std::optional<SectionExprs> section;

  static FieldSolution zeros(const Grid2D& g) {
    FieldSolution s;
    s.grid = g;
    s.u.assign(g.size(), 0.0);
    s.zt.assign(g.size(), 0.0);
    s.zx.assign(g.size(), 0.0);
    return s;
  }
  double shift(size_t k) const { return u_period_shift.empty() ? 0.0 : u_period_shift[k]; }
};

// Default stencil accuracy: 4th order on periodic grids, 2nd otherwise.
inline int default_stencil_order(const Grid2D& g) { return g.periodic() ? 4 : 2; }

// Finite-difference values of jet variables of a section. Field jets come from
// u, action jets z^mu_J from the z^mu arrays.
class JetSampler {
 public:
  JetSampler(const LagrangianSpec& spec, const FieldSolution& sol, int accuracy)
      : spec_(spec), sol_(sol), accuracy_(accuracy) {
    if (spec.dimension() != 2 || spec.fields.size() != 1) {
      throw std::invalid_argument("field sections carry one field over two coordinates");
    }
  }

  int accuracy() const { return accuracy_; }
  int margin_t() const { return margin_t_; }
  int margin_x() const { return margin_x_; }

  const std::vector<double>& values(const Symbol& s) {
    auto it = cache_.find(s);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(s, compute(s)).first->second;
  }

  // Replaces the cached array of an undifferentiated variable (used when z^t is being solved for).
  void set(const Symbol& s, std::vector<double> v) { cache_[s] = std::move(v); }

 private:
  std::vector<double> compute(const Symbol& s) {
    const Grid2D& g = sol_.grid;
    std::vector<double> out(g.size());
    switch (s.kind) {
      case SymbolKind::Coordinate: {
        bool is_t = s.name == spec_.coords[0];
        if (!is_t && s.name != spec_.coords[1]) throw UnboundSymbolError(s);
        for (size_t k = 0; k < g.nt; ++k) {
          for (size_t j = 0; j < g.nx; ++j) out[g.index(k, j)] = is_t ? g.t(k) : g.x(j);
        }
        return out;
      }
      case SymbolKind::Constant:
        throw UnboundSymbolError(s);
      case SymbolKind::FieldJet:
      case SymbolKind::ActionJet:
        break;
    }
    MultiIndex idx = spec_.index_of(s);
    const std::vector<double>* base = &sol_.u;
    bool shifted = false;
    if (s.kind == SymbolKind::FieldJet) {
      shifted = g.periodic() && !sol_.u_period_shift.empty();
    } else {
      bool t_comp = s.name == spec_.coords[0];
      if (!t_comp && s.name != spec_.coords[1]) throw UnboundSymbolError(s);
      base = t_comp ? &sol_.zt : &sol_.zx;
    }
    if (idx.order() == 0) return *base;
    return derivative(*base, shifted, idx.counts[0], idx.counts[1]);
  }

  const StencilTable& table(bool t_axis, int d) {
    auto key = std::pair{t_axis, d};
    auto it = tables_.find(key);
    if (it != tables_.end()) return it->second;
    const Grid2D& g = sol_.grid;
    StencilTable tab = t_axis ? StencilTable::build(g.nt, g.dt(), d, accuracy_, false, g.t_name)
                              : StencilTable::build(g.nx, g.dx(), d, accuracy_, g.periodic(), g.x_name);
    return tables_.emplace(key, std::move(tab)).first->second;
  }

  std::vector<double> derivative(const std::vector<double>& a, bool shifted, int dt_order, int dx_order) {
    const Grid2D& g = sol_.grid;
    const long nx = static_cast<long>(g.nx);
    std::vector<double> tmp = a;
    if (dx_order > 0) {
      const StencilTable& tx = table(false, dx_order);
      margin_x_ = std::max(margin_x_, g.periodic() ? 0 : tx.half_width);
      parallel_for(g.nt, [&](size_t k) {
        double sh = shifted ? sol_.u_period_shift[k] : 0.0;
        for (long j = 0; j < nx; ++j) {
          const auto& w = tx.weights[static_cast<size_t>(j)];
          long st = tx.start[static_cast<size_t>(j)];
          double acc = 0;
          for (size_t i = 0; i < w.size(); ++i) {
            long jj = st + static_cast<long>(i);
            long wraps = 0;
            if (jj < 0 || jj >= nx) {
              wraps = (jj >= 0 ? jj / nx : -((-jj + nx - 1) / nx));
              jj -= wraps * nx;
            }
            acc += w[i] * (a[static_cast<size_t>(static_cast<long>(k) * nx + jj)] + static_cast<double>(wraps) * sh);
          }
          tmp[k * g.nx + static_cast<size_t>(j)] = acc;
        }
      }, 8);
    }
    if (dt_order == 0) return tmp;
    const StencilTable& tt = table(true, dt_order);
    margin_t_ = std::max(margin_t_, tt.half_width);
    std::vector<double> out(g.size());
    parallel_for(g.nt, [&](size_t k) {
      const auto& w = tt.weights[k];
      size_t st = static_cast<size_t>(tt.start[k]);
      for (size_t j = 0; j < g.nx; ++j) {
        double acc = 0;
        for (size_t i = 0; i < w.size(); ++i) acc += w[i] * tmp[(st + i) * g.nx + j];
        out[k * g.nx + j] = acc;
      }
    }, 8);
    return out;
  }

  const LagrangianSpec& spec_;
  const FieldSolution& sol_;
  int accuracy_;
  int margin_t_ = 0;
  int margin_x_ = 0;
  std::map<Symbol, std::vector<double>> cache_;
  std::map<std::pair<bool, int>, StencilTable> tables_;
};

// Pointwise values of an expression over the grid. Constants come from `constants`.
inline std::vector<double> sample_expression(const Expr& e, JetSampler& jets, const Binding& constants,
                                             size_t n) {
  SlotMap slots;
  std::vector<const std::vector<double>*> arrays;
  for (const auto& s : free_symbols(e)) {
    if (s.kind == SymbolKind::Constant) continue;
    slots[s] = arrays.size();
    arrays.push_back(&jets.values(s));
  }
  CompiledExpr f(e, slots, constants);
  std::vector<double> out(n);
  parallel_for(n, [&](size_t p) {
    double buf[64];
    std::vector<double> big;
    double* in = buf;
    if (arrays.size() > 64) {
      big.resize(arrays.size());
      in = big.data();
    }
    for (size_t i = 0; i < arrays.size(); ++i) in[i] = (*arrays[i])[p];
    out[p] = f(std::span<const double>(in, arrays.size()));
  }, 256);
  return out;
}

struct Norms {
  double max = 0;
  double l2 = 0;
};

// Max and discrete L2 norm (sqrt(sum r^2 dt dx)) over [mt, nt-mt) x [mx, nx-mx).
inline Norms grid_norms(const std::vector<double>& r, const Grid2D& g, size_t mt, size_t mx) {
  Norms n;
  double sum = 0;
  for (size_t k = mt; k + mt < g.nt; ++k) {
    for (size_t j = mx; j + mx < g.nx; ++j) {
      double v = std::abs(r[g.index(k, j)]);
      if (!std::isfinite(v)) {
        n.max = std::numeric_limits<double>::infinity();
        sum = std::numeric_limits<double>::infinity();
        continue;
      }
      n.max = std::max(n.max, v);
      sum += v * v;
    }
  }
  n.l2 = std::sqrt(sum * g.dt() * g.dx());
  return n;
}

struct SymbolicResiduals {
  std::vector<Expr> fields;
  Expr constraint;
  Expr closedness;
  std::vector<Norms> field_norms;
  Norms constraint_norms;
  Norms closedness_norms;
};

struct ResidualReport {
  Provenance provenance = Provenance::Solved;
  int stencil_order = 2;
  bool interior_only = true;
  size_t margin_t = 0;
  size_t margin_x = 0;
  std::string closedness_label;
  std::vector<std::string> fields;
  std::vector<Norms> field_equations;
  Norms constraint;
  Norms closedness;
  std::optional<SymbolicResiduals> symbolic;
};

struct ResidualOptions {
  // 0 selects default_stencil_order(grid).
  int stencil_order = 0;
  bool symbolic = true;
};

namespace detail {

// Replaces jets by derivatives of the section expressions.
inline SymbolMap section_substitution(const LagrangianSpec& spec, const SectionExprs& sec, const Expr& target) {
  SymbolMap map;
  for (const auto& s : free_symbols(target)) {
    if (!s.is_jet()) continue;
    Expr base;
    if (s.kind == SymbolKind::FieldJet) {
      base = sec.u;
    } else {
      base = s.name == spec.coords[0] ? sec.zt : sec.zx;
    }
    for (char c : s.deriv) base = partial_deriv(base, Symbol::coordinate(std::string(1, c)));
    map[s] = base;
  }
  return map;
}

inline Expr on_section(const LagrangianSpec& spec, const SectionExprs& sec, const Expr& e) {
  return substitute(e, section_substitution(spec, sec, e));
}

inline std::vector<double> sample_on_grid(const Expr& e, const Grid2D& g, const Binding& constants) {
  SlotMap slots{{Symbol::coordinate(g.t_name), 0}, {Symbol::coordinate(g.x_name), 1}};
  CompiledExpr f(e, slots, constants);
  std::vector<double> out(g.size());
  parallel_for(g.nt, [&](size_t k) {
    for (size_t j = 0; j < g.nx; ++j) {
      double in[2] = {g.t(k), g.x(j)};
      out[g.index(k, j)] = f(in);
    }
  }, 4);
  return out;
}

}  // namespace detail

inline ResidualReport evaluate_residuals(const LagrangianSpec& spec, const EquationSet& eq, const FieldSolution& sol,
                                         const ResidualOptions& opts = {}) {
  const Grid2D& g = sol.grid;
  g.validate();
  ResidualReport rep;
  rep.provenance = sol.provenance;
  rep.stencil_order = opts.stencil_order > 0 ? opts.stencil_order : default_stencil_order(g);
  rep.fields = eq.fields;
  rep.closedness_label = spec.coords[0] + spec.coords[1];
  Binding constants = spec.constant_binding();

  JetSampler jets(spec, sol, rep.stencil_order);
  std::vector<std::vector<double>> field_res;
  for (const auto& r : eq.residuals) field_res.push_back(sample_expression(r, jets, constants, g.size()));
  auto phi = sample_expression(eq.constraint, jets, constants, g.size());
  auto cl = sample_expression(eq.closedness[0][1], jets, constants, g.size());
  rep.margin_t = static_cast<size_t>(jets.margin_t());
  rep.margin_x = static_cast<size_t>(jets.margin_x());
  if (2 * rep.margin_t >= g.nt || 2 * rep.margin_x >= g.nx) {
    throw StencilOverflowError("grid leaves no interior points beyond the stencil margin");
  }
  for (const auto& r : field_res) rep.field_equations.push_back(grid_norms(r, g, rep.margin_t, rep.margin_x));
  rep.constraint = grid_norms(phi, g, rep.margin_t, rep.margin_x);
  rep.closedness = grid_norms(cl, g, rep.margin_t, rep.margin_x);

  if (opts.symbolic && sol.section) {
    SymbolicResiduals sym;
    for (const auto& r : eq.residuals) {
      sym.fields.push_back(detail::on_section(spec, *sol.section, r));
      sym.field_norms.push_back(grid_norms(detail::sample_on_grid(sym.fields.back(), g, constants), g, 0, 0));
    }
    sym.constraint = detail::on_section(spec, *sol.section, eq.constraint);
    sym.constraint_norms = grid_norms(detail::sample_on_grid(sym.constraint, g, constants), g, 0, 0);
    sym.closedness = detail::on_section(spec, *sol.section, eq.closedness[0][1]);
    sym.closedness_norms = grid_norms(detail::sample_on_grid(sym.closedness, g, constants), g, 0, 0);
    rep.symbolic = std::move(sym);
  }
  return rep;
}

struct Verdict {
  std::string quantity;
  bool pass = false;
  // Decided by the symbolic path (canonical zero test) rather than a tolerance.
  bool exact = false;
  double value = 0;
  double tolerance = 0;
  std::string expression;
};

// PASS/FAIL per quantity: symbolic residuals must vanish canonically, numeric
// ones must have max norm <= tol.
inline std::vector<Verdict> residual_verdicts(const ResidualReport& r, double tol) {
  std::vector<Verdict> out;
  auto add = [&](std::string name, const Norms& n, const Expr* sym, const Norms* sym_norms) {
    Verdict v;
    v.quantity = std::move(name);
    v.tolerance = tol;
    if (sym) {
      v.exact = true;
      v.pass = is_zero(*sym);
      v.value = sym_norms->max;
      v.expression = print_expression(*sym);
    } else {
      v.pass = n.max <= tol;
      v.value = n.max;
    }
    out.push_back(std::move(v));
  };
  for (size_t i = 0; i < r.fields.size(); ++i) {
    add("field equation " + r.fields[i], r.field_equations[i], r.symbolic ? &r.symbolic->fields[i] : nullptr,
        r.symbolic ? &r.symbolic->field_norms[i] : nullptr);
  }
  add("constraint", r.constraint, r.symbolic ? &r.symbolic->constraint : nullptr,
      r.symbolic ? &r.symbolic->constraint_norms : nullptr);
  add("closedness " + r.closedness_label, r.closedness, r.symbolic ? &r.symbolic->closedness : nullptr,
      r.symbolic ? &r.symbolic->closedness_norms : nullptr);
  return out;
}

// Samples analytic expressions for u, z^t, z^x (functions of the coordinates and constants).
inline FieldSolution analytic_section(const LagrangianSpec& spec, const Expr& u, const Expr& zt, const Expr& zx,
                                      Grid2D grid) {
  grid.t_name = spec.coords.at(0);
  grid.x_name = spec.coords.at(1);
  grid.validate();
  Binding constants = spec.constant_binding();
  FieldSolution sol;
  sol.grid = grid;
  sol.provenance = Provenance::AnalyticSection;
  sol.section = SectionExprs{simplify(u), simplify(zt), simplify(zx)};
  sol.u = detail::sample_on_grid(sol.section->u, grid, constants);
  sol.zt = detail::sample_on_grid(sol.section->zt, grid, constants);
  sol.zx = detail::sample_on_grid(sol.section->zx, grid, constants);
  if (grid.periodic()) {
    SlotMap slots{{Symbol::coordinate(grid.t_name), 0}, {Symbol::coordinate(grid.x_name), 1}};
    CompiledExpr f(sol.section->u, slots, constants);
    sol.u_period_shift.resize(grid.nt);
    for (size_t k = 0; k < grid.nt; ++k) {
      double a[2] = {grid.t(k), grid.x0}, b[2] = {grid.t(k), grid.x1};
      sol.u_period_shift[k] = f(b) - f(a);
    }
  }
  return sol;
}

struct Reconstruction {
  FieldSolution solution;
  Norms constraint;
};

// Fills z^t from z^t_t = L per spatial point with the trapezoid rule, z^x = 0.
// z^t(t0, x) is taken from the input. Implicit z^t dependence of L is resolved
// by fixed-point iteration to 1e-12.
inline Reconstruction reconstruct_action_density(const LagrangianSpec& spec, const FieldSolution& in,
                                                 int stencil_order = 0) {
  const Grid2D& g = in.grid;
  g.validate();
  FieldSolution out = in;
  out.provenance = in.provenance;
  std::fill(out.zx.begin(), out.zx.end(), 0.0);
  int order = stencil_order > 0 ? stencil_order : default_stencil_order(g);
  Binding constants = spec.constant_binding();
  const Symbol zt_sym = spec.action_jet(0);

  JetSampler jets(spec, out, order);
  SlotMap slots;
  std::vector<const std::vector<double>*> arrays;
  size_t zt_slot = SIZE_MAX;
  for (const auto& s : free_symbols(spec.lagrangian)) {
    if (s.kind == SymbolKind::Constant) continue;
    slots[s] = arrays.size();
    if (s == zt_sym) {
      zt_slot = arrays.size();
      arrays.push_back(nullptr);
    } else {
      arrays.push_back(&jets.values(s));
    }
  }
  CompiledExpr L(spec.lagrangian, slots, constants);
  const double dt = g.dt();

  parallel_for(g.nx, [&](size_t j) {
    std::vector<double> in_slots(arrays.size());
    auto eval = [&](size_t k, double z) {
      for (size_t i = 0; i < arrays.size(); ++i) in_slots[i] = i == zt_slot ? z : (*arrays[i])[g.index(k, j)];
      return L(in_slots);
    };
    double z = out.zt[g.index(0, j)];
    double Lk = eval(0, z);
    for (size_t k = 0; k + 1 < g.nt; ++k) {
      double next = z + dt * Lk;
      double Ln = eval(k + 1, next);
      if (zt_slot != SIZE_MAX) {
        bool done = false;
        for (int it = 0; it < 200; ++it) {
          double cand = z + 0.5 * dt * (Lk + eval(k + 1, next));
          if (!std::isfinite(cand)) break;
          double change = std::abs(cand - next);
          next = cand;
          if (change <= 1e-12 * std::max(1.0, std::abs(next))) {
            done = true;
            break;
          }
        }
        if (!done) throw FixedPointDivergenceError(g.t(k + 1), g.x(j));
        Ln = eval(k + 1, next);
      } else {
        next = z + 0.5 * dt * (Lk + Ln);
      }
      z = next;
      Lk = Ln;
      out.zt[g.index(k + 1, j)] = z;
    }
  }, 1);

  Reconstruction r;
  JetSampler check(spec, out, order);
  auto phi = sample_expression(constraint_expression(spec), check, constants, g.size());
  r.constraint = grid_norms(phi, g, static_cast<size_t>(check.margin_t()), static_cast<size_t>(check.margin_x()));
  r.solution = std::move(out);
  return r;
}

namespace detail {

inline std::vector<double> sample_initial(const Expr& e, const Grid2D& g, Binding constants) {
  constants.emplace(Symbol::constant("pi"), std::numbers::pi);
  SlotMap slots{{Symbol::coordinate(g.t_name), 0}, {Symbol::coordinate(g.x_name), 1}};
  CompiledExpr f(e, slots, constants);
  std::vector<double> out(g.nx);
  for (size_t j = 0; j < g.nx; ++j) {
    double in[2] = {g.t0, g.x(j)};
    out[j] = f(in);
  }
  return out;
}

}  // namespace detail

struct StringResult {
  FieldSolution solution;
  // Per stored row: E = sum (u_t^2/2 + c^2 u_x^2/2) dx and the rate -gamma sum u_t^2 dx.
  std::vector<double> energy;
  std::vector<double> dissipation;
};

// u_tt = c2 u_xx - gamma u_t with u = 0 at both x edges. Central differences in
// space and time, damping term averaged symmetrically, Taylor-seeded first step.
inline StringResult solve_damped_string(double c2, double gamma, const Expr& u0, const Expr& ut0, Grid2D grid,
                                        const Binding& constants = {}) {
  grid.validate();
  if (grid.periodic()) throw std::invalid_argument("the string solver needs fixed x edges");
  if (!(c2 > 0)) throw std::invalid_argument("wave speed squared must be positive");
  const double dt = grid.dt(), dx = grid.dx();
  const double c = std::sqrt(c2);
  const double cfl = c * dt / dx;
  if (cfl > 0.9) {
    throw StabilityError("CFL number c*dt/dx = " + Number::format_double(cfl) + " exceeds 0.9");
  }
  const size_t nx = grid.nx, nt = grid.nt;
  auto a = detail::sample_initial(u0, grid, constants);
  auto b = detail::sample_initial(ut0, grid, constants);
  a.front() = a.back() = 0;
  b.front() = b.back() = 0;

  StringResult res;
  res.solution = FieldSolution::zeros(grid);
  auto& U = res.solution.u;
  auto lap = [&](const std::vector<double>& f, size_t j) { return (f[j + 1] - 2 * f[j] + f[j - 1]) / (dx * dx); };

  std::vector<double> utt(nx, 0.0), uttt(nx, 0.0);
  for (size_t j = 1; j + 1 < nx; ++j) utt[j] = c2 * lap(a, j) - gamma * b[j];
  for (size_t j = 1; j + 1 < nx; ++j) uttt[j] = c2 * lap(b, j) - gamma * utt[j];
  for (size_t j = 0; j < nx; ++j) {
    U[j] = a[j];
    U[nx + j] = a[j] + dt * b[j] + dt * dt / 2 * utt[j] + dt * dt * dt / 6 * uttt[j];
  }
  U[nx] = U[2 * nx - 1] = 0;

  const double r2 = cfl * cfl;
  const double plus = 1 + gamma * dt / 2, minus = 1 - gamma * dt / 2;
  for (size_t k = 1; k + 1 < nt; ++k) {
    const double* prev = &U[(k - 1) * nx];
    const double* cur = &U[k * nx];
    double* next = &U[(k + 1) * nx];
    for (size_t j = 1; j + 1 < nx; ++j) {
      next[j] = (2 * cur[j] - minus * prev[j] + r2 * (cur[j + 1] - 2 * cur[j] + cur[j - 1])) / plus;
      if (!std::isfinite(next[j])) {
        throw StabilityError("non-finite string displacement at step " + std::to_string(k + 1));
      }
    }
    next[0] = next[nx - 1] = 0;
  }

  res.energy.resize(nt);
  res.dissipation.resize(nt);
  for (size_t k = 0; k < nt; ++k) {
    double kin = 0, pot = 0;
    for (size_t j = 0; j < nx; ++j) {
      double ut;
      if (k == 0) {
        ut = b[j];
      } else if (k + 1 == nt) {
        ut = (3 * U[k * nx + j] - 4 * U[(k - 1) * nx + j] + U[(k - 2) * nx + j]) / (2 * dt);
      } else {
        ut = (U[(k + 1) * nx + j] - U[(k - 1) * nx + j]) / (2 * dt);
      }
      kin += ut * ut;
      if (j + 1 < nx) {
        double ux = (U[k * nx + j + 1] - U[k * nx + j]) / dx;
        pot += ux * ux;
      }
    }
    res.energy[k] = 0.5 * kin * dx + 0.5 * c2 * pot * dx;
    res.dissipation[k] = -gamma * kin * dx;
  }
  return res;
}

struct KdvOptions {
  // Internal RK4 steps per stored row; 0 picks the smallest count meeting the stability bound.
  size_t substeps = 0;
  // dt <= safety * dx^3 / (max|v| * 6 * dx^2 + 4)
  double safety = 0.4;
};

struct KdvResult {
  FieldSolution solution;
  std::vector<double> v;
  // Per stored row: sum v dx.
  std::vector<double> mass;
  size_t total_steps = 0;
};

namespace detail {

inline double kdv_step_bound(double dx, double vmax, double safety) {
  return safety * dx * dx * dx / (vmax * 6 * dx * dx + 4);
}

// v_t = -(gamma_t/2) v - 6 v v_x - v_xxx, fourth-order central differences, periodic.
// `pad` is scratch space for v with three ghost cells on each side.
inline void kdv_rhs(const std::vector<double>& v, std::vector<double>& out, std::vector<double>& pad, double gamma_t,
                    double dx) {
  const size_t n = v.size();
  pad.resize(n + 6);
  for (size_t i = 0; i < 3; ++i) {
    pad[i] = v[n - 3 + i];
    pad[n + 3 + i] = v[i];
  }
  std::copy(v.begin(), v.end(), pad.begin() + 3);
  const double i12 = 1.0 / (12 * dx), i8 = 1.0 / (8 * dx * dx * dx);
  const double* p = pad.data() + 3;
  for (size_t j = 0; j < n; ++j) {
    double vx = (-p[j + 2] + 8 * p[j + 1] - 8 * p[j - 1] + p[j - 2]) * i12;
    double vxxx = (-p[j + 3] + 8 * p[j + 2] - 13 * p[j + 1] + 13 * p[j - 1] - 8 * p[j - 2] + p[j - 3]) * i8;
    out[j] = -0.5 * gamma_t * p[j] - 6 * p[j] * vx - vxxx;
  }
}

// Periodic antiderivative with fourth-order endpoint-corrected trapezoid cells,
// shifted to zero mean. Returns the jump over one period.
inline double periodic_antiderivative(const std::vector<double>& v, double dx, double* u) {
  const long n = static_cast<long>(v.size());
  auto at = [&](long j) { return v[static_cast<size_t>(((j % n) + n) % n)]; };
  auto dv = [&](long j) { return (-at(j + 2) + 8 * at(j + 1) - 8 * at(j - 1) + at(j - 2)) / (12 * dx); };
  u[0] = 0;
  for (long j = 0; j + 1 < n; ++j) {
    u[j + 1] = u[j] + 0.5 * dx * (at(j) + at(j + 1)) - dx * dx / 12 * (dv(j + 1) - dv(j));
  }
  double mean = 0;
  for (long j = 0; j < n; ++j) mean += u[j];
  mean /= static_cast<double>(n);
  for (long j = 0; j < n; ++j) u[j] -= mean;
  double jump = 0;
  for (long j = 0; j < n; ++j) jump += at(j);
  return jump * dx;
}

}  // namespace detail

// Damped KdV in v = u_x on a periodic grid; u is stored as the zero-mean
// antiderivative of v with the period jump recorded per row.
inline KdvResult solve_damped_kdv(double gamma_t, const Expr& v0, Grid2D grid, const Binding& constants = {},
                                  const KdvOptions& opts = {}) {
  grid.validate();
  if (!grid.periodic()) throw std::invalid_argument("the KdV solver needs a periodic x grid");
  const size_t nt = grid.nt, nx = grid.nx;
  const double dx = grid.dx(), dt_out = grid.dt();
  KdvResult res;
  res.solution = FieldSolution::zeros(grid);
  res.solution.u_period_shift.assign(nt, 0.0);
  res.v.assign(grid.size(), 0.0);
  res.mass.assign(nt, 0.0);

  std::vector<double> v = detail::sample_initial(v0, grid, constants);
  auto store = [&](size_t k) {
    std::copy(v.begin(), v.end(), res.v.begin() + static_cast<long>(k * nx));
    res.solution.u_period_shift[k] = detail::periodic_antiderivative(v, dx, &res.solution.u[k * nx]);
    res.mass[k] = res.solution.u_period_shift[k];
  };
  store(0);

  std::vector<double> k1(nx), k2(nx), k3(nx), k4(nx), tmp(nx), pad;
  for (size_t k = 0; k + 1 < nt; ++k) {
    double vmax = 0;
    for (double x : v) vmax = std::max(vmax, std::abs(x));
    double bound = detail::kdv_step_bound(dx, vmax, opts.safety);
    size_t sub = opts.substeps;
    if (sub == 0) {
      sub = static_cast<size_t>(std::ceil(dt_out / bound - 1e-12));
      sub = std::max<size_t>(sub, 1);
    } else if (dt_out / static_cast<double>(sub) > bound) {
      throw StabilityError("KdV step " + Number::format_double(dt_out / static_cast<double>(sub)) +
                           " exceeds the stability bound " + Number::format_double(bound) + " at row " +
                           std::to_string(k));
    }
    const double h = dt_out / static_cast<double>(sub);
    for (size_t s = 0; s < sub; ++s) {
      detail::kdv_rhs(v, k1, pad, gamma_t, dx);
      for (size_t j = 0; j < nx; ++j) tmp[j] = v[j] + 0.5 * h * k1[j];
      detail::kdv_rhs(tmp, k2, pad, gamma_t, dx);
      for (size_t j = 0; j < nx; ++j) tmp[j] = v[j] + 0.5 * h * k2[j];
      detail::kdv_rhs(tmp, k3, pad, gamma_t, dx);
      for (size_t j = 0; j < nx; ++j) tmp[j] = v[j] + h * k3[j];
      detail::kdv_rhs(tmp, k4, pad, gamma_t, dx);
      for (size_t j = 0; j < nx; ++j) v[j] += h / 6 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
      ++res.total_steps;
    }
    for (double x : v) {
      if (!std::isfinite(x)) {
        throw StabilityError("non-finite KdV state at step " + std::to_string(res.total_steps));
      }
    }
    store(k + 1);
  }
  return res;
}

// Trapezoid-weighted sum of L dt dx over the grid (periodic x: uniform weights).
inline double discrete_action(const LagrangianSpec& spec, const FieldSolution& sol, int stencil_order = 0) {
  const Grid2D& g = sol.grid;
  JetSampler jets(spec, sol, stencil_order > 0 ? stencil_order : default_stencil_order(g));
  auto L = sample_expression(spec.lagrangian, jets, spec.constant_binding(), g.size());
  double total = 0;
  for (size_t k = 0; k < g.nt; ++k) {
    double wt = (k == 0 || k + 1 == g.nt) ? 0.5 : 1.0;
    double row = 0;
    for (size_t j = 0; j < g.nx; ++j) {
      double wx = (!g.periodic() && (j == 0 || j + 1 == g.nx)) ? 0.5 : 1.0;
      row += wx * L[g.index(k, j)];
    }
    total += wt * row;
  }
  return total * g.dt() * g.dx();
}

struct FieldGradientReport {
  double u_direction = 0;
  double z_direction = 0;
  std::vector<double> u_gradients;
  std::vector<double> z_gradients;
  double constraint_max = 0;
};

// Tensor sine bump modes (k, l) ordered by k + l, then k.
inline std::vector<std::pair<int, int>> bump_modes(int n) {
  std::vector<std::pair<int, int>> out;
  for (int s = 2; static_cast<int>(out.size()) < n; ++s) {
    for (int k = 1; k < s && static_cast<int>(out.size()) < n; ++k) out.emplace_back(k, s - k);
  }
  return out;
}

// Discretization-scale bound C*(dt^2 + dx^2), used for constraint and gradient tolerances.
inline double grid_scale_tolerance(const Grid2D& g, double c) { return c * (g.dt() * g.dt() + g.dx() * g.dx()); }

struct FieldGradientOptions {
  size_t max_points_per_axis = 64;
  // 0 selects grid_scale_tolerance(grid, 10).
  double constraint_tolerance = 0;
  int stencil_order = 0;
};

// Central differences of the discrete action along (a) u-bumps with z^t
// re-reconstructed and (b) stream-function z-bumps dz^t = psi_x, dz^x = -psi_t.
inline FieldGradientReport discrete_action_gradient_check(const LagrangianSpec& spec, const FieldSolution& sol,
                                                          int n_modes, double h,
                                                          const FieldGradientOptions& opts = {}) {
  const Grid2D& g = sol.grid;
  g.validate();
  if (g.nt > opts.max_points_per_axis || g.nx > opts.max_points_per_axis) {
    throw std::invalid_argument("gradient check grid exceeds " + std::to_string(opts.max_points_per_axis) +
                                " points per axis");
  }
  if (n_modes < 1 || !(h > 0)) throw std::invalid_argument("need n_modes >= 1 and h > 0");
  const int order = opts.stencil_order > 0 ? opts.stencil_order : default_stencil_order(g);

  FieldGradientReport rep;
  {
    JetSampler jets(spec, sol, order);
    auto phi = sample_expression(constraint_expression(spec), jets, spec.constant_binding(), g.size());
    rep.constraint_max =
        grid_norms(phi, g, static_cast<size_t>(jets.margin_t()), static_cast<size_t>(jets.margin_x())).max;
  }
  double ctol = opts.constraint_tolerance > 0 ? opts.constraint_tolerance : grid_scale_tolerance(g, 10) + 1e-10;
  if (!(rep.constraint_max <= ctol)) {
    throw ConstraintViolationError("section violates the constraint: max |phi| = " +
                                   Number::format_double(rep.constraint_max) + " > " + Number::format_double(ctol));
  }

  const double T = g.t1 - g.t0;
  const double X = g.periodic() ? g.x1 - g.x0 : g.x(g.nx - 1) - g.x0;
  auto modes = bump_modes(n_modes);
  rep.u_gradients.assign(modes.size(), 0.0);
  rep.z_gradients.assign(modes.size(), 0.0);

  parallel_for(2 * modes.size(), [&](size_t task) {
    size_t m = task / 2;
    bool u_dir = task % 2 == 0;
    const double kw = modes[m].first * std::numbers::pi / T;
    const double lw = modes[m].second * std::numbers::pi / X;
    double action[2];
    for (int side = 0; side < 2; ++side) {
      double s = side == 0 ? h : -h;
      FieldSolution p = sol;
      p.section.reset();
      for (size_t k = 0; k < g.nt; ++k) {
        double tt = g.t(k) - g.t0;
        for (size_t j = 0; j < g.nx; ++j) {
          double xx = g.x(j) - g.x0;
          size_t i = g.index(k, j);
          if (u_dir) {
            p.u[i] += s * std::sin(kw * tt) * std::sin(lw * xx);
          } else {
            p.zt[i] += s * lw * std::sin(kw * tt) * std::cos(lw * xx);
            p.zx[i] -= s * kw * std::cos(kw * tt) * std::sin(lw * xx);
          }
        }
      }
      if (u_dir) p = reconstruct_action_density(spec, p, order).solution;
      action[side] = discrete_action(spec, p, order);
    }
    (u_dir ? rep.u_gradients : rep.z_gradients)[m] = (action[0] - action[1]) / (2 * h);
  }, 1);

  for (double v : rep.u_gradients) rep.u_direction = std::max(rep.u_direction, std::abs(v));
  for (double v : rep.z_gradients) rep.z_direction = std::max(rep.z_direction, std::abs(v));
  return rep;
}

}  // namespace herglotz
