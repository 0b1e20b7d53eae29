#pragma once

// Problem-file driven runs: reads the solver and section blocks, recognizes
// the equation shapes the field solvers handle, and dispatches.
//
// solver block keys
//   scheme      string | kdv | rk4 (default: rk4 for one coordinate, string for
//               first order, kdv for second order)
//   t           t0, t1
//   x           x0, x1
//   nt, nx, dt  grid sizes / time step (dt overrides nt)
//   boundary    fixed | periodic
//   u0, ut0     string initial data; ux0 KdV initial data (v = u_x)
//   zt0         z^t at t0 (default 0)
//   q0, v0, z0  mechanics initial data (one entry per field)
//   substeps, safety   KdV internal stepping
// section block keys: u, z^t, z^x (missing components are 0)

#include "herglotz/dsl.hpp"
#include "herglotz/fields.hpp"
#include "herglotz/mechanics.hpp"

#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace herglotz {

// Raised when a problem cannot be run as requested (not a parse error).
class ProblemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scheme { Mechanics, String, Kdv };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::Mechanics: return "rk4";
    case Scheme::String: return "string";
    case Scheme::Kdv: return "kdv";
  }
  return "";
}

struct RunOverrides {
  std::optional<double> dt;
  std::optional<size_t> nt;
  std::optional<size_t> nx;
};

namespace detail {

inline const Entry* solver_entry(const ProblemFile& pf, const std::string& key) {
  auto it = pf.solver.find(key);
  return it == pf.solver.end() ? nullptr : &it->second;
}

inline void check_solver_keys(const ProblemFile& pf) {
  static const std::set<std::string> known = {"scheme", "t",   "x",   "nt", "nx", "dt",       "boundary",
                                              "u0",     "ut0", "ux0", "zt0", "q0", "v0", "z0", "substeps",
                                              "safety"};
  for (const auto& [key, e] : pf.solver) {
    if (known.count(key) == 0) throw ParseError(e.line, e.column, "unknown solver key '" + key + "'", key);
  }
  static const std::set<std::string> section_keys = {"u", "z^t", "z^x"};
  for (const auto& [key, e] : pf.section) {
    if (section_keys.count(key) == 0) throw ParseError(e.line, e.column, "unknown section key '" + key + "'", key);
  }
}

inline std::string word(const Entry& e) {
  std::string w = trim(e.value.text());
  for (char c : w) {
    if (!std::isalnum(static_cast<unsigned char>(c))) e.value.fail(0, "expected a single word", w);
  }
  return w;
}

inline size_t positive_count(const ProblemFile& pf, const Entry& e) {
  double v = entry_number(pf, e);
  if (!(v >= 1) || v != std::floor(v) || v > 1e9) e.value.fail(0, "expected a positive integer", e.value.text());
  return static_cast<size_t>(v);
}

inline std::pair<double, double> range(const ProblemFile& pf, const std::string& key, double a, double b) {
  const Entry* e = solver_entry(pf, key);
  if (e == nullptr) return {a, b};
  auto v = entry_numbers(pf, *e);
  if (v.size() != 2) e->value.fail(0, "expected two numbers", e->value.text());
  return {v[0], v[1]};
}

// Evaluates a coefficient that may only involve constants.
inline double constant_coefficient(const LagrangianSpec& spec, const Expr& e, const std::string& what) {
  for (const auto& s : free_symbols(e)) {
    if (s.kind != SymbolKind::Constant) {
      throw ProblemError("coefficient of " + what + " is not constant: " + print_expression(e));
    }
  }
  try {
    return eval_numeric(e, spec.constant_binding());
  } catch (const UnboundSymbolError& err) {
    throw ProblemError(std::string("solver needs a value for every constant: ") + err.what());
  }
}

}  // namespace detail

struct StringCoefficients {
  double c2 = 0;
  double gamma = 0;
};

// Reads a residual of the form a*u_tt + b*u_xx + c*u_t with constant a, b, c.
inline StringCoefficients string_coefficients(const LagrangianSpec& spec, const EquationSet& eq) {
  if (spec.dimension() != 2 || spec.fields.size() != 1) {
    throw ProblemError("the string solver needs one field over two coordinates");
  }
  const Expr& E = eq.residuals.at(0);
  MultiIndex tt(2), xx(2), t1(2);
  tt.counts = {2, 0};
  xx.counts = {0, 2};
  t1.counts = {1, 0};
  Symbol s_tt = spec.field_jet(0, tt), s_xx = spec.field_jet(0, xx), s_t = spec.field_jet(0, t1);
  Expr a = simplify(partial_deriv(E, s_tt));
  Expr b = simplify(partial_deriv(E, s_xx));
  Expr c = simplify(partial_deriv(E, s_t));
  Expr rest = E - a * Expr(s_tt) - b * Expr(s_xx) - c * Expr(s_t);
  if (!is_zero(rest)) {
    throw ProblemError("field equation is not of damped-string form: " + print_expression(E) + " = 0");
  }
  double av = detail::constant_coefficient(spec, a, spec.fields[0] + "_" + s_tt.deriv);
  double bv = detail::constant_coefficient(spec, b, spec.fields[0] + "_" + s_xx.deriv);
  double cv = detail::constant_coefficient(spec, c, spec.fields[0] + "_" + s_t.deriv);
  if (av == 0) throw ProblemError("field equation has no second time derivative");
  return {-bv / av, cv / av};
}

// Reads a residual a*(u_tx + 6 u_x u_xx + u_xxxx) + b*u_x and returns gamma_t = 2b/a.
// Constants whose value is zero (gamma_x) are set to zero exactly first.
inline double kdv_gamma_t(const LagrangianSpec& spec, const EquationSet& eq) {
  if (spec.dimension() != 2 || spec.fields.size() != 1) {
    throw ProblemError("the KdV solver needs one field over two coordinates");
  }
  SymbolMap zeros;
  for (const auto& c : spec.constants) {
    if (c.value && *c.value == 0) zeros[Symbol::constant(c.name)] = Expr(0);
  }
  const Expr E = substitute(eq.residuals.at(0), zeros);
  auto jet = [&](int ct, int cx) { return spec.field_jet(0, MultiIndex(std::vector<int>{ct, cx})); };
  Expr utx = jet(1, 1), ux = jet(0, 1), uxx = jet(0, 2), uxxxx = jet(0, 4);
  Expr a = simplify(partial_deriv(E, jet(1, 1)));
  Expr b = simplify(partial_deriv(E - a * (utx + Expr(6) * ux * uxx + uxxxx), jet(0, 1)));
  Expr rest = E - a * (utx + Expr(6) * ux * uxx + uxxxx) - b * ux;
  if (!is_zero(rest)) {
    throw ProblemError("field equation is not of damped-KdV form with gamma_x = 0: " +
                       print_expression(eq.residuals.at(0)) + " = 0");
  }
  double av = detail::constant_coefficient(spec, a, "u_tx");
  double bv = detail::constant_coefficient(spec, b, "u_x");
  if (av == 0) throw ProblemError("field equation has no u_tx term");
  return 2 * bv / av;
}

inline Scheme problem_scheme(const ProblemFile& pf) {
  detail::check_solver_keys(pf);
  if (const Entry* e = detail::solver_entry(pf, "scheme")) {
    std::string w = detail::word(*e);
    if (w == "rk4") return Scheme::Mechanics;
    if (w == "string") return Scheme::String;
    if (w == "kdv") return Scheme::Kdv;
    e->value.fail(0, "unknown scheme '" + w + "' (expected rk4, string or kdv)", w);
  }
  if (pf.spec.is_mechanics()) return Scheme::Mechanics;
  return pf.spec.order == 1 ? Scheme::String : Scheme::Kdv;
}

// Grid described by the solver block (or defaults), with CLI overrides applied.
inline Grid2D problem_grid(const ProblemFile& pf, Scheme scheme, const RunOverrides& ov = {}) {
  detail::check_solver_keys(pf);
  if (pf.spec.dimension() != 2) throw ProblemError("field grids need exactly two coordinates");
  Grid2D g;
  g.t_name = pf.spec.coords[0];
  g.x_name = pf.spec.coords[1];
  bool kdv = scheme == Scheme::Kdv;
  std::tie(g.t0, g.t1) = detail::range(pf, "t", 0, 1);
  std::tie(g.x0, g.x1) = kdv ? detail::range(pf, "x", -20, 20) : detail::range(pf, "x", 0, 1);
  g.x_boundary = kdv ? Boundary::Periodic : Boundary::Fixed;
  if (const Entry* e = detail::solver_entry(pf, "boundary")) {
    std::string w = detail::word(*e);
    if (w == "periodic") {
      g.x_boundary = Boundary::Periodic;
    } else if (w == "fixed") {
      g.x_boundary = Boundary::Fixed;
    } else {
      e->value.fail(0, "boundary must be fixed or periodic", w);
    }
  }
  g.nx = kdv ? 256 : 101;
  if (const Entry* e = detail::solver_entry(pf, "nx")) g.nx = detail::positive_count(pf, *e);
  if (ov.nx) g.nx = *ov.nx;

  std::optional<double> dt;
  std::optional<size_t> nt;
  if (const Entry* e = detail::solver_entry(pf, "nt")) nt = detail::positive_count(pf, *e);
  if (const Entry* e = detail::solver_entry(pf, "dt")) dt = entry_number(pf, *e);
  if (ov.nt) {
    nt = ov.nt;
    dt.reset();
  }
  if (ov.dt) {
    dt = ov.dt;
    nt.reset();
  }
  if (dt) {
    if (!(*dt > 0)) throw ProblemError("time step must be positive");
    g.nt = static_cast<size_t>(std::llround((g.t1 - g.t0) / *dt)) + 1;
  } else if (nt) {
    g.nt = *nt;
  } else if (scheme == Scheme::String) {
    // Half the CFL limit for unit speed.
    double dx = g.periodic() ? (g.x1 - g.x0) / static_cast<double>(g.nx) : (g.x1 - g.x0) / static_cast<double>(g.nx - 1);
    g.nt = static_cast<size_t>(std::ceil((g.t1 - g.t0) / (0.5 * dx))) + 1;
  } else if (kdv) {
    g.nt = 41;
  } else {
    g.nt = 33;
  }
  g.validate();
  return g;
}

struct FieldRun {
  Scheme scheme = Scheme::String;
  FieldSolution solution;
  Norms constraint;
  // String runs.
  StringCoefficients coefficients;
  std::vector<double> energy, dissipation;
  // KdV runs.
  double gamma_t = 0;
  std::vector<double> mass;
  size_t kdv_steps = 0;
};

namespace detail {

inline Expr solver_expression(const ProblemFile& pf, const std::string& key, bool required) {
  const Entry* e = solver_entry(pf, key);
  if (e == nullptr) {
    if (required) throw ProblemError("solver block needs '" + key + "'");
    return Expr(0);
  }
  return entry_expression(pf, *e);
}

inline void seed_zt(const ProblemFile& pf, FieldSolution& sol) {
  Expr zt0 = solver_expression(pf, "zt0", false);
  auto row = sample_initial(zt0, sol.grid, pf.spec.constant_binding());
  std::copy(row.begin(), row.end(), sol.zt.begin());
}

}  // namespace detail

inline FieldRun run_field_problem(const ProblemFile& pf, const RunOverrides& ov = {}) {
  if (!pf.has_solver) throw ProblemError("problem file has no solver block");
  FieldRun run;
  run.scheme = problem_scheme(pf);
  if (run.scheme == Scheme::Mechanics) throw ProblemError("rk4 is the mechanics scheme; use a field scheme");
  Grid2D g = problem_grid(pf, run.scheme, ov);
  EquationSet eq = derive_equations(pf.spec);
  if (!eq.closed()) {
    throw NotClosedError(eq.closedness, "C_" + g.t_name + g.x_name + " = " + print_expression(eq.closedness[0][1]));
  }
  Binding constants = pf.spec.constant_binding();
  if (run.scheme == Scheme::String) {
    run.coefficients = string_coefficients(pf.spec, eq);
    auto res = solve_damped_string(run.coefficients.c2, run.coefficients.gamma,
                                   detail::solver_expression(pf, "u0", true),
                                   detail::solver_expression(pf, "ut0", false), g, constants);
    run.solution = std::move(res.solution);
    run.energy = std::move(res.energy);
    run.dissipation = std::move(res.dissipation);
  } else {
    run.gamma_t = kdv_gamma_t(pf.spec, eq);
    KdvOptions opts;
    if (const Entry* e = detail::solver_entry(pf, "substeps")) opts.substeps = detail::positive_count(pf, *e);
    if (const Entry* e = detail::solver_entry(pf, "safety")) opts.safety = entry_number(pf, *e);
    auto res = solve_damped_kdv(run.gamma_t, detail::solver_expression(pf, "ux0", true), g, constants, opts);
    run.solution = std::move(res.solution);
    run.mass = std::move(res.mass);
    run.kdv_steps = res.total_steps;
  }
  detail::seed_zt(pf, run.solution);
  auto rec = reconstruct_action_density(pf.spec, run.solution);
  run.solution = std::move(rec.solution);
  run.constraint = rec.constraint;
  return run;
}

struct MechanicsRun {
  Trajectory trajectory;
  std::vector<double> multiplier;
};

inline MechanicsRun run_mechanics_problem(const ProblemFile& pf, const RunOverrides& ov = {}) {
  if (!pf.has_solver) throw ProblemError("problem file has no solver block");
  if (problem_scheme(pf) != Scheme::Mechanics || !pf.spec.is_mechanics()) {
    throw ProblemError("rk4 runs need a single coordinate");
  }
  auto [t0, t1] = detail::range(pf, "t", 0, 10);
  double dt = 1e-3;
  if (const Entry* e = detail::solver_entry(pf, "dt")) dt = entry_number(pf, *e);
  if (const Entry* e = detail::solver_entry(pf, "nt")) {
    dt = (t1 - t0) / static_cast<double>(detail::positive_count(pf, *e) - 1);
  }
  if (ov.nt) dt = (t1 - t0) / static_cast<double>(*ov.nt - 1);
  if (ov.dt) dt = *ov.dt;
  if (!(dt > 0) || !(t1 > t0)) throw ProblemError("need t1 > t0 and dt > 0");
  const size_t n = pf.spec.fields.size();
  auto list = [&](const std::string& key) {
    const Entry* e = detail::solver_entry(pf, key);
    if (e == nullptr) return std::vector<double>(n, 0.0);
    auto v = entry_numbers(pf, *e);
    if (v.size() != n) e->value.fail(0, "expected " + std::to_string(n) + " value(s)", e->value.text());
    return v;
  };
  std::vector<double> q0 = list("q0"), v0 = list("v0");
  double z0 = 0;
  if (const Entry* e = detail::solver_entry(pf, "z0")) z0 = entry_number(pf, *e);
  MechanicsSystem sys(pf.spec);
  MechanicsRun run;
  run.trajectory = integrate(sys, q0, v0, z0, t0, t1, dt);
  run.multiplier = multiplier_profile(sys, run.trajectory);
  return run;
}

// Samples the section block on the problem grid.
inline FieldSolution problem_section(const ProblemFile& pf, const RunOverrides& ov = {}) {
  if (!pf.has_section) throw ProblemError("problem file has no section block");
  detail::check_solver_keys(pf);
  Scheme scheme = pf.spec.order == 1 ? Scheme::String : Scheme::Kdv;
  if (pf.has_solver && detail::solver_entry(pf, "scheme") != nullptr) scheme = problem_scheme(pf);
  Grid2D g = problem_grid(pf, scheme, ov);
  auto component = [&](const std::string& key) {
    auto it = pf.section.find(key);
    return it == pf.section.end() ? Expr(0) : entry_expression(pf, it->second);
  };
  return analytic_section(pf.spec, component("u"), component("z^t"), component("z^x"), g);
}

}  // namespace herglotz
