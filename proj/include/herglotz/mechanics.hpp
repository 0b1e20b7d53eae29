#pragma once

// Herglotz mechanics: fixed-step RK4 integration of (q, q_t, z) with
// zdot = L, the contact action, a brute-force check of the implicit
// variational principle and the multiplier profile lambda(t).

#include "herglotz/compiled.hpp"
#include "herglotz/jet.hpp"
#include "herglotz/parallel.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace herglotz {

class SingularHessianError : public std::runtime_error {
 public:
  explicit SingularHessianError(double t)
      : std::runtime_error("singular velocity Hessian at t = " + Number::format_double(t)), time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

class NonFiniteStateError : public std::runtime_error {
 public:
  NonFiniteStateError(double t, const std::string& what)
      : std::runtime_error("non-finite " + what + " at t = " + Number::format_double(t)), time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

// Samples on t_k = t0 + k*dt, k = 0..N. q[k][i], v[k][i] with v = dq/dt.
struct Trajectory {
  std::vector<std::string> coords;
  double t0 = 0;
  double dt = 0;
  std::vector<double> t;
  std::vector<std::vector<double>> q;
  std::vector<std::vector<double>> v;
  std::vector<double> z;
  // Largest condition-number estimate of the velocity Hessian seen while integrating.
  double max_condition = 1;

  size_t steps() const { return t.empty() ? 0 : t.size() - 1; }
  size_t dof() const { return coords.size(); }
};

namespace detail {

// Solves A x = b in place by Gaussian elimination with partial pivoting.
// Returns false when a pivot vanishes relative to the matrix scale.
inline bool solve_linear(std::vector<double>& a, std::vector<double>& b, size_t n) {
  double scale = 0;
  for (double x : a) scale = std::max(scale, std::abs(x));
  if (!(scale > 0)) return false;
  for (size_t c = 0; c < n; ++c) {
    size_t piv = c;
    for (size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    }
    if (std::abs(a[piv * n + c]) <= 1e-13 * scale) return false;
    if (piv != c) {
      for (size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
      std::swap(b[c], b[piv]);
    }
    for (size_t r = c + 1; r < n; ++r) {
      double f = a[r * n + c] / a[c * n + c];
      if (f == 0) continue;
      for (size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
      b[r] -= f * b[c];
    }
  }
  for (size_t c = n; c-- > 0;) {
    double s = b[c];
    for (size_t k = c + 1; k < n; ++k) s -= a[c * n + k] * b[k];
    b[c] = s / a[c * n + c];
  }
  return true;
}

inline double infinity_norm(const std::vector<double>& a, size_t n) {
  double best = 0;
  for (size_t r = 0; r < n; ++r) {
    double s = 0;
    for (size_t c = 0; c < n; ++c) s += std::abs(a[r * n + c]);
    best = std::max(best, s);
  }
  return best;
}

}  // namespace detail

// Derived equations of a single-coordinate spec compiled for numeric use.
// Slot layout: [t, q_0..q_{n-1}, v_0..v_{n-1}, z].
class MechanicsSystem {
 public:
  explicit MechanicsSystem(const LagrangianSpec& spec) : MechanicsSystem(spec, spec.constant_binding()) {}

  MechanicsSystem(const LagrangianSpec& spec, const Binding& constants)
      : spec_(spec), equations_(derive_mechanics_equations(spec)), n_(spec.fields.size()) {
    const MultiIndex first = MultiIndex(1).raised(0);
    slots_[spec.coordinate(0)] = 0;
    for (size_t i = 0; i < n_; ++i) {
      slots_[spec.field_jet(i)] = 1 + i;
      slots_[spec.field_jet(i, first)] = 1 + n_ + i;
    }
    slots_[spec.action_jet(0)] = 1 + 2 * n_;
    lagrangian_ = CompiledExpr(spec.lagrangian, slots_, constants);
    dl_dz_ = CompiledExpr(partial_deriv(spec.lagrangian, spec.action_jet(0)), slots_, constants);
    for (size_t i = 0; i < n_; ++i) {
      dl_dq_.emplace_back(partial_deriv(spec.lagrangian, spec.field_jet(i)), slots_, constants);
      dl_dv_.emplace_back(partial_deriv(spec.lagrangian, spec.field_jet(i, first)), slots_, constants);
      force_.emplace_back(equations_.force[i], slots_, constants);
      for (size_t j = 0; j < n_; ++j) mass_.emplace_back(equations_.mass[i][j], slots_, constants);
    }
  }

  const LagrangianSpec& spec() const { return spec_; }
  const MechanicsEquations& equations() const { return equations_; }
  size_t dof() const { return n_; }
  size_t slot_count() const { return 2 + 2 * n_; }

  std::vector<double> pack(double t, const double* q, const double* v, double z) const {
    std::vector<double> s(slot_count());
    s[0] = t;
    for (size_t i = 0; i < n_; ++i) {
      s[1 + i] = q[i];
      s[1 + n_ + i] = v[i];
    }
    s[1 + 2 * n_] = z;
    return s;
  }

  double lagrangian(std::span<const double> s) const { return lagrangian_(s); }
  double dl_dz(std::span<const double> s) const { return dl_dz_(s); }
  double dl_dq(std::span<const double> s, size_t i) const { return dl_dq_[i](s); }
  double dl_dv(std::span<const double> s, size_t i) const { return dl_dv_[i](s); }

  // Solves W qdd = R at the packed state; returns the condition estimate ||W|| ||W^-1||.
  double acceleration(std::span<const double> s, double* out) const {
    std::vector<double> w(n_ * n_), r(n_);
    for (size_t k = 0; k < n_ * n_; ++k) w[k] = mass_[k](s);
    for (size_t i = 0; i < n_; ++i) r[i] = force_[i](s);
    double norm = detail::infinity_norm(w, n_);
    std::vector<double> lu = w;
    if (!detail::solve_linear(lu, r, n_)) throw SingularHessianError(s[0]);
    // ||W^-1|| from the columns of the inverse.
    double inv_norm = 0;
    std::vector<double> row_sums(n_, 0.0);
    for (size_t c = 0; c < n_; ++c) {
      std::vector<double> a = w, e(n_, 0.0);
      e[c] = 1;
      detail::solve_linear(a, e, n_);
      for (size_t k = 0; k < n_; ++k) row_sums[k] += std::abs(e[k]);
    }
    for (double x : row_sums) inv_norm = std::max(inv_norm, x);
    for (size_t i = 0; i < n_; ++i) out[i] = r[i];
    return norm * inv_norm;
  }

 private:
  LagrangianSpec spec_;
  MechanicsEquations equations_;
  size_t n_;
  SlotMap slots_;
  CompiledExpr lagrangian_;
  CompiledExpr dl_dz_;
  std::vector<CompiledExpr> dl_dq_, dl_dv_, force_, mass_;
};

namespace detail {

inline size_t step_count(double t0, double t1, double dt) {
  if (!(dt > 0)) throw std::invalid_argument("time step must be positive");
  if (!(t1 > t0)) throw std::invalid_argument("time span must be increasing");
  double n = std::round((t1 - t0) / dt);
  return static_cast<size_t>(std::max(1.0, n));
}

inline void check_finite(double t, const std::vector<double>& values, const char* what) {
  for (double x : values) {
    if (!std::isfinite(x)) throw NonFiniteStateError(t, what);
  }
}

// Cubic Hermite midpoint of a sampled curve with known derivatives.
inline double hermite_mid(double y0, double y1, double d0, double d1, double dt) {
  return 0.5 * (y0 + y1) + dt / 8 * (d0 - d1);
}
inline double hermite_mid_slope(double y0, double y1, double d0, double d1, double dt) {
  return 1.5 / dt * (y1 - y0) - 0.25 * (d0 + d1);
}

}  // namespace detail

// Classic RK4 on (q, v, z) over [t0, t1]. The step is adjusted to divide the span exactly.
inline Trajectory integrate(const MechanicsSystem& sys, const std::vector<double>& q0,
                            const std::vector<double>& v0, double z0, double t0, double t1, double dt) {
  const size_t n = sys.dof();
  if (q0.size() != n || v0.size() != n) throw std::invalid_argument("initial data size does not match the fields");
  const size_t steps = detail::step_count(t0, t1, dt);
  const double h = (t1 - t0) / static_cast<double>(steps);

  Trajectory tr;
  tr.coords = sys.spec().fields;
  tr.t0 = t0;
  tr.dt = h;
  tr.t.reserve(steps + 1);
  tr.q.reserve(steps + 1);
  tr.v.reserve(steps + 1);
  tr.z.reserve(steps + 1);

  // State y = (q, v, z); derivative f = (v, a, L).
  const size_t dim = 2 * n + 1;
  std::vector<double> y(dim);
  for (size_t i = 0; i < n; ++i) {
    y[i] = q0[i];
    y[n + i] = v0[i];
  }
  y[2 * n] = z0;

  auto rhs = [&](double t, const std::vector<double>& s, std::vector<double>& f) {
    auto packed = sys.pack(t, s.data(), s.data() + n, s[2 * n]);
    std::vector<double> a(n);
    double cond = sys.acceleration(packed, a.data());
    tr.max_condition = std::max(tr.max_condition, cond);
    for (size_t i = 0; i < n; ++i) {
      f[i] = s[n + i];
      f[n + i] = a[i];
    }
    f[2 * n] = sys.lagrangian(packed);
  };

  auto record = [&](double t) {
    tr.t.push_back(t);
    tr.q.emplace_back(y.begin(), y.begin() + static_cast<long>(n));
    tr.v.emplace_back(y.begin() + static_cast<long>(n), y.begin() + static_cast<long>(2 * n));
    tr.z.push_back(y[2 * n]);
  };

  record(t0);
  std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
  for (size_t k = 0; k < steps; ++k) {
    double t = t0 + static_cast<double>(k) * h;
    rhs(t, y, k1);
    for (size_t j = 0; j < dim; ++j) tmp[j] = y[j] + 0.5 * h * k1[j];
    rhs(t + 0.5 * h, tmp, k2);
    for (size_t j = 0; j < dim; ++j) tmp[j] = y[j] + 0.5 * h * k2[j];
    rhs(t + 0.5 * h, tmp, k3);
    for (size_t j = 0; j < dim; ++j) tmp[j] = y[j] + h * k3[j];
    rhs(t + h, tmp, k4);
    for (size_t j = 0; j < dim; ++j) y[j] += h / 6 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
    double tn = t0 + static_cast<double>(k + 1) * h;
    detail::check_finite(tn, y, "state");
    record(tn);
  }
  return tr;
}

inline double contact_action(const Trajectory& tr) {
  if (tr.z.empty()) throw std::invalid_argument("empty trajectory");
  return tr.z.back() - tr.z.front();
}

using PathFn = std::function<std::vector<double>(double)>;

// Integrates zdot = L(t, q(t), q'(t), z) along a prescribed path with RK4 and
// returns the trajectory it defines.
inline Trajectory integrate_action(const MechanicsSystem& sys, const PathFn& q, const PathFn& v, double z0,
                                   double t0, double t1, double dt) {
  const size_t steps = detail::step_count(t0, t1, dt);
  const double h = (t1 - t0) / static_cast<double>(steps);
  Trajectory tr;
  tr.coords = sys.spec().fields;
  tr.t0 = t0;
  tr.dt = h;
  double z = z0;
  auto L = [&](double t, const std::vector<double>& qq, const std::vector<double>& vv, double zz) {
    return sys.lagrangian(sys.pack(t, qq.data(), vv.data(), zz));
  };
  std::vector<double> qa = q(t0), va = v(t0);
  tr.t.push_back(t0);
  tr.q.push_back(qa);
  tr.v.push_back(va);
  tr.z.push_back(z);
  for (size_t k = 0; k < steps; ++k) {
    double t = t0 + static_cast<double>(k) * h;
    double tm = t + 0.5 * h;
    double tn = t0 + static_cast<double>(k + 1) * h;
    std::vector<double> qm = q(tm), vm = v(tm), qb = q(tn), vb = v(tn);
    double k1 = L(t, qa, va, z);
    double k2 = L(tm, qm, vm, z + 0.5 * h * k1);
    double k3 = L(tm, qm, vm, z + 0.5 * h * k2);
    double k4 = L(tn, qb, vb, z + h * k3);
    z += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    if (!std::isfinite(z)) throw NonFiniteStateError(tn, "action");
    tr.t.push_back(tn);
    tr.q.push_back(qb);
    tr.v.push_back(vb);
    tr.z.push_back(z);
    qa = std::move(qb);
    va = std::move(vb);
  }
  return tr;
}

namespace detail {

// Action of the sampled path plus h * delta, re-integrating zdot = L with RK4.
// Midpoint path values come from cubic Hermite interpolation of the samples.
inline double perturbed_action(const MechanicsSystem& sys, const Trajectory& tr, size_t coord, int mode,
                               double h) {
  const size_t n = sys.dof();
  const double T = tr.t.back() - tr.t0;
  const double w = mode * std::numbers::pi / T;
  auto bump = [&](double t) { return std::sin(w * (t - tr.t0)); };
  auto bump_rate = [&](double t) { return w * std::cos(w * (t - tr.t0)); };

  auto eval = [&](double t, std::vector<double> q, std::vector<double> v, double z) {
    q[coord] += h * bump(t);
    v[coord] += h * bump_rate(t);
    return sys.lagrangian(sys.pack(t, q.data(), v.data(), z));
  };

  double z = tr.z.front();
  std::vector<double> qm(n), vm(n);
  for (size_t k = 0; k + 1 < tr.t.size(); ++k) {
    double t = tr.t[k];
    double dt = tr.t[k + 1] - t;
    double tm = t + 0.5 * dt;
    for (size_t i = 0; i < n; ++i) {
      double q0 = tr.q[k][i], q1 = tr.q[k + 1][i], v0 = tr.v[k][i], v1 = tr.v[k + 1][i];
      qm[i] = hermite_mid(q0, q1, v0, v1, dt);
      vm[i] = hermite_mid_slope(q0, q1, v0, v1, dt);
    }
    double k1 = eval(t, tr.q[k], tr.v[k], z);
    double k2 = eval(tm, qm, vm, z + 0.5 * dt * k1);
    double k3 = eval(tm, qm, vm, z + 0.5 * dt * k2);
    double k4 = eval(tr.t[k + 1], tr.q[k + 1], tr.v[k + 1], z + dt * k3);
    z += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    if (!std::isfinite(z)) throw NonFiniteStateError(tr.t[k + 1], "action");
  }
  return z - tr.z.front();
}

}  // namespace detail

struct GradientCheck {
  double max_gradient = 0;
  // Central-difference directional derivative per (mode, coordinate), mode-major.
  std::vector<double> gradients;
};

// Directional derivatives of the contact action along endpoint-fixed sine
// bumps sin(k*pi*(t - t0)/T), k = 1..n_modes, applied to one coordinate at a time.
inline GradientCheck action_gradient_check(const MechanicsSystem& sys, const Trajectory& tr, int n_modes,
                                           double h) {
  if (n_modes < 1) throw std::invalid_argument("n_modes must be at least 1");
  if (!(h > 0)) throw std::invalid_argument("h must be positive");
  if (tr.t.size() < 2) throw std::invalid_argument("trajectory needs at least two samples");
  const size_t n = sys.dof();
  GradientCheck out;
  out.gradients.assign(static_cast<size_t>(n_modes) * n, 0.0);
  parallel_for(out.gradients.size(), [&](size_t idx) {
    int mode = static_cast<int>(idx / n) + 1;
    size_t coord = idx % n;
    double plus = detail::perturbed_action(sys, tr, coord, mode, h);
    double minus = detail::perturbed_action(sys, tr, coord, mode, -h);
    out.gradients[idx] = (plus - minus) / (2 * h);
  }, 1);
  for (double g : out.gradients) out.max_gradient = std::max(out.max_gradient, std::abs(g));
  return out;
}

// lambda(t) from d(lambda)/dt = -lambda * dL/dz, lambda(t_N) = 1, integrated
// backward with RK4. Midpoint states come from Hermite interpolation using
// the equations of motion and zdot = L for the node slopes.
inline std::vector<double> multiplier_profile(const MechanicsSystem& sys, const Trajectory& tr) {
  const size_t n = sys.dof();
  const size_t N = tr.t.size();
  if (N == 0) throw std::invalid_argument("empty trajectory");
  std::vector<double> theta(N), zrate(N);
  std::vector<std::vector<double>> acc(N, std::vector<double>(n));
  for (size_t k = 0; k < N; ++k) {
    auto s = sys.pack(tr.t[k], tr.q[k].data(), tr.v[k].data(), tr.z[k]);
    theta[k] = sys.dl_dz(s);
    zrate[k] = sys.lagrangian(s);
    sys.acceleration(s, acc[k].data());
  }
  std::vector<double> lambda(N);
  lambda[N - 1] = 1;
  std::vector<double> qm(n), vm(n);
  for (size_t k = N - 1; k > 0; --k) {
    double dt = tr.t[k] - tr.t[k - 1];
    for (size_t i = 0; i < n; ++i) {
      qm[i] = detail::hermite_mid(tr.q[k - 1][i], tr.q[k][i], tr.v[k - 1][i], tr.v[k][i], dt);
      vm[i] = detail::hermite_mid(tr.v[k - 1][i], tr.v[k][i], acc[k - 1][i], acc[k][i], dt);
    }
    double zm = detail::hermite_mid(tr.z[k - 1], tr.z[k], zrate[k - 1], zrate[k], dt);
    double theta_mid = sys.dl_dz(sys.pack(tr.t[k - 1] + 0.5 * dt, qm.data(), vm.data(), zm));
    // Backward in time: s = t_N - t, d(lambda)/ds = lambda * theta.
    double l = lambda[k];
    double k1 = l * theta[k];
    double k2 = (l + 0.5 * dt * k1) * theta_mid;
    double k3 = (l + 0.5 * dt * k2) * theta_mid;
    double k4 = (l + dt * k3) * theta[k - 1];
    lambda[k - 1] = l + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    if (!std::isfinite(lambda[k - 1])) throw NonFiniteStateError(tr.t[k - 1], "multiplier");
  }
  return lambda;
}

// max_k,i | d/dt(lambda * dL/dq_t^i) - lambda * dL/dq^i | with second-order
// finite differences in t.
inline double multiplier_duality_residual(const MechanicsSystem& sys, const Trajectory& tr,
                                          const std::vector<double>& lambda) {
  const size_t n = sys.dof();
  const size_t N = tr.t.size();
  if (N < 3) throw std::invalid_argument("trajectory needs at least three samples");
  std::vector<std::vector<double>> p(N, std::vector<double>(n)), f(N, std::vector<double>(n));
  for (size_t k = 0; k < N; ++k) {
    auto s = sys.pack(tr.t[k], tr.q[k].data(), tr.v[k].data(), tr.z[k]);
    for (size_t i = 0; i < n; ++i) {
      p[k][i] = lambda[k] * sys.dl_dv(s, i);
      f[k][i] = lambda[k] * sys.dl_dq(s, i);
    }
  }
  double worst = 0;
  for (size_t k = 0; k < N; ++k) {
    for (size_t i = 0; i < n; ++i) {
      double d;
      if (k == 0) {
        d = (-3 * p[0][i] + 4 * p[1][i] - p[2][i]) / (2 * tr.dt);
      } else if (k == N - 1) {
        d = (3 * p[k][i] - 4 * p[k - 1][i] + p[k - 2][i]) / (2 * tr.dt);
      } else {
        d = (p[k + 1][i] - p[k - 1][i]) / (2 * tr.dt);
      }
      worst = std::max(worst, std::abs(d - f[k][i]));
    }
  }
  return worst;
}

}  // namespace herglotz
