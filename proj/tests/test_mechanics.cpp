#include "herglotz/dsl.hpp"
#include "herglotz/mechanics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace herglotz;

namespace {

LagrangianSpec oscillator(double gamma) {
  return parse_problem("coords: t\nfields: q\nconstants: gamma = " + Number::format_double(gamma) +
                       "\nlagrangian: (1/2)*q_t^2 - (1/2)*q^2 - gamma*z\n")
      .spec;
}

// q'' + gamma q' + q = 0, q(0) = 1, q'(0) = 0.
double damped_oscillator(double gamma, double t) {
  double w = std::sqrt(1 - gamma * gamma / 4);
  return std::exp(-gamma * t / 2) * (std::cos(w * t) + gamma / (2 * w) * std::sin(w * t));
}

double max_oscillator_error(double gamma, double dt) {
  MechanicsSystem sys(oscillator(gamma));
  Trajectory tr = integrate(sys, {1.0}, {0.0}, 0.0, 0.0, 10.0, dt);
  double err = 0;
  for (size_t k = 0; k < tr.t.size(); ++k) err = std::max(err, std::abs(tr.q[k][0] - damped_oscillator(gamma, tr.t[k])));
  return err;
}

}  // namespace

TEST(LinearSolve, PivotsAndDetectsSingular) {
  std::vector<double> a{0, 2, 1, 1}, b{4, 3};
  ASSERT_TRUE(detail::solve_linear(a, b, 2));
  EXPECT_DOUBLE_EQ(b[0], 1);
  EXPECT_DOUBLE_EQ(b[1], 2);
  std::vector<double> s{1, 2, 2, 4}, c{1, 1};
  EXPECT_FALSE(detail::solve_linear(s, c, 2));
}

TEST(Integrate, DampedOscillatorOracle) {
  EXPECT_LE(max_oscillator_error(0.1, 1e-3), 1e-6);
}

TEST(Integrate, FourthOrderConvergence) {
  double e1 = max_oscillator_error(0.1, 4e-3);
  double e2 = max_oscillator_error(0.1, 2e-3);
  double e3 = max_oscillator_error(0.1, 1e-3);
  EXPECT_GE(e1 / e2, 12.0);
  EXPECT_LE(e1 / e2, 20.0);
  EXPECT_GE(e2 / e3, 12.0);
  EXPECT_LE(e2 / e3, 20.0);
}

TEST(Integrate, ConservativeEnergy) {
  MechanicsSystem sys(oscillator(0.0));
  Trajectory tr = integrate(sys, {1.0}, {0.0}, 0.0, 0.0, 10.0, 1e-3);
  double e0 = 0.5;
  for (size_t k = 0; k < tr.t.size(); ++k) {
    double e = 0.5 * tr.v[k][0] * tr.v[k][0] + 0.5 * tr.q[k][0] * tr.q[k][0];
    ASSERT_NEAR(e, e0, 1e-8);
  }
}

TEST(Integrate, PureDamping) {
  double gamma = 0.1;
  LagrangianSpec s = parse_problem("coords: t\nfields: q\nconstants: gamma = 0.1\nlagrangian: (1/2)*q_t^2 - gamma*z\n").spec;
  MechanicsSystem sys(s);
  Trajectory tr = integrate(sys, {0.0}, {1.0}, 0.0, 0.0, 10.0, 1e-3);
  for (size_t k = 0; k < tr.t.size(); ++k) {
    double exact = std::exp(-gamma * tr.t[k]);
    ASSERT_LE(std::abs(tr.v[k][0] - exact) / exact, 1e-7);
  }
}

TEST(Integrate, TwoDecoupledCoordinates) {
  LagrangianSpec s = parse_problem(
      "coords: t\nfields: p, q\nconstants: gamma = 0.3\nlagrangian: (1/2)*p_t^2 + (1/2)*q_t^2 - gamma*z\n").spec;
  MechanicsSystem sys(s);
  Trajectory tr = integrate(sys, {0.0, 1.0}, {1.0, -2.0}, 0.0, 0.0, 2.0, 1e-3);
  EXPECT_NEAR(tr.v.back()[0], std::exp(-0.6), 1e-10);
  EXPECT_NEAR(tr.v.back()[1], -2 * std::exp(-0.6), 1e-10);
  EXPECT_NEAR(tr.max_condition, 1.0, 1e-12);
}

TEST(Integrate, ZConsistencySecondOrder) {
  MechanicsSystem sys(oscillator(0.1));
  auto defect = [&](double dt) {
    Trajectory tr = integrate(sys, {1.0}, {0.0}, 0.0, 0.0, 2.0, dt);
    double worst = 0;
    for (size_t k = 0; k + 1 < tr.t.size(); ++k) {
      std::vector<double> qm{0.5 * (tr.q[k][0] + tr.q[k + 1][0])}, vm{0.5 * (tr.v[k][0] + tr.v[k + 1][0])};
      double zm = 0.5 * (tr.z[k] + tr.z[k + 1]);
      double L = sys.lagrangian(sys.pack(tr.t[k] + 0.5 * dt, qm.data(), vm.data(), zm));
      worst = std::max(worst, std::abs((tr.z[k + 1] - tr.z[k]) / dt - L));
    }
    return worst;
  };
  double a = defect(4e-3), b = defect(2e-3);
  EXPECT_LE(b, 1e-5);
  EXPECT_NEAR(a / b, 4.0, 0.5);
}

TEST(Integrate, SingularHessian) {
  LagrangianSpec s = parse_problem("coords: t\nfields: q\nlagrangian: (1/2)*(q_t - t)^2*q_t\n").spec;
  MechanicsSystem sys(s);
  // W = 3 q_t - 2 t vanishes when q_t = 2t/3; start there.
  try {
    integrate(sys, {0.0}, {0.0}, 0.0, 0.0, 1.0, 0.1);
    FAIL() << "expected a singular Hessian";
  } catch (const SingularHessianError& e) {
    EXPECT_EQ(e.time(), 0.0);
  }
}

TEST(Integrate, NonFiniteState) {
  LagrangianSpec s = parse_problem("coords: t\nfields: q\nlagrangian: (1/2)*q_t^2 + q^4\n").spec;
  MechanicsSystem sys(s);
  EXPECT_THROW(integrate(sys, {10.0}, {0.0}, 0.0, 0.0, 50.0, 0.1), NonFiniteStateError);
}

TEST(ContactAction, KnownValues) {
  auto free = parse_problem("coords: t\nfields: q\nlagrangian: (1/2)*q_t^2\n").spec;
  MechanicsSystem fs(free);
  auto line = [](double t) { return std::vector<double>{t}; };
  auto one = [](double) { return std::vector<double>{1.0}; };
  EXPECT_NEAR(contact_action(integrate_action(fs, line, one, 0.0, 0.0, 1.0, 1e-2)), 0.5, 1e-14);
  auto still = [](double) { return std::vector<double>{0.3}; };
  auto zero = [](double) { return std::vector<double>{0.0}; };
  EXPECT_EQ(contact_action(integrate_action(fs, still, zero, 0.0, 0.0, 1.0, 1e-2)), 0.0);

  auto damped = parse_problem("coords: t\nfields: q\nconstants: gamma = 0.1\nlagrangian: (1/2)*q_t^2 - gamma*z\n").spec;
  MechanicsSystem ds(damped);
  double a = contact_action(integrate_action(ds, line, one, 0.0, 0.0, 1.0, 1e-3));
  EXPECT_NEAR(a, (1 - std::exp(-0.1)) / 0.2, 1e-12);
  EXPECT_NEAR(a, 0.475812, 1e-6);
}

TEST(GradientCheck, SolutionVersusPerturbedPath) {
  MechanicsSystem sys(oscillator(0.1));
  Trajectory tr = integrate(sys, {1.0}, {0.0}, 0.0, 0.0, 10.0, 1e-3);
  double sol = action_gradient_check(sys, tr, 5, 1e-4).max_gradient;
  EXPECT_LE(sol, 1e-5);

  const double T = 10.0;
  auto q = [&](double t) { return std::vector<double>{damped_oscillator(0.1, t) + 0.1 * std::sin(M_PI * t / T)}; };
  auto v = [&](double t) {
    double w = std::sqrt(1 - 0.0025);
    double qd = -std::exp(-0.05 * t) * (1 / w) * std::sin(w * t) * (w * w + 0.0025);
    return std::vector<double>{qd + 0.1 * M_PI / T * std::cos(M_PI * t / T)};
  };
  Trajectory bent = integrate_action(sys, q, v, 0.0, 0.0, T, 1e-3);
  double non = action_gradient_check(sys, bent, 5, 1e-4).max_gradient;
  EXPECT_GE(non, 1e-2);
  EXPECT_GE(non, 1e3 * sol);
}

TEST(GradientCheck, FreeParticleLine) {
  auto free = parse_problem("coords: t\nfields: q\nlagrangian: (1/2)*q_t^2\n").spec;
  MechanicsSystem sys(free);
  Trajectory tr = integrate(sys, {0.0}, {1.5}, 0.0, 0.0, 1.0, 1e-2);
  EXPECT_LE(action_gradient_check(sys, tr, 5, 1e-4).max_gradient, 1e-8);
}

TEST(GradientCheck, ThreadCountDoesNotChangeResults) {
  MechanicsSystem sys(oscillator(0.1));
  Trajectory tr = integrate(sys, {1.0}, {0.0}, 0.0, 0.0, 2.0, 1e-2);
  setenv("HERGLOTZ_THREADS", "1", 1);
  auto a = action_gradient_check(sys, tr, 4, 1e-4);
  setenv("HERGLOTZ_THREADS", "3", 1);
  auto b = action_gradient_check(sys, tr, 4, 1e-4);
  unsetenv("HERGLOTZ_THREADS");
  EXPECT_EQ(a.gradients, b.gradients);
}

TEST(Multiplier, ExponentialProfile) {
  MechanicsSystem sys(oscillator(0.1));
  Trajectory tr = integrate(sys, {1.0}, {0.0}, 0.0, 0.0, 1.0, 1e-3);
  auto lambda = multiplier_profile(sys, tr);
  for (size_t k = 0; k < tr.t.size(); ++k) ASSERT_NEAR(lambda[k], std::exp(-0.1 * (1.0 - tr.t[k])), 1e-8);
  EXPECT_NEAR(lambda.front(), std::exp(-0.1), 1e-12);
  EXPECT_LE(multiplier_duality_residual(sys, tr, lambda), 1e-5);
}

TEST(Multiplier, ActionIndependentIsOne) {
  auto free = parse_problem("coords: t\nfields: q\nlagrangian: (1/2)*q_t^2 - (1/2)*q^2\n").spec;
  MechanicsSystem sys(free);
  Trajectory tr = integrate(sys, {1.0}, {0.0}, 0.0, 0.0, 1.0, 1e-2);
  for (double l : multiplier_profile(sys, tr)) ASSERT_EQ(l, 1.0);
}

// lambda(t) = exp(-int_t^tN dL/dz) > 0; compared with quadrature of dL/dz along the trajectory.
TEST(Multiplier, PositiveOnRandomSpecs) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    double a = coef(rng), b = coef(rng), c = coef(rng);
    std::string text = "coords: t\nfields: q\nconstants: a = " + Number::format_double(a) +
                       ", b = " + Number::format_double(b) + ", c = " + Number::format_double(c) +
                       "\nlagrangian: (1/2)*q_t^2 - (1/2)*q^2 - a*z - b*q*z - c*z^2/4\n";
    MechanicsSystem sys(parse_problem(text).spec);
    Trajectory tr = integrate(sys, {0.5}, {0.0}, 0.0, 0.0, 1.0, 1e-3);
    auto lambda = multiplier_profile(sys, tr);
    double integral = 0;
    for (size_t k = tr.t.size() - 1; k > 0; --k) {
      auto s0 = sys.pack(tr.t[k - 1], tr.q[k - 1].data(), tr.v[k - 1].data(), tr.z[k - 1]);
      auto s1 = sys.pack(tr.t[k], tr.q[k].data(), tr.v[k].data(), tr.z[k]);
      integral += 0.5 * tr.dt * (sys.dl_dz(s0) + sys.dl_dz(s1));
      ASSERT_GT(lambda[k - 1], 0.0);
      ASSERT_NEAR(lambda[k - 1], std::exp(integral), 1e-6);
    }
    EXPECT_LE(multiplier_duality_residual(sys, tr, lambda), 1e-5);
  }
}
