#pragma once

// Problem files bundled into `herglotz demo`; identical to problems/*.txt.

namespace herglotz::demo {

inline constexpr const char* kDampedString = R"(# Vibrating string with linear damping: u_tt = (tau/rho) u_xx - gamma u_t
coords: t, x
fields: u
order: 1
constants: rho = 1, tau = 1, gamma = 0.2
lagrangian: (1/2)*rho*u_t^2 - (1/2)*tau*u_x^2 - gamma*z^t
solver:
  scheme: string
  t: 0, 2
  x: 0, 1
  nx: 200
  u0: sin(pi*x)
  ut0: -(gamma/2)*sin(pi*x)
)";

inline constexpr const char* kCounterexample = R"(# Action coupled through z^x without closed action dependence.
# The section below solves the field equations and the constraint,
# but not the closedness condition.
coords: t, x
fields: u
order: 1
constants: gamma_x = 0.5
lagrangian: (1/2)*(u_t^2 + u_x^2) - u*gamma_x*z^x
solver:
  nt: 17
  nx: 17
section:
  u: t
  z^t: t/2
  z^x: 0
)";

inline constexpr const char* kKdv = R"(# KdV Lagrangian with linear action coupling; soliton run with gamma = 0
coords: t, x
fields: u
order: 2
constants: gamma_t = 0, gamma_x = 0
lagrangian: (1/2)*u_x*u_t + u_x^3 - (1/2)*u_xx^2 - gamma_t*z^t - gamma_x*z^x
solver:
  scheme: kdv
  t: 0, 1
  x: -20, 20
  nx: 512
  nt: 101
  ux0: 8*inv(exp(x) + exp(-x))^2
)";

inline constexpr struct {
  const char* file;
  const char* text;
} kProblems[] = {
    {"damped_string.txt", kDampedString},
    {"counterexample.txt", kCounterexample},
    {"kdv.txt", kKdv},
};

}  // namespace herglotz::demo
