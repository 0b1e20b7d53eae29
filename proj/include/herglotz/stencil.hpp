#pragma once

// Finite-difference weights on uniform grids (Fornberg's recursion) and
// per-row stencil tables, centered in the interior and shifted one-sided
// near non-periodic edges.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace herglotz {

class StencilOverflowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Weights w[i] such that f^(d)(x0) ~ sum_i w[i] f(nodes[i]).
inline std::vector<double> fornberg_weights(double x0, const std::vector<double>& nodes, int d) {
  const size_t n = nodes.size();
  std::vector<std::vector<double>> c(n, std::vector<double>(static_cast<size_t>(d) + 1, 0.0));
  double c1 = 1;
  double c4 = nodes[0] - x0;
  c[0][0] = 1;
  for (size_t i = 1; i < n; ++i) {
    int mn = std::min(static_cast<int>(i), d);
    double c2 = 1;
    double c5 = c4;
    c4 = nodes[i] - x0;
    for (size_t j = 0; j < i; ++j) {
      double c3 = nodes[i] - nodes[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) {
          c[i][static_cast<size_t>(k)] =
              c1 * (k * c[i - 1][static_cast<size_t>(k - 1)] - c5 * c[i - 1][static_cast<size_t>(k)]) / c2;
        }
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) {
        c[j][static_cast<size_t>(k)] =
            (c4 * c[j][static_cast<size_t>(k)] - k * c[j][static_cast<size_t>(k - 1)]) / c3;
      }
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n);
  for (size_t i = 0; i < n; ++i) w[i] = c[i][static_cast<size_t>(d)];
  return w;
}

// Half-width of the centered stencil for derivative order d at accuracy p.
inline int stencil_half_width(int d, int p) { return d == 0 ? 0 : (d + p - 1) / 2; }

// One-dimensional stencil: for each grid index, the first node index and the
// weights. Periodic tables use offsets relative to the point (may leave [0, n)).
struct StencilTable {
  int derivative = 0;
  int half_width = 0;
  bool periodic = false;
  std::vector<long> start;
  std::vector<std::vector<double>> weights;

  static StencilTable build(size_t n, double h, int d, int p, bool periodic, const std::string& axis) {
    StencilTable s;
    s.derivative = d;
    s.periodic = periodic;
    s.half_width = stencil_half_width(d, p);
    const long width = 2L * s.half_width + 1;
    if (width > static_cast<long>(n)) {
      throw StencilOverflowError("a " + std::to_string(width) + "-point stencil for a derivative of order " +
                                 std::to_string(d) + " does not fit " + std::to_string(n) + " points along " + axis);
    }
    s.start.resize(n);
    s.weights.resize(n);
    if (periodic) {
      std::vector<double> nodes;
      for (long o = -s.half_width; o <= s.half_width; ++o) nodes.push_back(static_cast<double>(o) * h);
      auto w = fornberg_weights(0.0, nodes, d);
      for (size_t i = 0; i < n; ++i) {
        s.start[i] = static_cast<long>(i) - s.half_width;
        s.weights[i] = w;
      }
      return s;
    }
    // Rows with identical relative windows share weights; compute once per offset.
    std::vector<std::vector<double>> cache(static_cast<size_t>(width));
    std::vector<bool> have(static_cast<size_t>(width), false);
    for (size_t i = 0; i < n; ++i) {
      long st = std::clamp(static_cast<long>(i) - s.half_width, 0L, static_cast<long>(n) - width);
      long rel = static_cast<long>(i) - st;
      if (!have[static_cast<size_t>(rel)]) {
        std::vector<double> nodes;
        for (long o = 0; o < width; ++o) nodes.push_back(static_cast<double>(o - rel) * h);
        cache[static_cast<size_t>(rel)] = fornberg_weights(0.0, nodes, d);
        have[static_cast<size_t>(rel)] = true;
      }
      s.start[i] = st;
      s.weights[i] = cache[static_cast<size_t>(rel)];
    }
    return s;
  }
};

}  // namespace herglotz
