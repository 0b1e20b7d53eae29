#pragma once

// Output formats: trajectory / field / series CSV, the binary field dump and
// the JSON residual report. Doubles are written in shortest round-trip form.
//
// Binary field dump (all little-endian):
//   char[8]  "HGLZFLD1"
//   u32      version (1)
//   u32      flags: bit 0 periodic x, bit 1 analytic section, bit 2 period shifts present
//   u64      nt, nx
//   f64      t0, t1, x0, x1, dt, dx
//   f64[nt*nx] u, then z^t, then z^x (row-major, t slowest)
//   f64[nt]  period shifts (only with flag bit 2)

#include "herglotz/fields.hpp"
#include "herglotz/mechanics.hpp"
#include "herglotz/printer.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace herglotz {

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline void write_trajectory_csv(std::ostream& os, const LagrangianSpec& spec, const Trajectory& tr,
                                 const std::vector<double>* multiplier = nullptr) {
  const std::string& t = spec.coords.at(0);
  os << t;
  for (const auto& q : tr.coords) os << ',' << q;
  for (const auto& q : tr.coords) os << ',' << q << '_' << t;
  os << ",z" << (multiplier ? ",lambda" : "") << '\n';
  for (size_t k = 0; k < tr.t.size(); ++k) {
    os << format_number(tr.t[k]);
    for (double q : tr.q[k]) os << ',' << format_number(q);
    for (double v : tr.v[k]) os << ',' << format_number(v);
    os << ',' << format_number(tr.z[k]);
    if (multiplier) os << ',' << format_number((*multiplier)[k]);
    os << '\n';
  }
}

// Long format: one row per grid point.
inline void write_field_csv(std::ostream& os, const FieldSolution& sol, const std::string& field = "u") {
  const Grid2D& g = sol.grid;
  os << g.t_name << ',' << g.x_name << ',' << field << ",z^" << g.t_name << ",z^" << g.x_name << '\n';
  for (size_t k = 0; k < g.nt; ++k) {
    std::string t = format_number(g.t(k));
    for (size_t j = 0; j < g.nx; ++j) {
      size_t i = g.index(k, j);
      os << t << ',' << format_number(g.x(j)) << ',' << format_number(sol.u[i]) << ',' << format_number(sol.zt[i])
         << ',' << format_number(sol.zx[i]) << '\n';
    }
  }
}

// One row per stored time level; columns named by `names` after the time column.
inline void write_series_csv(std::ostream& os, const Grid2D& g, const std::vector<std::string>& names,
                             const std::vector<const std::vector<double>*>& columns) {
  os << g.t_name;
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (size_t k = 0; k < g.nt; ++k) {
    os << format_number(g.t(k));
    for (const auto* c : columns) os << ',' << format_number((*c)[k]);
    os << '\n';
  }
}

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
  using U = std::conditional_t<sizeof(T) == 8, uint64_t, uint32_t>;
  U bits = std::bit_cast<U>(v);
  char b[sizeof(U)];
  for (size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(b, sizeof(U));
}

template <class T>
T get_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 8, uint64_t, uint32_t>;
  unsigned char b[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(U))) throw FormatError("truncated field dump");
  U bits = 0;
  for (size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(b[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

constexpr char kFieldMagic[8] = {'H', 'G', 'L', 'Z', 'F', 'L', 'D', '1'};

}  // namespace detail

inline void write_field_binary(std::ostream& os, const FieldSolution& sol) {
  const Grid2D& g = sol.grid;
  os.write(detail::kFieldMagic, 8);
  bool shifts = !sol.u_period_shift.empty();
  uint32_t flags = (g.periodic() ? 1u : 0u) | (sol.provenance == Provenance::AnalyticSection ? 2u : 0u) |
                   (shifts ? 4u : 0u);
  detail::put_le<uint32_t>(os, 1);
  detail::put_le<uint32_t>(os, flags);
  detail::put_le<uint64_t>(os, g.nt);
  detail::put_le<uint64_t>(os, g.nx);
  for (double v : {g.t0, g.t1, g.x0, g.x1, g.dt(), g.dx()}) detail::put_le<double>(os, v);
  for (const auto* a : {&sol.u, &sol.zt, &sol.zx}) {
    for (double v : *a) detail::put_le<double>(os, v);
  }
  if (shifts) {
    for (double v : sol.u_period_shift) detail::put_le<double>(os, v);
  }
}

// Coordinate names are not stored; pass the problem's.
inline FieldSolution read_field_binary(std::istream& is, const std::string& t_name = "t",
                                       const std::string& x_name = "x") {
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, detail::kFieldMagic)) {
    throw FormatError("not a field dump (bad magic)");
  }
  if (detail::get_le<uint32_t>(is) != 1) throw FormatError("unsupported field dump version");
  uint32_t flags = detail::get_le<uint32_t>(is);
  FieldSolution sol;
  Grid2D& g = sol.grid;
  g.t_name = t_name;
  g.x_name = x_name;
  g.nt = detail::get_le<uint64_t>(is);
  g.nx = detail::get_le<uint64_t>(is);
  if (g.nt > (1u << 24) || g.nx > (1u << 24) || g.nt * g.nx > (1ull << 28)) throw FormatError("field dump too large");
  g.t0 = detail::get_le<double>(is);
  g.t1 = detail::get_le<double>(is);
  g.x0 = detail::get_le<double>(is);
  g.x1 = detail::get_le<double>(is);
  detail::get_le<double>(is);
  detail::get_le<double>(is);
  g.x_boundary = (flags & 1u) ? Boundary::Periodic : Boundary::Fixed;
  sol.provenance = (flags & 2u) ? Provenance::AnalyticSection : Provenance::Solved;
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid grid in field dump: ") + e.what());
  }
  for (auto* a : {&sol.u, &sol.zt, &sol.zx}) {
    a->resize(g.size());
    for (double& v : *a) v = detail::get_le<double>(is);
  }
  if (flags & 4u) {
    sol.u_period_shift.resize(g.nt);
    for (double& v : sol.u_period_shift) v = detail::get_le<double>(is);
  }
  return sol;
}

namespace detail {

inline nlohmann::ordered_json norms_json(const Norms& n) {
  nlohmann::ordered_json j;
  j["max"] = n.max;
  j["l2"] = n.l2;
  return j;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const ResidualReport& r, const Grid2D& g) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["provenance"] = to_string(r.provenance);
  ordered_json grid;
  grid["nt"] = g.nt;
  grid["nx"] = g.nx;
  grid[g.t_name] = {g.t0, g.t1};
  grid[g.x_name] = {g.x0, g.x1};
  grid["boundary"] = g.periodic() ? "periodic" : "fixed";
  j["grid"] = grid;
  j["stencil_order"] = r.stencil_order;
  j["interior_only"] = r.interior_only;
  j["margin"] = {{g.t_name, r.margin_t}, {g.x_name, r.margin_x}};
  ordered_json fe = ordered_json::array();
  for (size_t i = 0; i < r.fields.size(); ++i) {
    ordered_json e = detail::norms_json(r.field_equations[i]);
    e["field"] = r.fields[i];
    fe.push_back(e);
  }
  j["field_equations"] = fe;
  j["constraint"] = detail::norms_json(r.constraint);
  ordered_json cl = detail::norms_json(r.closedness);
  cl["component"] = r.closedness_label;
  j["closedness"] = cl;
  if (r.symbolic) {
    ordered_json s;
    ordered_json sf = ordered_json::array();
    for (size_t i = 0; i < r.symbolic->fields.size(); ++i) {
      ordered_json e;
      e["field"] = r.fields[i];
      e["expression"] = print_expression(r.symbolic->fields[i]);
      e["max"] = r.symbolic->field_norms[i].max;
      sf.push_back(e);
    }
    s["field_equations"] = sf;
    s["constraint"] = {{"expression", print_expression(r.symbolic->constraint)},
                       {"max", r.symbolic->constraint_norms.max}};
    s["closedness"] = {{"expression", print_expression(r.symbolic->closedness)},
                       {"max", r.symbolic->closedness_norms.max}};
    j["symbolic"] = s;
  }
  return j;
}

}  // namespace herglotz
