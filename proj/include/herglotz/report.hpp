#pragma once

// Human-readable summaries printed by the command-line tool.

#include "herglotz/fields.hpp"
#include "herglotz/io.hpp"
#include "herglotz/jet.hpp"

#include <sstream>
#include <string>
#include <vector>

namespace herglotz {

inline std::string closedness_line(const LagrangianSpec& spec, const EquationSet& eq) {
  if (eq.closed()) return "closed action dependence: YES";
  std::string out = "closed action dependence: NO";
  for (size_t mu = 0; mu < eq.closedness.size(); ++mu) {
    for (size_t nu = mu + 1; nu < eq.closedness.size(); ++nu) {
      if (is_zero(eq.closedness[mu][nu])) continue;
      out += ", C_" + spec.coords[mu] + spec.coords[nu] + " = " + print_expression(eq.closedness[mu][nu]);
    }
  }
  return out;
}

inline std::string derivation_text(const LagrangianSpec& spec, const EquationSet& eq) {
  std::ostringstream os;
  os << "derivation: " << to_string(eq.kind) << '\n';
  os << "lagrangian: " << print_expression(simplify(spec.lagrangian)) << '\n';
  for (size_t a = 0; a < eq.residuals.size(); ++a) {
    os << eq.fields[a] << ": " << print_expression(eq.residuals[a]) << " = 0\n";
  }
  os << "constraint: " << print_expression(eq.constraint) << " = 0\n";
  for (size_t mu = 0; mu < eq.dissipation.size(); ++mu) {
    os << "theta_" << spec.coords[mu] << " = " << print_expression(eq.dissipation[mu]) << '\n';
  }
  os << closedness_line(spec, eq) << '\n';
  return os.str();
}

inline std::string verdict_table(const std::vector<Verdict>& verdicts) {
  std::ostringstream os;
  size_t width = 8;
  for (const auto& v : verdicts) width = std::max(width, v.quantity.size());
  auto pad = [&](const std::string& s) { return s + std::string(width + 2 - s.size(), ' '); };
  os << pad("quantity") << "max residual            verdict\n";
  for (const auto& v : verdicts) {
    std::string value = format_number(v.value);
    os << pad(v.quantity) << value << std::string(value.size() < 24 ? 24 - value.size() : 1, ' ')
       << (v.pass ? "PASS" : "FAIL");
    if (v.exact) {
      os << " (exact: " << (v.expression.empty() ? "0" : v.expression) << ")";
    } else {
      os << " (tol " << format_number(v.tolerance) << ")";
    }
    os << '\n';
  }
  return os.str();
}

inline nlohmann::ordered_json to_json(const std::vector<Verdict>& verdicts) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& v : verdicts) {
    nlohmann::ordered_json j;
    j["quantity"] = v.quantity;
    j["verdict"] = v.pass ? "PASS" : "FAIL";
    j["exact"] = v.exact;
    j["max"] = v.value;
    if (v.exact) {
      j["expression"] = v.expression;
    } else {
      j["tolerance"] = v.tolerance;
    }
    arr.push_back(j);
  }
  return arr;
}

}  // namespace herglotz
