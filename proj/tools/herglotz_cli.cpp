// herglotz: derive | solve | verify | demo
//
// Exit codes: 0 success, 1 other failure, 2 problem-file or usage error,
// 3 higher-order derivation without closed action dependence,
// 4 numerical stability violation.

#include "demo_problems.hpp"

#include "herglotz/herglotz.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>
#include <unistd.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace herglotz;
using nlohmann::ordered_json;

namespace {

struct Options {
  std::string file;
  std::string out;
  std::string solution;
  std::optional<double> dt;
  std::optional<size_t> nt;
  std::optional<size_t> nx;
  std::optional<double> tol;
  std::string format = "csv";
  std::string order = "auto";
  uint64_t seed = 1;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

// Writes through a temporary file in the same directory, then renames.
void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path.parent_path() / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

// Collects output files; commit() writes them and the run manifest.
class Artifacts {
 public:
  Artifacts(std::string subcommand, const Options& opts)
      : subcommand_(std::move(subcommand)), opts_(opts), start_(std::chrono::steady_clock::now()) {}

  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }
  void resolved(const std::string& key, ordered_json value) { resolved_[key] = std::move(value); }

  void input(const std::string& path, const std::string& content) {
    input_ = {{"path", path}, {"sha256", sha256_hex(content)}};
  }

  void commit() {
    if (opts_.out.empty()) return;
    fs::path dir(opts_.out);
    fs::create_directories(dir);
    ordered_json outputs = ordered_json::array();
    for (const auto& [name, content] : files_) {
      write_atomic(dir / name, content);
      outputs.push_back({{"file", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
    }
    ordered_json m;
    m["tool"] = "herglotz";
    m["version"] = HERGLOTZ_VERSION;
    m["subcommand"] = subcommand_;
    m["input"] = input_.is_null() ? ordered_json(nullptr) : input_;
    ordered_json o;
    o["format"] = opts_.format;
    o["order"] = opts_.order;
    o["seed"] = opts_.seed;
    o["dt"] = opts_.dt ? ordered_json(*opts_.dt) : ordered_json(nullptr);
    o["nt"] = opts_.nt ? ordered_json(*opts_.nt) : ordered_json(nullptr);
    o["nx"] = opts_.nx ? ordered_json(*opts_.nx) : ordered_json(nullptr);
    o["tol"] = opts_.tol ? ordered_json(*opts_.tol) : ordered_json(nullptr);
    o["solution"] = opts_.solution.empty() ? ordered_json(nullptr) : ordered_json(opts_.solution);
    o["resolved"] = resolved_;
    m["options"] = o;
    m["outputs"] = outputs;
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    m["wall_clock_seconds"] = wall;
    std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    m["timestamp"] = stamp;
    write_atomic(dir / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string subcommand_;
  const Options& opts_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::pair<std::string, std::string>> files_;
  ordered_json resolved_ = ordered_json::object();
  ordered_json input_;
};

RunOverrides overrides(const Options& o) { return {o.dt, o.nt, o.nx}; }

DerivationMode derivation_mode(const std::string& order) {
  if (order == "auto") return DerivationMode::Auto;
  if (order == "1") return DerivationMode::FirstOrder;
  return DerivationMode::HigherOrder;
}

EquationSet derive(const ProblemFile& pf, const std::string& order) {
  DerivationMode mode = derivation_mode(order);
  if (mode == DerivationMode::FirstOrder && pf.spec.order != 1) {
    throw UsageError("--order 1 needs a first-order Lagrangian (file declares order " +
                     std::to_string(pf.spec.order) + ")");
  }
  return derive_equations(pf.spec, mode);
}

std::string field_output(const FieldSolution& sol, const std::string& format, const std::string& field) {
  std::ostringstream os;
  if (format == "bin") {
    write_field_binary(os, sol);
  } else if (format == "json") {
    const Grid2D& g = sol.grid;
    ordered_json j;
    j["grid"] = {{"nt", g.nt},
                 {"nx", g.nx},
                 {g.t_name, {g.t0, g.t1}},
                 {g.x_name, {g.x0, g.x1}},
                 {"boundary", g.periodic() ? "periodic" : "fixed"}};
    j["provenance"] = to_string(sol.provenance);
    j[field] = sol.u;
    j["z^" + g.t_name] = sol.zt;
    j["z^" + g.x_name] = sol.zx;
    if (!sol.u_period_shift.empty()) j["period_shift"] = sol.u_period_shift;
    os << j.dump() << '\n';
  } else {
    write_field_csv(os, sol, field);
  }
  return os.str();
}

const char* extension(const std::string& format) {
  return format == "bin" ? "bin" : format == "json" ? "json" : "csv";
}

int cmd_derive(const Options& o) {
  std::string text = read_file(o.file);
  ProblemFile pf = parse_problem(text);
  EquationSet eq = derive(pf, o.order);
  ordered_json j = to_json(pf.spec, eq);
  if (o.format == "json") {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << derivation_text(pf.spec, eq);
  }
  Artifacts art("derive", o);
  art.input(o.file, text);
  art.add("equations.json", j.dump(2) + "\n");
  art.commit();
  return 0;
}

int solve_mechanics(const Options& o, const ProblemFile& pf, Artifacts& art) {
  if (o.format == "bin") throw UsageError("binary output is defined for field solutions only");
  MechanicsRun run = run_mechanics_problem(pf, overrides(o));
  const Trajectory& tr = run.trajectory;
  std::ostringstream os;
  if (o.format == "json") {
    ordered_json j;
    j[pf.spec.coords[0]] = tr.t;
    for (size_t i = 0; i < tr.dof(); ++i) {
      std::vector<double> q, v;
      for (size_t k = 0; k < tr.t.size(); ++k) {
        q.push_back(tr.q[k][i]);
        v.push_back(tr.v[k][i]);
      }
      j[tr.coords[i]] = q;
      j[tr.coords[i] + "_" + pf.spec.coords[0]] = v;
    }
    j["z"] = tr.z;
    j["lambda"] = run.multiplier;
    os << j.dump() << '\n';
  } else {
    write_trajectory_csv(os, pf.spec, tr, &run.multiplier);
  }
  std::string name = std::string("trajectory.") + extension(o.format);
  art.add(name, os.str());
  art.resolved("dt", tr.dt);
  art.resolved("steps", tr.steps());
  std::cout << "scheme: rk4\n";
  std::cout << "steps: " << tr.steps() << ", dt = " << format_number(tr.dt) << '\n';
  const size_t last = tr.t.size() - 1;
  for (size_t i = 0; i < tr.dof(); ++i) {
    std::cout << tr.coords[i] << "(" << format_number(tr.t[last]) << ") = " << format_number(tr.q[last][i]) << '\n';
  }
  std::cout << "z(" << format_number(tr.t[last]) << ") = " << format_number(tr.z[last]) << '\n';
  std::cout << "max velocity-Hessian condition: " << format_number(tr.max_condition) << '\n';
  return 0;
}

int solve_field(const Options& o, const ProblemFile& pf, Artifacts& art) {
  FieldRun run = run_field_problem(pf, overrides(o));
  const Grid2D& g = run.solution.grid;
  const std::string& field = pf.spec.fields[0];
  art.add(std::string("field.") + extension(o.format), field_output(run.solution, o.format, field));
  std::ostringstream series;
  std::cout << "scheme: " << to_string(run.scheme) << '\n';
  if (run.scheme == Scheme::String) {
    std::cout << "c^2 = " << format_number(run.coefficients.c2) << ", gamma = " << format_number(run.coefficients.gamma)
              << '\n';
    write_series_csv(series, g, {"energy", "dissipation_rate"}, {&run.energy, &run.dissipation});
    art.add("energy.csv", series.str());
  } else {
    std::cout << "gamma_t = " << format_number(run.gamma_t) << ", internal steps: " << run.kdv_steps << '\n';
    write_series_csv(series, g, {"mass"}, {&run.mass});
    art.add("mass.csv", series.str());
  }
  art.resolved("nt", g.nt);
  art.resolved("nx", g.nx);
  art.resolved("dt", g.dt());
  art.resolved("dx", g.dx());
  std::cout << "grid: nt = " << g.nt << ", nx = " << g.nx << ", dt = " << format_number(g.dt())
            << ", dx = " << format_number(g.dx()) << '\n';
  if (run.scheme == Scheme::String) {
    std::cout << "energy: " << format_number(run.energy.front()) << " -> " << format_number(run.energy.back()) << '\n';
  } else {
    std::cout << "mass: " << format_number(run.mass.front()) << " -> " << format_number(run.mass.back()) << '\n';
  }
  std::cout << "constraint residual: max " << format_number(run.constraint.max) << ", l2 "
            << format_number(run.constraint.l2) << '\n';
  return 0;
}

int cmd_solve(const Options& o) {
  std::string text = read_file(o.file);
  ProblemFile pf = parse_problem(text);
  Artifacts art("solve", o);
  art.input(o.file, text);
  int rc = problem_scheme(pf) == Scheme::Mechanics ? solve_mechanics(o, pf, art) : solve_field(o, pf, art);
  art.commit();
  return rc;
}

struct Verification {
  ResidualReport report;
  std::vector<Verdict> verdicts;
  Grid2D grid;
  double tolerance = 0;
};

Verification verify_solution(const ProblemFile& pf, const EquationSet& eq, const FieldSolution& sol,
                             std::optional<double> tol) {
  Verification v;
  v.grid = sol.grid;
  v.report = evaluate_residuals(pf.spec, eq, sol);
  v.tolerance = tol ? *tol : grid_scale_tolerance(sol.grid, 10);
  v.verdicts = residual_verdicts(v.report, v.tolerance);
  return v;
}

ordered_json verification_json(const Verification& v) {
  ordered_json j = to_json(v.report, v.grid);
  j["tolerance"] = v.tolerance;
  j["verdicts"] = to_json(v.verdicts);
  return j;
}

void print_verification(const Verification& v) {
  const Grid2D& g = v.grid;
  std::cout << "section: " << to_string(v.report.provenance) << ", grid " << g.nt << " x " << g.nx << ", stencil order "
            << v.report.stencil_order << ", interior margin (" << v.report.margin_t << ", " << v.report.margin_x
            << ")\n";
  std::cout << verdict_table(v.verdicts);
}

int cmd_verify(const Options& o) {
  std::string text = read_file(o.file);
  ProblemFile pf = parse_problem(text);
  if (pf.spec.dimension() != 2 || pf.spec.fields.size() != 1) {
    throw UsageError("verify needs one field over two coordinates");
  }
  EquationSet eq = derive(pf, o.order);
  FieldSolution sol;
  Artifacts art("verify", o);
  art.input(o.file, text);
  if (!o.solution.empty()) {
    std::ifstream in(o.solution, std::ios::binary);
    if (!in) throw UsageError("cannot read '" + o.solution + "'");
    sol = read_field_binary(in, pf.spec.coords[0], pf.spec.coords[1]);
    art.resolved("solution_sha256", sha256_hex(read_file(o.solution)));
  } else if (pf.has_section) {
    sol = problem_section(pf, overrides(o));
  } else {
    throw UsageError("nothing to verify: give --solution or a section block");
  }
  Verification v = verify_solution(pf, eq, sol, o.tol);
  ordered_json j = verification_json(v);
  if (o.format == "json") {
    std::cout << j.dump(2) << '\n';
  } else {
    print_verification(v);
  }
  art.resolved("tolerance", v.tolerance);
  art.add("report.json", j.dump(2) + "\n");
  art.commit();
  return 0;
}

int cmd_demo(const Options& o) {
  Artifacts art("demo", o);
  for (const auto& p : demo::kProblems) {
    std::string stem = fs::path(p.file).stem().string();
    std::cout << "== " << p.file << " ==\n";
    ProblemFile pf = parse_problem(p.text);
    EquationSet eq = derive_equations(pf.spec);
    std::cout << derivation_text(pf.spec, eq);
    art.add(stem + ".equations.json", to_json(pf.spec, eq).dump(2) + "\n");
    FieldSolution sol;
    if (pf.has_section) {
      sol = problem_section(pf);
    } else {
      FieldRun run = run_field_problem(pf);
      std::cout << "solved on " << run.solution.grid.nt << " x " << run.solution.grid.nx << " grid";
      if (run.scheme == Scheme::String) {
        std::cout << ", energy " << format_number(run.energy.front()) << " -> " << format_number(run.energy.back());
      } else {
        std::cout << ", mass " << format_number(run.mass.front()) << " -> " << format_number(run.mass.back());
      }
      std::cout << '\n';
      sol = std::move(run.solution);
    }
    Verification v = verify_solution(pf, eq, sol, o.tol);
    print_verification(v);
    art.add(stem + ".report.json", verification_json(v).dump(2) + "\n");
    std::cout << '\n';
  }

  // Herglotz operators commute exactly when the action dependence is closed.
  RandomLagrangianGenerator gen(o.seed);
  const int trials = 50;
  int agree = 0, closed_zero = 0, closed_total = 0;
  for (int i = 0; i < trials; ++i) {
    bool closed = i % 2 == 1;
    LagrangianSpec s = gen.lagrangian(closed);
    Expr F = gen.test_function();
    auto theta = dissipation_form(s);
    Expr expected = (total_derivative(s, theta[0], 1) - total_derivative(s, theta[1], 0)) * F;
    Expr got = commutator_residual(s, F, 0, 1);
    if (canonically_equal(got, expected)) ++agree;
    if (closed) {
      ++closed_total;
      if (is_zero(got)) ++closed_zero;
    }
  }
  std::cout << "== commutator check (seed " << o.seed << ") ==\n";
  std::cout << "[D^L_t, D^L_x] F = (D_x theta_t - D_t theta_x) F: " << agree << "/" << trials << '\n';
  std::cout << "vanishes for closed action dependence: " << closed_zero << "/" << closed_total << '\n';
  art.resolved("commutator_agree", agree);
  art.commit();
  return agree == trials && closed_zero == closed_total ? 0 : 1;
}

void common_options(CLI::App* sub, Options& o, bool needs_file) {
  if (needs_file) sub->add_option("file", o.file, "problem file")->required();
  sub->add_option("--out", o.out, "output directory (writes files and manifest.json)");
  sub->add_option("--dt", o.dt, "time step override")->check(CLI::PositiveNumber);
  sub->add_option("--nt", o.nt, "number of time levels override")->check(CLI::Range(4, 100000000));
  sub->add_option("--nx", o.nx, "number of spatial points override")->check(CLI::Range(4, 100000000));
  sub->add_option("--tol", o.tol, "residual tolerance (default 10*(dt^2 + dx^2))")->check(CLI::PositiveNumber);
  sub->add_option("--format", o.format, "output format")->check(CLI::IsMember({"csv", "json", "bin"}));
  sub->add_option("--seed", o.seed, "seed for the random property check");
  sub->add_option("--order", o.order, "derivation route")->check(CLI::IsMember({"auto", "1", "higher"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Herglotz variational principle toolkit: derive, solve and verify field equations"};
  app.set_version_flag("--version", std::string("herglotz ") + HERGLOTZ_VERSION);
  app.require_subcommand(1);
  Options o;
  auto* derive_cmd = app.add_subcommand("derive", "print the Herglotz equations of a problem file");
  auto* solve_cmd = app.add_subcommand("solve", "integrate the problem's solver block");
  auto* verify_cmd = app.add_subcommand("verify", "evaluate residuals on a section or stored solution");
  auto* demo_cmd = app.add_subcommand("demo", "run the bundled examples");
  common_options(derive_cmd, o, true);
  common_options(solve_cmd, o, true);
  common_options(verify_cmd, o, true);
  verify_cmd->add_option("--solution", o.solution, "binary field dump written by `solve --format bin`");
  common_options(demo_cmd, o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*derive_cmd) return cmd_derive(o);
    if (*solve_cmd) return cmd_solve(o);
    if (*verify_cmd) return cmd_verify(o);
    return cmd_demo(o);
  } catch (const ParseError& e) {
    std::cerr << o.file << ":" << e.line() << ":" << e.column() << ": parse error: " << e.message() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NotClosedError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const StabilityError& e) {
    std::cerr << "stability violation: " << e.what() << '\n';
    return 4;
  } catch (const NonFiniteStateError& e) {
    std::cerr << "stability violation: " << e.what() << '\n';
    return 4;
  } catch (const FixedPointDivergenceError& e) {
    std::cerr << "stability violation: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
