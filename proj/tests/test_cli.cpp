#include "demo_problems.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const std::string kCli = HERGLOTZ_CLI;
const fs::path kSource = HERGLOTZ_SOURCE_DIR;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("herglotz_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Result run(const std::string& args, const std::string& env = "") {
  fs::path dir = scratch("io");
  fs::path out = dir / "stdout", err = dir / "stderr";
  std::string cmd = env + (env.empty() ? "" : " ") + "'" + kCli + "' " + args + " > '" + out.string() + "' 2> '" +
                    err.string() + "'";
  int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string problem(const std::string& name) { return "'" + (kSource / "problems" / name).string() + "'"; }

// Manifest without the fields that legitimately vary between runs.
nlohmann::json stable_manifest(const fs::path& dir) {
  auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
  j.erase("wall_clock_seconds");
  j.erase("timestamp");
  j["options"].erase("out");
  return j;
}

}  // namespace

TEST(Cli, BundledProblemsMirrorFiles) {
  for (const auto& p : herglotz::demo::kProblems) {
    EXPECT_EQ(slurp(kSource / "problems" / p.file), p.text) << p.file;
  }
}

TEST(Cli, DeriveMatchesGoldenFiles) {
  for (std::string name : {"damped_string", "kdv_symbolic", "counterexample"}) {
    Result r = run("derive " + problem(name + ".txt"));
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, slurp(kSource / "tests" / "golden" / (name + ".derive.txt"))) << name;
    EXPECT_TRUE(r.err.empty());
  }
}

TEST(Cli, DeriveJsonAndArtifacts) {
  fs::path dir = scratch("derive");
  Result r = run("derive --format json --out '" + dir.string() + "' " + problem("damped_string.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["equations"][0]["residual"], "rho*u_tt - tau*u_xx + gamma*rho*u_t");
  EXPECT_EQ(j["closed_action_dependence"], true);
  EXPECT_TRUE(fs::exists(dir / "equations.json"));
  auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["subcommand"], "derive");
  EXPECT_EQ(m["input"]["sha256"].get<std::string>().size(), 64u);
  EXPECT_EQ(m["outputs"][0]["file"], "equations.json");
  for (const auto& entry : fs::directory_iterator(dir)) {
    EXPECT_EQ(entry.path().filename().string().find(".tmp"), std::string::npos);
  }
}

TEST(Cli, ExitCodes) {
  fs::path dir = scratch("bad");
  std::ofstream(dir / "bad.txt") << "coords: t, x\nfields: u\nlagrangian: u_t + u_y\n";
  Result parse = run("derive '" + (dir / "bad.txt").string() + "'");
  EXPECT_EQ(parse.code, 2);
  EXPECT_NE(parse.err.find(":3:19: parse error"), std::string::npos) << parse.err;
  EXPECT_TRUE(parse.out.empty());

  Result missing = run("derive '" + (dir / "nope.txt").string() + "'");
  EXPECT_EQ(missing.code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("derive --order 7 " + problem("damped_string.txt")).code, 2);

  Result not_closed = run("derive --order higher " + problem("counterexample.txt"));
  EXPECT_EQ(not_closed.code, 3);
  EXPECT_NE(not_closed.err.find("C_tx = gamma_x*u_t"), std::string::npos);
  Result first = run("derive " + problem("counterexample.txt"));
  EXPECT_EQ(first.code, 0);
  EXPECT_NE(first.out.find("closed action dependence: NO, C_tx = gamma_x*u_t"), std::string::npos);

  Result cfl = run("solve --nt 100 " + problem("damped_string.txt"));
  EXPECT_EQ(cfl.code, 4);
  EXPECT_NE(cfl.err.find("CFL"), std::string::npos);
  EXPECT_TRUE(cfl.out.empty());

  std::ofstream(dir / "kdv_fast.txt") << slurp(kSource / "problems" / "kdv.txt") << "  substeps: 1\n";
  EXPECT_EQ(run("solve '" + (dir / "kdv_fast.txt").string() + "'").code, 4);
  EXPECT_EQ(run("verify " + problem("damped_string.txt")).code, 2);
}

TEST(Cli, VerifyVerdicts) {
  Result c = run("verify " + problem("counterexample.txt"));
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_NE(c.out.find("field equation u  0                       PASS (exact: 0)"), std::string::npos) << c.out;
  EXPECT_NE(c.out.find("constraint        0                       PASS (exact: 0)"), std::string::npos);
  EXPECT_NE(c.out.find("closedness tx     0.5                     FAIL (exact: gamma_x)"), std::string::npos);

  Result w = run("verify --format json " + problem("damped_string_wrong_section.txt"));
  ASSERT_EQ(w.code, 0);
  auto j = nlohmann::json::parse(w.out);
  EXPECT_EQ(j["verdicts"][0]["verdict"], "FAIL");
  EXPECT_GT(j["field_equations"][0]["max"].get<double>(), 0.1);

  fs::path dir = scratch("own");
  ASSERT_EQ(run("solve --format bin --out '" + dir.string() + "' " + problem("damped_string.txt")).code, 0);
  Result own = run("verify --format json --solution '" + (dir / "field.bin").string() + "' " +
                   problem("damped_string.txt"));
  ASSERT_EQ(own.code, 0) << own.err;
  auto o = nlohmann::json::parse(own.out);
  for (const auto& v : o["verdicts"]) EXPECT_EQ(v["verdict"], "PASS") << v.dump();
  EXPECT_EQ(o["provenance"], "solved");
}

TEST(Cli, SolveOutputs) {
  fs::path dir = scratch("mech");
  Result m = run("solve --out '" + dir.string() + "' " + problem("damped_oscillator.txt"));
  ASSERT_EQ(m.code, 0) << m.err;
  std::string csv = slurp(dir / "trajectory.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,q,q_t,z,lambda");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10002);

  fs::path k = scratch("kdv");
  Result r = run("solve --out '" + k.string() + "' " + problem("kdv.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(k / "field.csv"));
  EXPECT_TRUE(fs::exists(k / "mass.csv"));
  EXPECT_NE(r.out.find("scheme: kdv"), std::string::npos);
}

TEST(Cli, ByteReproducibleOutputs) {
  for (std::string name : {"damped_string.txt", "kdv.txt", "damped_oscillator.txt"}) {
    fs::path a = scratch("rep_a"), b = scratch("rep_b");
    Result ra = run("solve --out '" + a.string() + "' " + problem(name), "HERGLOTZ_THREADS=1");
    Result rb = run("solve --out '" + b.string() + "' " + problem(name), "HERGLOTZ_THREADS=3");
    ASSERT_EQ(ra.code, 0) << ra.err;
    ASSERT_EQ(rb.code, 0) << rb.err;
    EXPECT_EQ(ra.out, rb.out);
    auto ma = stable_manifest(a), mb = stable_manifest(b);
    EXPECT_EQ(ma, mb) << name;
    for (const auto& f : ma["outputs"]) {
      std::string file = f["file"];
      EXPECT_EQ(slurp(a / file), slurp(b / file)) << name << " " << file;
    }
  }
  fs::path a = scratch("demo_a"), b = scratch("demo_b");
  Result da = run("demo --seed 3 --out '" + a.string() + "'");
  Result db = run("demo --seed 3 --out '" + b.string() + "'");
  ASSERT_EQ(da.code, 0) << da.err;
  EXPECT_EQ(da.out, db.out);
  EXPECT_EQ(stable_manifest(a), stable_manifest(b));
  EXPECT_NE(da.out.find("50/50"), std::string::npos);
}
