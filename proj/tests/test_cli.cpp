#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(ESHAPE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "eshape_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

const std::string kModels = std::string(ESHAPE_SOURCE_DIR) + "/models/";

}  // namespace

TEST(Cli, BuiltinWritesLoadableModel) {
  const fs::path out = scratch("pendulum.model");
  ASSERT_EQ(run("builtin double-pendulum --out " + out.string()), 0);
  EXPECT_NE(slurp(out).find("[chart]"), std::string::npos);
  EXPECT_EQ(slurp(out), slurp(kModels + "double_pendulum.model"));
  EXPECT_EQ(run("builtin triple-pendulum"), 1);
  EXPECT_EQ(run("builtin double-pendulum --physical 1 1 1 1 --out " + scratch("phys.model").string()), 0);
  EXPECT_NE(slurp(scratch("phys.model")).find("A = 2\n"), std::string::npos);
}

TEST(Cli, SynthPass) {
  const fs::path out = scratch("report.json");
  ASSERT_EQ(run("synth " + kModels + "double_pendulum.model --gamma-check --out " + out.string()), 0);
  const auto j = nlohmann::json::parse(slurp(out));
  EXPECT_EQ(j["certificate"]["verdict"], "pass");
  EXPECT_NEAR(j["certificate"]["varpi_min"].get<double>(), 0.0, 1e-8);
}

TEST(Cli, SynthCertificateFail) {
  const fs::path out = scratch("report_fail.json");
  EXPECT_EQ(run("synth builtin:double-pendulum --const g=1 --out " + out.string()), 2);
  const auto j = nlohmann::json::parse(slurp(out));
  EXPECT_EQ(j["certificate"]["verdict"], "M not positive-definite");
}

TEST(Cli, Errors) {
  EXPECT_EQ(run("synth /nonexistent/file.model"), 1);
  EXPECT_EQ(run("synth builtin:double-pendulum --const g"), 1);
  EXPECT_EQ(run("synth builtin:double-pendulum --const nope=1"), 1);
  EXPECT_EQ(run("synth builtin:double-pendulum --const g=abc"), 1);
  EXPECT_EQ(run("synth " + kModels + "coupled3.model"), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run(""), 1);
  const fs::path bad = scratch("bad.model");
  std::ofstream(bad) << "[model]\nn = 2\ncoords = [\"x\"\n";
  EXPECT_EQ(run("synth " + bad.string()), 1);
}

TEST(Cli, SuppliedKineticForm) {
  EXPECT_EQ(run("synth " + kModels + "coupled3.model --kinetic-from " + kModels + "coupled3.kinetic"), 0);
  EXPECT_EQ(run("synth " + kModels + "coupled3.model --varpi 0.5 --kinetic-from " + kModels + "coupled3.kinetic"), 2);
}

TEST(Cli, Grid) {
  const fs::path out = scratch("grid.csv");
  ASSERT_EQ(run("grid builtin:double-pendulum --box 0.2 --steps 5 --out " + out.string()), 0);
  const std::string csv = slurp(out);
  std::size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  EXPECT_EQ(lines, 26u);
  EXPECT_EQ(csv.rfind("q1,q2,hhat,u1,K11\n", 0), 0u);
  EXPECT_NE(csv.find("\n0,0,0,0,1\n"), std::string::npos);
}
