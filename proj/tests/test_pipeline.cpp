#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "eshape/pipeline.hpp"
#include "fixtures.hpp"

using namespace eshape;

namespace {

std::vector<std::vector<std::string>> split_csv(const std::string& csv) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

const std::string kCoupled =
    "[model]\nn = 3\ncoords = [\"q1\", \"q2\", \"q3\"]\nequilibrium = [0, 0, 0]\n"
    "[mass_inverse]\nH11 = 1\nH12 = 0\nH13 = 0\nH22 = 1\nH23 = 0\nH33 = 1\n"
    "[potential]\nh = \"q1^2 + q1*q2 + 2*q2^2 + q2*q3 + q3^2\"\n"
    "[actuation]\ntheta1 = [0, 0, 1]\n";

}  // namespace

TEST(Synth, PendulumReport) {
  SynthOptions opt;
  opt.gamma_check = true;
  const SynthResult r = run_synth(builtin_model("double-pendulum"), opt);
  const auto j = report_json(r);
  EXPECT_EQ(j["schema"], 1);
  EXPECT_EQ(j["model"]["n"], 2);
  EXPECT_EQ(j["certificate"]["verdict"], r.cert.verdict);
  EXPECT_EQ(j["certificate"]["verdict"], "pass");
  EXPECT_NEAR(j["certificate"]["varpi_min"].get<double>(), 0.0, 1e-8);
  EXPECT_EQ(j["certificate"]["hess0"]["rows"], 2);
  EXPECT_EQ(j["certificate"]["hess0"]["data"].size(), 2u);
  EXPECT_EQ(j["chart_adaptation"]["identity"], true);
  EXPECT_EQ(j["gamma_check"]["holds"], true);
  EXPECT_LE(j["residuals"]["max_kinetic_residual"].get<double>(), 1e-6);
  EXPECT_LE(j["residuals"]["max_potential_residual"].get<double>(), 1e-6);

  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"schema", "model", "chart_adaptation", "kinetic",
                                            "integrability_residual", "certificate", "residuals", "gamma_check",
                                            "timings_ms"}));
}

TEST(Synth, ReportDeterministicApartFromTimings) {
  auto strip = [](nlohmann::ordered_json j) {
    j.erase("timings_ms");
    return j.dump();
  };
  const std::string text = builtin_model("double-pendulum");
  EXPECT_EQ(strip(report_json(run_synth(text))), strip(report_json(run_synth(text))));
}

TEST(Synth, GammaBelowThresholdFails) {
  SynthOptions opt;
  opt.constants = {{"g", 1.0}};
  opt.gamma_check = true;
  const SynthResult r = run_synth(builtin_model("double-pendulum"), opt);
  EXPECT_FALSE(r.cert.pass);
  EXPECT_EQ(r.cert.verdict, "M not positive-definite");
  EXPECT_EQ(report_json(r)["gamma_check"]["holds"], false);
}

TEST(Synth, StageErrors) {
  try {
    run_synth("[model]\nn = 2\n");
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "load");
  }
  try {
    run_synth(kCoupled);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "kinetic");
  }
  SynthOptions opt;
  opt.kinetic_text = "[kinetic]\nK11 = 1\nK12 = 0\nK22 = 3\n";
  try {
    run_synth(kCoupled, opt);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "potential");
    EXPECT_NE(std::string(e.what()).find("integrability"), std::string::npos);
  }
}

TEST(Synth, SuppliedKineticForm) {
  SynthOptions opt;
  opt.kinetic_text = "[kinetic]\nK11 = 1\nK12 = 0\nK22 = 1\n";
  const SynthResult r = run_synth(kCoupled, opt);
  EXPECT_TRUE(r.cert.pass);
  EXPECT_EQ(r.kinetic_source, "user");
  EXPECT_LT(r.integrability, 1e-8);
}

TEST(Synth, ChartAdaptationPermutes) {
  const std::string text =
      "[model]\nn = 2\ncoords = [\"a\", \"b\"]\nequilibrium = [0.5, 0]\n"
      "[mass_inverse]\nH11 = 1\nH12 = 0\nH22 = 1\n"
      "[potential]\nh = \"(a - 0.5)^2 + b^2\"\n"
      "[actuation]\ntheta1 = [1, 0]\n";
  const SynthResult r = run_synth(text);
  EXPECT_EQ(r.adaptation.permutation, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(r.adapted->coords(), (std::vector<std::string>{"b", "a"}));
  EXPECT_TRUE(r.cert.pass);
}

TEST(Grid, PendulumCsv) {
  const SynthResult r = run_synth(builtin_model("double-pendulum"));
  const GridExport g = grid_csv(r, 0.2, 5);
  EXPECT_EQ(g.csv.find('\r'), std::string::npos);
  const auto rows = split_csv(g.csv);
  ASSERT_EQ(rows.size(), 26u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"q1", "q2", "hhat", "u1", "K11"}));
  EXPECT_EQ(g.rows, 25u);

  const fixtures::Pendulum p;
  std::size_t nan_rows = 0;
  bool origin = false;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double x = std::stod(rows[i][0]), y = std::stod(rows[i][1]);
    if (rows[i][2] == "nan") {
      ++nan_rows;
      EXPECT_GT(p.det(x, y), -0.1);
      continue;
    }
    const double hhat = std::stod(rows[i][2]), k = std::stod(rows[i][4]);
    if (x == 0 && y == 0) {
      origin = true;
      EXPECT_EQ(hhat, 0.0);
    }
    if (x == 0) {
      EXPECT_NEAR(hhat, r.cert.varpi * y * y / 2, 1e-15);
    }
    EXPECT_NEAR(k, p.K(x, y), 1e-8 * p.K(x, y));
  }
  EXPECT_TRUE(origin);
  EXPECT_EQ(nan_rows, g.failed_rows);
  // lexicographic: first coordinate slowest
  EXPECT_EQ(rows[1][0], rows[5][0]);
  EXPECT_NE(rows[1][1], rows[2][1]);
}

TEST(Grid, ThreadCountDoesNotChangeOutput) {
  const SynthResult r = run_synth(builtin_model("double-pendulum"));
  EXPECT_EQ(grid_csv(r, 0.15, 7, 1).csv, grid_csv(r, 0.15, 7, 4).csv);
}

TEST(Grid, MatrixKineticColumns) {
  SynthOptions opt;
  opt.kinetic_text = "[kinetic]\nK11 = 1\nK12 = 0\nK22 = 1\n";
  const auto rows = split_csv(grid_csv(run_synth(kCoupled, opt), 0.1, 2).csv);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"q1", "q2", "q3", "hhat", "u1", "u2", "K11", "K12", "K22"}));
  EXPECT_EQ(rows.size(), 9u);
}
