// eshape: energy-shaping synthesis for underactuated simple Hamiltonian systems.
//
//   eshape synth <model> [--out report.json] [--const N=V]... [--varpi v] [--tol t]
//                        [--kinetic-from file] [--xi expr] [--gamma-check]
//   eshape grid  <model> [--out grid.csv] [--box r] [--steps k] [same pipeline flags]
//   eshape builtin double-pendulum [--out file] [--physical L1 L2 m1 m2] [--gravity g]
//
// <model> is a path, or builtin:<name> for a built-in model.
// Exit status: 0 certificate passes, 2 certificate fails, 1 any error.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "eshape/pipeline.hpp"

namespace {

constexpr int kPass = 0;
constexpr int kError = 1;
constexpr int kCertificateFail = 2;

std::map<std::string, double> parse_constants(const std::vector<std::string>& items) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw eshape::Error("--const expects NAME=VALUE, got '" + item + "'");
    const std::string name = item.substr(0, eq), value = item.substr(eq + 1);
    std::size_t used = 0;
    double v;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) throw eshape::Error("--const " + name + ": not a number: '" + value + "'");
    out[name] = v;
  }
  return out;
}

std::string model_text(const std::string& where) {
  const std::string prefix = "builtin:";
  if (where.rfind(prefix, 0) == 0) return eshape::builtin_model(where.substr(prefix.size()));
  return eshape::file::read_text_file(where);
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw eshape::Error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw eshape::Error("write to '" + path + "' failed");
}

struct PipelineFlags {
  std::string model;
  std::string out;
  std::vector<std::string> constants;
  std::optional<double> varpi;
  double tol = 1e-6;
  std::string kinetic_from;
  std::string xi = "1";
  bool gamma_check = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("model", model, "model file, or builtin:<name>")->required();
    cmd->add_option("--out", out, "output file (default stdout)");
    cmd->add_option("--const", constants, "override a constant, NAME=VALUE (repeatable)")->take_all();
    cmd->add_option("--varpi", varpi, "boundary curvature (default 2 max(varpiMin, 1))");
    cmd->add_option("--tol", tol, "integrability tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("--kinetic-from", kinetic_from, "file with a [kinetic] section giving K");
    cmd->add_option("--xi", xi, "free function of the actuated coordinates in the closed-form K");
    cmd->add_flag("--gamma-check", gamma_check, "report whether g > A/B for models with constants A, B, g");
  }

  eshape::SynthResult run() const {
    eshape::SynthOptions opt;
    opt.constants = parse_constants(constants);
    opt.varpi = varpi;
    opt.integrability_tol = tol;
    opt.xi = xi;
    opt.gamma_check = gamma_check;
    std::string text;
    try {
      text = model_text(model);
    } catch (const std::exception& e) {
      throw eshape::StageError("load", e.what());
    }
    if (!kinetic_from.empty()) {
      try {
        opt.kinetic_text = eshape::file::read_text_file(kinetic_from);
      } catch (const std::exception& e) {
        throw eshape::StageError("kinetic", e.what());
      }
    }
    return eshape::run_synth(text, opt);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-shaping synthesis for underactuated simple Hamiltonian systems"};
  app.require_subcommand(1);

  PipelineFlags synth_flags;
  auto* synth = app.add_subcommand("synth", "run the synthesis and write a JSON report");
  synth_flags.attach(synth);

  PipelineFlags grid_flags;
  double box = 0.1;
  std::size_t steps = 9;
  auto* grid = app.add_subcommand("grid", "run the synthesis and write hhat, u, K on a grid as CSV");
  grid_flags.attach(grid);
  grid->add_option("--box", box, "half-width of the grid box")->check(CLI::PositiveNumber);
  grid->add_option("--steps", steps, "points per axis")->check(CLI::Range(1, 10000));

  std::string builtin_name;
  std::string builtin_out;
  std::vector<double> physical;
  double gravity = 9.81;
  auto* builtin = app.add_subcommand("builtin", "print a built-in model file");
  builtin->add_option("name", builtin_name, "model name (double-pendulum)")->required();
  builtin->add_option("--out", builtin_out, "output file (default stdout)");
  builtin->add_option("--physical", physical, "bar lengths and masses L1 L2 m1 m2")->expected(4);
  builtin->add_option("--gravity", gravity, "gravitational acceleration for --physical");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kPass : kError;
  }

  try {
    if (*builtin) {
      std::optional<eshape::PhysicalPendulum> p;
      if (!physical.empty()) p = eshape::PhysicalPendulum{physical[0], physical[1], physical[2], physical[3], gravity};
      write_output(builtin_out, eshape::builtin_model(builtin_name, p));
      return kPass;
    }
    if (*synth) {
      const auto result = synth_flags.run();
      write_output(synth_flags.out, eshape::report_json(result).dump(2) + "\n");
      return result.cert.pass ? kPass : kCertificateFail;
    }
    if (*grid) {
      const auto result = grid_flags.run();
      const auto g = eshape::grid_csv(result, box, steps);
      write_output(grid_flags.out, g.csv);
      if (g.failed_rows > 0)
        std::cerr << "warning: " << g.failed_rows << " of " << g.rows << " grid rows outside the validity domain (nan)\n";
      return result.cert.pass ? kPass : kCertificateFail;
    }
  } catch (const eshape::StageError& e) {
    std::cerr << "error in stage " << e.what() << "\n";
    return kError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
  return kError;
}
