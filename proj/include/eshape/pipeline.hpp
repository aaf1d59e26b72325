#pragma once

// End-to-end synthesis: load -> center -> adapt chart -> kinetic solution ->
// integrability -> shaped potential -> certificate -> residual diagnostics,
// with a JSON report and CSV grid export.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "eshape/error.hpp"
#include "eshape/expr.hpp"
#include "eshape/kinetic.hpp"
#include "eshape/model.hpp"
#include "eshape/numerics.hpp"
#include "eshape/potential.hpp"

namespace eshape {

/// An error tagged with the pipeline stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct PhysicalPendulum {
  double l1, l2, m1, m2;
  double gravity = 9.81;
};

/// Text of a built-in model file.  Only "double-pendulum" exists: the planar
/// inverted double pendulum actuated at the second joint, with the chart
/// x = psi, y = phi + g psi.
inline std::string builtin_model(const std::string& name, std::optional<PhysicalPendulum> physical = std::nullopt) {
  if (name != "double-pendulum") throw Error("unknown built-in model '" + name + "'");
  double a = 2, b = 1, c = 1, d1 = 1, d2 = 1;
  if (physical) {
    const auto& p = *physical;
    a = p.m1 * p.l1 * p.l1 + p.m2 * p.l2 * p.l2;
    b = p.m2 * p.l1 * p.l2;
    c = p.m2 * p.l2 * p.l2;
    d1 = p.m2 * p.gravity * p.l2;
    d2 = (p.m1 + p.m2) * p.gravity * p.l1;
  }
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "# Planar inverted double pendulum, torque on the second joint (phi).\n"
      << "[model]\n"
      << "n = 2\n"
      << "coords = [\"psi\", \"phi\"]\n"
      << "equilibrium = [0, 0]\n\n"
      << "[constants]\n"
      << "A = " << num(a) << "\n"
      << "B = " << num(b) << "\n"
      << "C = " << num(c) << "\n"
      << "D1 = " << num(d1) << "\n"
      << "D2 = " << num(d2) << "\n"
      << "g = 3\n\n"
      << "[mass_inverse]\n"
      << "H11 = \"C/(A*C - B^2*cos(psi - phi)^2)\"\n"
      << "H12 = \"-B*cos(psi - phi)/(A*C - B^2*cos(psi - phi)^2)\"\n"
      << "H22 = \"A/(A*C - B^2*cos(psi - phi)^2)\"\n\n"
      << "[potential]\n"
      << "h = \"D1*cos(psi) + D2*cos(phi)\"\n\n"
      << "[actuation]\n"
      << "theta1 = [\"0\", \"1\"]\n\n"
      << "# x = psi, y = phi + g*psi\n"
      << "[chart]\n"
      << "coords = [\"x\", \"y\"]\n"
      << "T = [[1, 0], [\"g\", 1]]\n"
      << "c = [0, 0]\n";
  return out.str();
}

struct SynthOptions {
  std::map<std::string, double> constants;
  std::optional<double> varpi;
  double integrability_tol = 1e-6;
  std::string xi = "1";
  std::optional<std::string> kinetic_text;  ///< contents of a [kinetic] file
  bool gamma_check = false;
  double verify_half_width = 0.1;
  std::size_t verify_steps = 5;
};

struct SynthResult {
  std::optional<ModelSpec> loaded;
  std::optional<ModelSpec> adapted;
  ChartAdaptation adaptation;
  std::optional<KineticSolution> kinetic;
  std::string kinetic_source;
  double integrability = 0.0;
  std::optional<ShapedPotential> hhat;
  PositivityCertificate cert;
  std::size_t verify_points = 0;
  double max_kinetic_residual = 0.0;
  double max_potential_residual = 0.0;
  std::vector<std::pair<std::string, double>> timings_ms;
  nlohmann::ordered_json gamma_check;
};

namespace detail {

template <class F>
auto run_stage(SynthResult& r, const std::string& stage, F&& f) {
  const auto start = std::chrono::steady_clock::now();
  try {
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      r.timings_ms.emplace_back(
          stage, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
    } else {
      auto v = f();
      r.timings_ms.emplace_back(
          stage, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
      return v;
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline std::vector<Vec> kinetic_directions(std::size_t d) {
  std::vector<Vec> dirs;
  for (std::size_t i = 0; i < d; ++i) {
    Vec e(d, 0.0);
    e[i] = 1.0;
    dirs.push_back(e);
  }
  if (d > 1) dirs.emplace_back(d, 1.0 / std::sqrt(static_cast<double>(d)));
  return dirs;
}

}  // namespace detail

/// Runs the whole procedure on the text of a model file.
inline SynthResult run_synth(std::string_view model_text, const SynthOptions& opt = {}) {
  SynthResult r;

  r.loaded = detail::run_stage(r, "load", [&] { return parse_model(model_text, opt.constants); });

  detail::run_stage(r, "adapt", [&] {
    ModelSpec centered_spec = centered(*r.loaded);
    r.adaptation = adapt_chart(centered_spec);
    r.adapted = r.adaptation.is_identity() ? centered_spec : apply_permutation(centered_spec, r.adaptation.permutation);
  });
  const ModelSpec& spec = *r.adapted;

  detail::run_stage(r, "kinetic", [&] {
    if (opt.kinetic_text) {
      r.kinetic = load_kinetic(spec, *opt.kinetic_text);
      r.kinetic_source = "user";
    } else {
      if (spec.dou() != 1)
        throw Error("n - m = " + std::to_string(spec.dou()) +
                    " > 1: no closed-form kinetic solution; supply one with --kinetic-from");
      r.kinetic = solve_kinetic_1dou(spec, expr::parse(opt.xi));
      r.kinetic_source = "closed-form";
    }
    r.kinetic->operator()(spec.equilibrium());
  });

  detail::run_stage(r, "integrability", [&] {
    r.integrability = integrability_residual(spec, *r.kinetic, box_grid(spec.equilibrium(), 0.1, 9));
  });

  detail::run_stage(r, "certificate", [&] { r.cert = certificate(spec, *r.kinetic, opt.varpi); });

  detail::run_stage(r, "potential", [&] {
    PotentialOptions po;
    po.integrability_tol = opt.integrability_tol;
    r.hhat = build_hhat(spec, *r.kinetic, r.cert.varpi, po);
  });

  detail::run_stage(r, "verify", [&] {
    const auto grid = box_grid(spec.equilibrium(), opt.verify_half_width, opt.verify_steps);
    const auto dirs = detail::kinetic_directions(spec.dou());
    r.verify_points = grid.size();
    for (const Vec& q : grid) {
      for (const Vec& a : dirs)
        r.max_kinetic_residual = std::max(r.max_kinetic_residual, std::fabs(kinetic_residual(spec, *r.kinetic, q, a)));
      const Vec u = u_fields(spec, *r.kinetic, q);
      const Vec g = fd_grad(*r.hhat, q);
      for (std::size_t mu = 0; mu < spec.dou(); ++mu)
        r.max_potential_residual = std::max(r.max_potential_residual, std::fabs(g[mu] - u[mu]));
    }
  });

  if (opt.gamma_check) {
    auto a = r.loaded->constant("A"), b = r.loaded->constant("B"), g = r.loaded->constant("g");
    if (a && b && g && *b != 0.0)
      r.gamma_check = {{"A_over_B", *a / *b}, {"gamma", *g}, {"holds", *g > *a / *b}};
    else
      r.gamma_check = {{"note", "model has no constants A, B, g"}};
  }
  return r;
}

// ---------------------------------------------------------------------------
// Report

inline nlohmann::ordered_json matrix_json(const Mat& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

inline nlohmann::ordered_json report_json(const SynthResult& r) {
  using nlohmann::ordered_json;
  const ModelSpec& loaded = *r.loaded;
  const ModelSpec& spec = *r.adapted;

  ordered_json constants = ordered_json::object();
  for (const auto& [k, v] : loaded.constants()) constants[k] = v;

  ordered_json j;
  j["schema"] = 1;
  j["model"] = {{"n", loaded.n()},
                {"m", loaded.m()},
                {"coords", loaded.coords()},
                {"constants", constants},
                {"equilibrium", loaded.equilibrium()}};
  j["chart_adaptation"] = {{"permutation", r.adaptation.permutation},
                           {"identity", r.adaptation.is_identity()},
                           {"coords", spec.coords()},
                           {"determinant", r.adaptation.determinant}};
  j["kinetic"] = {{"source", r.kinetic_source},
                  {"xi", r.kinetic->xi() ? ordered_json(expr::to_string(*r.kinetic->xi())) : ordered_json(nullptr)},
                  {"validity_note", r.kinetic->validity_note()},
                  {"K_at_equilibrium", matrix_json((*r.kinetic)(spec.equilibrium()))}};
  j["integrability_residual"] = r.integrability;
  const auto& c = r.cert;
  j["certificate"] = {{"M", matrix_json(c.M)},
                      {"A", matrix_json(c.A)},
                      {"lambda_min", c.lambda_min},
                      {"norm_A_sq", c.norm_a_sq},
                      {"varpi_min", c.varpi_min ? ordered_json(*c.varpi_min) : ordered_json(nullptr)},
                      {"varpi", c.varpi},
                      {"verdict", c.verdict},
                      {"pass", c.pass},
                      {"hess0", matrix_json(c.hess0)}};
  j["residuals"] = {{"grid_points", r.verify_points},
                    {"max_kinetic_residual", r.max_kinetic_residual},
                    {"max_potential_residual", r.max_potential_residual}};
  if (!r.gamma_check.is_null()) j["gamma_check"] = r.gamma_check;
  ordered_json timings = ordered_json::object();
  for (const auto& [stage, ms] : r.timings_ms) timings[stage] = ms;
  j["timings_ms"] = timings;
  return j;
}

// ---------------------------------------------------------------------------
// Grid export

struct GridExport {
  std::string csv;
  std::size_t rows = 0;
  std::size_t failed_rows = 0;
};

namespace detail {
inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// CSV of q, hhat, u and the upper triangle of K over the box
/// +-half_width (steps points per axis) around the equilibrium of the
/// adapted chart.  Rows that leave the validity domain are written as nan.
inline GridExport grid_csv(const SynthResult& r, double half_width, std::size_t steps, unsigned threads = 0) {
  const ModelSpec& spec = *r.adapted;
  const std::size_t n = spec.n(), d = spec.dou();
  const auto grid = box_grid(spec.equilibrium(), half_width, steps);

  std::string header;
  for (std::size_t i = 0; i < n; ++i) header += "q" + std::to_string(i + 1) + ",";
  header += "hhat";
  for (std::size_t mu = 0; mu < d; ++mu) header += ",u" + std::to_string(mu + 1);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) header += ",K" + std::to_string(i + 1) + std::to_string(j + 1);

  std::vector<std::string> lines(grid.size());
  std::atomic<std::size_t> next{0}, failed{0};
  auto worker = [&] {
    for (std::size_t idx = next++; idx < grid.size(); idx = next++) {
      const Vec& q = grid[idx];
      std::string line;
      for (std::size_t i = 0; i < n; ++i) line += detail::csv_number(q[i]) + ",";
      std::vector<double> values;
      try {
        values.push_back((*r.hhat)(q));
        for (double u : u_fields(spec, *r.kinetic, q)) values.push_back(u);
        const Mat k = (*r.kinetic)(q);
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = i; j < d; ++j) values.push_back(k(i, j));
      } catch (const Error&) {
        values.assign(1 + d + d * (d + 1) / 2, std::nan(""));
        ++failed;
      }
      for (std::size_t v = 0; v < values.size(); ++v) line += (v ? "," : "") + detail::csv_number(values[v]);
      lines[idx] = std::move(line);
    }
  };
  if (threads == 0) threads = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  GridExport out;
  out.csv = header + "\n";
  for (const auto& l : lines) out.csv += l + "\n";
  out.rows = grid.size();
  out.failed_rows = failed;
  return out;
}

}  // namespace eshape
