#pragma once

// The kinetic matching condition in an adapted chart,
//   (dK_{t2 t3}/dq^{t1} + G^{mu nu}_{t1 t2 t3} K_{mu nu}) a^{t1} a^{t2} a^{t3} = 0,
// solved in closed form (up to one quadrature) for one degree of
// underactuation, and checked by residual for any supplied K.

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eshape/error.hpp"
#include "eshape/expr.hpp"
#include "eshape/frame.hpp"
#include "eshape/model.hpp"
#include "eshape/numerics.hpp"

namespace eshape {

/// A symmetric (n-m) x (n-m) field q -> K_{mu nu}(q).
class KineticSolution {
 public:
  using Field = std::function<Mat(std::span<const double>)>;

  KineticSolution(std::size_t dim, Field field, std::string validity_note = {}, std::optional<Expr> xi = {})
      : dim_(dim), field_(std::move(field)), note_(std::move(validity_note)), xi_(std::move(xi)) {}

  std::size_t dim() const noexcept { return dim_; }
  const std::string& validity_note() const noexcept { return note_; }
  const std::optional<Expr>& xi() const noexcept { return xi_; }

  Mat operator()(std::span<const double> q) const { return field_(q); }

  double scalar(std::span<const double> q) const {
    if (dim_ != 1) throw Error("scalar K requested for a matrix-valued kinetic solution");
    return field_(q)(0, 0);
  }

  /// c * K, still a solution whenever K is.
  KineticSolution scaled(double c) const {
    Field f = field_;
    return {dim_, [f, c](std::span<const double> q) { return c * f(q); }, note_, xi_};
  }

 private:
  std::size_t dim_;
  Field field_;
  std::string note_;
  std::optional<Expr> xi_;
};

namespace detail {

/// Probes the stacked system along each coordinate axis through q0 and
/// describes where (if anywhere) it became singular.
inline std::string probe_validity(const ModelSpec& spec, double radius = 0.5, int steps = 10) {
  const Vec& q0 = spec.equilibrium();
  for (std::size_t i = 0; i < spec.n(); ++i)
    for (int s = 1; s <= steps; ++s)
      for (double sign : {1.0, -1.0}) {
        Vec q = q0;
        q[i] += sign * radius * s / steps;
        try {
          frame_at(spec, q);
        } catch (const Error&) {
          return "stacked system singular near q = " + format_point(q) + " (axis probe along " +
                 spec.coords()[i] + ")";
        }
      }
  return "no singularity of the stacked system on axis probes within +-" + std::to_string(radius) +
         " of the equilibrium";
}

}  // namespace detail

/// Closed-form kinetic solution for m = n - 1:
///   K(x, y) = xi(y) exp(-int_{x0}^{x} G(t, y) dt),
/// x being the first coordinate and y the remaining ones.  `xi` may use the
/// constants and the y coordinates and must be positive.
inline KineticSolution solve_kinetic_1dou(const ModelSpec& spec, const Expr& xi, const QuadSpec& quad_spec = {}) {
  if (spec.dou() != 1)
    throw Error("closed-form kinetic solution needs one degree of underactuation (m = n - 1), got n - m = " +
                std::to_string(spec.dou()));
  if (expr::depends_on(xi, spec.coords()[0]))
    throw Error("xi must not depend on the unactuated coordinate '" + spec.coords()[0] + "'");

  auto model = std::make_shared<const ModelSpec>(spec);
  auto xi_program = std::make_shared<const expr::Program>(model->compile(xi));

  auto xi_at = [model, xi_program](std::span<const double> q) {
    double v = (*xi_program)(model->slots(q));
    if (!(v > 0.0)) throw DomainError("xi must be positive (xi = " + std::to_string(v) + ")");
    return v;
  };
  xi_at(model->equilibrium());
  for (const Vec& q : random_points(model->equilibrium(), 0.2, 20, 0x71))
    xi_at(q);

  const double x0 = model->equilibrium()[0];
  KineticSolution::Field field = [model, xi_at, quad_spec, x0](std::span<const double> q) {
    Vec p(q.begin(), q.end());
    auto g_along = [&](double t) {
      p[0] = t;
      return g_scalar(*model, p);
    };
    double integral;
    try {
      integral = quad(g_along, x0, q[0], quad_spec);
    } catch (const QuadratureError& e) {
      throw OutsideDomainError(std::string("kinetic quadrature failed on segment to q = ") +
                               detail::format_point(q) + ": " + e.what());
    }
    Mat k(1, 1);
    k(0, 0) = xi_at(q) * std::exp(-integral);
    return k;
  };
  return {1, std::move(field), detail::probe_validity(*model), xi};
}

/// User-supplied K_{mu nu} as expressions in the chart coordinates; only
/// checked, never solved for.
inline KineticSolution kinetic_from_exprs(const ModelSpec& spec, const ExprMatrix& entries) {
  const std::size_t d = spec.dou();
  if (entries.size() != d) throw Error("kinetic matrix must be " + std::to_string(d) + "x" + std::to_string(d));
  auto model = std::make_shared<const ModelSpec>(spec);
  auto programs = std::make_shared<std::vector<expr::Program>>();
  for (const auto& row : entries) {
    if (row.size() != d) throw Error("kinetic matrix must be " + std::to_string(d) + "x" + std::to_string(d));
    for (const auto& e : row) programs->push_back(model->compile(e));
  }
  KineticSolution::Field field = [model, programs, d](std::span<const double> q) {
    Vec s = model->slots(q);
    Mat k(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) k(i, j) = (*programs)[i * d + j](s);
    return k;
  };
  return {d, std::move(field), "user-supplied kinetic form"};
}

/// Reads a kinetic file: section [kinetic] with upper-triangle keys K11,
/// K12, ... (or K1_2 ...) holding expressions in the adapted chart.
inline KineticSolution load_kinetic(const ModelSpec& spec, std::string_view text) {
  const file::Document doc = file::parse_document(text);
  const file::Section* s = doc.find("kinetic");
  if (!s) throw ModelError("missing section [kinetic]");
  return kinetic_from_exprs(spec, detail::symmetric_section(*s, "K", spec.dou()));
}

/// dK/dq^j at q by the fourth-order central stencil.  K often has large
/// higher derivatives near the edge of the validity domain, where the
/// three-point stencil alone is not accurate enough for residual checks.
inline Mat kinetic_derivative(const KineticSolution& k, std::span<const double> q, std::size_t j) {
  const double h = default_fd_step(q[j]);
  Vec x(q.begin(), q.end());
  auto at = [&](double offset) {
    x[j] = q[j] + offset;
    return k(x);
  };
  const Mat p2 = at(2.0 * h), p1 = at(h), m1 = at(-h), m2 = at(-2.0 * h);
  return (1.0 / (12.0 * h)) * (8.0 * (p1 - m1) - (p2 - m2));
}

/// (dK_{t2 t3}/dq^{t1} + G^{mu nu}_{t1 t2 t3} K_{mu nu}) a^{t1} a^{t2} a^{t3}.
inline double kinetic_residual(const ModelSpec& spec, const KineticSolution& k, std::span<const double> q,
                               std::span<const double> a) {
  const std::size_t d = spec.dou();
  if (a.size() != d || k.dim() != d) throw Error("kinetic residual: dimension mismatch");
  const GTensor g = g_tensor(spec, q);
  const Mat kq = k(q);
  double r = 0.0;
  for (std::size_t t1 = 0; t1 < d; ++t1) {
    const Mat dk = kinetic_derivative(k, q, t1);
    for (std::size_t t2 = 0; t2 < d; ++t2)
      for (std::size_t t3 = 0; t3 < d; ++t3) {
        double term = dk(t2, t3);
        for (std::size_t mu = 0; mu < d; ++mu)
          for (std::size_t nu = 0; nu < d; ++nu) term += g(mu, nu, t1, t2, t3) * kq(mu, nu);
        r += term * a[t1] * a[t2] * a[t3];
      }
  }
  return r;
}

/// dK/dx + G K for one degree of underactuation.
inline double kinetic_residual_scalar(const ModelSpec& spec, const KineticSolution& k, std::span<const double> q) {
  return kinetic_derivative(k, q, 0)(0, 0) + g_scalar(spec, q) * k.scalar(q);
}

}  // namespace eshape
