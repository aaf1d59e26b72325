#pragma once

// Potential matching condition: the fields u_mu = dh/dq^k P^{k tau} K_{tau mu},
// their integrability, the quadrature construction of the shaped potential
// with boundary data (varpi/2)|s|^2 on the actuated slice, and the
// positive-definiteness certificate of its Hessian at the equilibrium.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eshape/error.hpp"
#include "eshape/frame.hpp"
#include "eshape/kinetic.hpp"
#include "eshape/model.hpp"
#include "eshape/numerics.hpp"

namespace eshape {

/// u_mu(q) = dh/dq^k P^{k tau} K_{tau mu}, with the gradient of h symbolic.
inline Vec u_fields(const ModelSpec& spec, const KineticSolution& k, std::span<const double> q) {
  const std::size_t n = spec.n(), d = spec.dou();
  const FramePoint f = frame_at(spec, q);
  const Vec grad = spec.potential_gradient(q);
  const Mat kq = k(q);
  Vec u(d, 0.0);
  for (std::size_t mu = 0; mu < d; ++mu)
    for (std::size_t tau = 0; tau < d; ++tau) {
      double gp = 0.0;
      for (std::size_t i = 0; i < n; ++i) gp += grad[i] * f.phat(i, tau);
      u[mu] += gp * kq(tau, mu);
    }
  return u;
}

using UField = std::function<Vec(std::span<const double>)>;

/// Regular grid center +- half_width with `steps` points per axis, in
/// lexicographic order (first coordinate slowest).
inline std::vector<Vec> box_grid(const Vec& center, double half_width, std::size_t steps) {
  const std::size_t n = center.size();
  if (steps == 0) throw Error("grid needs at least one step");
  std::vector<double> axis(steps);
  for (std::size_t s = 0; s < steps; ++s)
    axis[s] = steps == 1 ? 0.0 : -half_width + 2.0 * half_width * static_cast<double>(s) / static_cast<double>(steps - 1);
  std::vector<Vec> pts;
  std::vector<std::size_t> idx(n, 0);
  for (;;) {
    Vec p(center);
    for (std::size_t i = 0; i < n; ++i) p[i] += axis[idx[i]];
    pts.push_back(std::move(p));
    std::size_t i = n;
    while (i > 0 && ++idx[i - 1] == steps) idx[--i] = 0;
    if (i == 0) break;
  }
  return pts;
}

/// max over grid points and pairs mu < nu of |du_nu/dq^mu - du_mu/dq^nu|,
/// derivatives by central differences.  0 when n - m = 1.
inline double integrability_residual(const UField& u, std::size_t dou, const std::vector<Vec>& grid) {
  if (dou < 2) return 0.0;
  double worst = 0.0;
  for (const Vec& q : grid) {
    // jac(mu, nu) = du_nu / dq^mu
    Mat jac(dou, dou);
    Vec x = q;
    for (std::size_t mu = 0; mu < dou; ++mu) {
      const double h = default_fd_step(q[mu]);
      x[mu] = q[mu] + h;
      const Vec up = u(x);
      x[mu] = q[mu] - h;
      const Vec um = u(x);
      x[mu] = q[mu];
      for (std::size_t nu = 0; nu < dou; ++nu) jac(mu, nu) = (up[nu] - um[nu]) / (2.0 * h);
    }
    for (std::size_t mu = 0; mu < dou; ++mu)
      for (std::size_t nu = mu + 1; nu < dou; ++nu) worst = std::max(worst, std::fabs(jac(mu, nu) - jac(nu, mu)));
  }
  return worst;
}

inline double integrability_residual(const ModelSpec& spec, const KineticSolution& k, const std::vector<Vec>& grid) {
  return integrability_residual([&](std::span<const double> q) { return u_fields(spec, k, q); }, spec.dou(), grid);
}

struct PotentialOptions {
  double integrability_tol = 1e-6;
  double grid_half_width = 0.1;
  std::size_t grid_steps = 9;
  QuadSpec quad;
};

/// Shaped potential
///   hhat(q) = sum_mu int_0^{q^mu} u_mu(0,..,0,t,q^{mu+1},..,q^n) dt
///             + (varpi/2) sum_a (q^{n-m+a})^2.
class ShapedPotential {
 public:
  ShapedPotential(std::shared_ptr<const ModelSpec> spec, KineticSolution k, double varpi, QuadSpec quad)
      : spec_(std::move(spec)), k_(std::move(k)), varpi_(varpi), quad_(quad) {}

  double varpi() const noexcept { return varpi_; }
  const ModelSpec& spec() const noexcept { return *spec_; }
  const KineticSolution& kinetic() const noexcept { return k_; }

  double operator()(std::span<const double> q) const {
    const std::size_t n = spec_->n(), d = spec_->dou();
    if (q.size() != n) throw Error("point has wrong dimension");
    double value = 0.0;
    for (std::size_t mu = 0; mu < d; ++mu) {
      Vec p(q.begin(), q.end());
      std::fill(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(mu), 0.0);
      auto integrand = [&](double t) {
        p[mu] = t;
        return u_fields(*spec_, k_, p)[mu];
      };
      try {
        value += quad(integrand, 0.0, q[mu], quad_);
      } catch (const QuadratureError& e) {
        throw OutsideDomainError(std::string("potential quadrature failed at q = ") + detail::format_point(q) +
                                 ": " + e.what());
      }
    }
    double s2 = 0.0;
    for (std::size_t a = d; a < n; ++a) s2 += q[a] * q[a];
    return value + 0.5 * varpi_ * s2;
  }

 private:
  std::shared_ptr<const ModelSpec> spec_;
  KineticSolution k_;
  double varpi_;
  QuadSpec quad_;
};

namespace detail {
inline void require_centered(const ModelSpec& spec) {
  if (norm_inf(spec.equilibrium()) != 0.0)
    throw Error("chart is not centered at the equilibrium (use centered())");
}
}  // namespace detail

/// Builds the shaped potential after checking integrability of the u fields
/// on a box grid around the equilibrium.
inline ShapedPotential build_hhat(const ModelSpec& spec, const KineticSolution& k, double varpi,
                                  const PotentialOptions& opt = {}) {
  detail::require_centered(spec);
  if (k.dim() != spec.dou()) throw Error("kinetic solution has the wrong dimension");
  if (spec.dou() > 1) {
    const double r =
        integrability_residual(spec, k, box_grid(spec.equilibrium(), opt.grid_half_width, opt.grid_steps));
    if (!(r <= opt.integrability_tol))
      throw Error("integrability condition fails: residual " + std::to_string(r) + " > tolerance " +
                  std::to_string(opt.integrability_tol));
  }
  return ShapedPotential(std::make_shared<const ModelSpec>(spec), k, varpi, opt.quad);
}

// ---------------------------------------------------------------------------
// Positivity certificate

struct PositivityCertificate {
  Mat M;  ///< (n-m) x (n-m), M_{mu nu} = du_nu/dq^mu (0)
  Mat A;  ///< (n-m) x m, A_{mu a} = du_mu/dq^{n-m+a} (0)
  double lambda_min = 0.0;
  double norm_a_sq = 0.0;  ///< Frobenius
  std::optional<double> varpi_min;  ///< ||A||^2 / lambda_min, absent when M is not positive-definite
  double varpi = 0.0;
  bool pass = false;
  std::string verdict;
  Mat hess0;  ///< [[M, A], [A^t, varpi I]]
};

/// Certificate: M positive-definite and varpi > ||A||^2 / lambda_min(M)
/// make the Hessian of the shaped potential at 0 positive-definite.  When
/// `varpi` is omitted, 2 max(varpi_min, 1) is used.
inline PositivityCertificate certificate(const ModelSpec& spec, const KineticSolution& k,
                                         std::optional<double> varpi = std::nullopt) {
  detail::require_centered(spec);
  const std::size_t n = spec.n(), d = spec.dou(), m = spec.m();
  const Vec origin(n, 0.0);

  // jac(j, mu) = du_mu/dq^j at 0
  Mat jac(n, d);
  Vec x = origin;
  for (std::size_t j = 0; j < n; ++j) {
    const double h = default_fd_step(0.0);
    x[j] = h;
    const Vec up = u_fields(spec, k, x);
    x[j] = -h;
    const Vec um = u_fields(spec, k, x);
    x[j] = 0.0;
    for (std::size_t mu = 0; mu < d; ++mu) jac(j, mu) = (up[mu] - um[mu]) / (2.0 * h);
  }

  PositivityCertificate c;
  c.M = Mat(d, d);
  c.A = Mat(d, m);
  for (std::size_t mu = 0; mu < d; ++mu) {
    for (std::size_t nu = 0; nu < d; ++nu) c.M(mu, nu) = jac(mu, nu);
    for (std::size_t a = 0; a < m; ++a) c.A(mu, a) = jac(d + a, mu);
  }
  c.lambda_min = min_eigen_sym(c.M);
  c.norm_a_sq = frobenius_sq(c.A);
  if (c.lambda_min > 0.0) c.varpi_min = c.norm_a_sq / c.lambda_min;
  c.varpi = varpi ? *varpi : 2.0 * std::max(c.varpi_min.value_or(0.0), 1.0);

  if (!(c.lambda_min > 0.0)) {
    c.pass = false;
    c.verdict = "M not positive-definite";
  } else if (!(c.varpi > *c.varpi_min)) {
    c.pass = false;
    c.verdict = "varpi not above the bound ||A||^2/lambda_min";
  } else {
    c.pass = true;
    c.verdict = "pass";
  }

  c.hess0 = Mat(n, n);
  for (std::size_t mu = 0; mu < d; ++mu) {
    for (std::size_t nu = 0; nu < d; ++nu) c.hess0(mu, nu) = c.M(mu, nu);
    for (std::size_t a = 0; a < m; ++a) {
      c.hess0(mu, d + a) = c.A(mu, a);
      c.hess0(d + a, mu) = c.A(mu, a);
    }
  }
  for (std::size_t a = 0; a < m; ++a) c.hess0(d + a, d + a) = c.varpi;
  return c;
}

}  // namespace eshape
