#pragma once

// Pointwise geometry in an adapted chart: H_{ij}, the projection matrix
// P^{k mu} onto the complement along the actuation codistribution, and the
// coefficients G of the kinetic equation.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "eshape/error.hpp"
#include "eshape/model.hpp"
#include "eshape/numerics.hpp"

namespace eshape {

struct FramePoint {
  Vec q;
  Mat h_upper;  ///< H^{ij}(q), the model's inverse mass matrix
  Mat h_lower;  ///< H_{ij}(q) = (H^{ij})^{-1}
  Mat phat;     ///< n x (n-m), column mu is P^{. mu}
  Mat thetas;   ///< m x n actuation coefficients
};

namespace detail {

inline std::string format_point(std::span<const double> q) {
  std::string s = "(";
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(q[i]);
  }
  return s + ")";
}

}  // namespace detail

/// Frame data at q.  P is the unique solution of
///   H_{tau k} P^{k mu} = delta_tau^mu,   theta_{a k} P^{k mu} = 0,
/// solved column by column from the stacked n x n system.  Throws
/// OutsideDomainError when that system is singular at q.
inline FramePoint frame_at(const ModelSpec& spec, std::span<const double> q) {
  const std::size_t n = spec.n(), d = spec.dou();
  FramePoint f;
  f.q.assign(q.begin(), q.end());
  f.h_upper = spec.mass_inverse(q);
  try {
    f.h_lower = inverse(f.h_upper);
  } catch (const SingularMatrixError&) {
    throw OutsideDomainError("mass_inverse singular at q = " + detail::format_point(q));
  }
  f.thetas = spec.actuation(q);

  std::optional<LU> lu;
  try {
    lu.emplace(stacked_matrix(f.h_lower, f.thetas, d));
  } catch (const SingularMatrixError&) {
    throw OutsideDomainError("complement lost (stacked system singular) at q = " + detail::format_point(q) +
                             ": outside U");
  }
  f.phat = Mat(n, d);
  Vec rhs(n, 0.0);
  for (std::size_t mu = 0; mu < d; ++mu) {
    std::fill(rhs.begin(), rhs.end(), 0.0);
    rhs[mu] = 1.0;
    Vec col = lu->solve(rhs);
    for (std::size_t k = 0; k < n; ++k) f.phat(k, mu) = col[k];
  }
  return f;
}

/// dH_{ij}/dq^k from the symbolic derivative of H^{ij}:
/// dH_lower = -H_lower dH_upper H_lower.
inline Mat lower_metric_derivative(const ModelSpec& spec, const FramePoint& f, std::size_t k) {
  return -1.0 * (f.h_lower * spec.mass_inverse_derivative(f.q, k) * f.h_lower);
}

/// dP^{k mu}/dq^j from differentiating the stacked system S P = (I; 0):
///   dP = -S^{-1} (dS) P,
/// with dS built from the symbolic derivatives of H^{ij} and theta.
inline Mat projection_derivative(const ModelSpec& spec, const FramePoint& f, std::size_t j) {
  const std::size_t n = spec.n(), d = spec.dou();
  const LU lu(stacked_matrix(f.h_lower, f.thetas, d));
  const Mat ds = stacked_matrix(lower_metric_derivative(spec, f, j), spec.actuation_derivative(f.q, j), d);
  Mat dp(n, d);
  Vec col(n);
  for (std::size_t mu = 0; mu < d; ++mu) {
    for (std::size_t r = 0; r < n; ++r) {
      double v = 0.0;
      for (std::size_t k = 0; k < n; ++k) v -= ds(r, k) * f.phat(k, mu);
      col[r] = v;
    }
    const Vec x = lu.solve(col);
    for (std::size_t k = 0; k < n; ++k) dp(k, mu) = x[k];
  }
  return dp;
}

inline Mat projection_derivative(const ModelSpec& spec, std::span<const double> q, std::size_t j) {
  return projection_derivative(spec, frame_at(spec, q), j);
}

/// Step of projection_derivative_fd.
inline constexpr double kProjectionStep = 1e-5;

/// dP^{k mu}/dq^j by central differences of frame_at; a cross-check for
/// projection_derivative away from the edge of the validity domain.
inline Mat projection_derivative_fd(const ModelSpec& spec, std::span<const double> q, std::size_t j,
                                    double step = kProjectionStep) {
  Vec x(q.begin(), q.end());
  x[j] = q[j] + step;
  const Mat plus = frame_at(spec, x).phat;
  x[j] = q[j] - step;
  const Mat minus = frame_at(spec, x).phat;
  return (0.5 / step) * (plus - minus);
}

/// G^{mu nu}_{t1 t2 t3} with all five indices in 0..d-1, d = n - m.
class GTensor {
 public:
  explicit GTensor(std::size_t d) : d_(d), data_(d * d * d * d * d, 0.0) {}
  std::size_t dim() const noexcept { return d_; }
  double& operator()(std::size_t mu, std::size_t nu, std::size_t t1, std::size_t t2, std::size_t t3) {
    return data_[(((mu * d_ + nu) * d_ + t1) * d_ + t2) * d_ + t3];
  }
  double operator()(std::size_t mu, std::size_t nu, std::size_t t1, std::size_t t2, std::size_t t3) const {
    return data_[(((mu * d_ + nu) * d_ + t1) * d_ + t2) * d_ + t3];
  }

 private:
  std::size_t d_;
  std::vector<double> data_;
};

/// Coefficients of the kinetic equation
///   G^{mu nu}_{t1 t2 t3} = P^{k mu} delta^nu_{t1} dH_{t2 t3}/dq^k
///                        + d(P^{i mu} P^{j nu})/dq^{t1} H_{t2 i} H_{t3 j}.
inline GTensor g_tensor(const ModelSpec& spec, std::span<const double> q) {
  const std::size_t n = spec.n(), d = spec.dou();
  const FramePoint f = frame_at(spec, q);

  std::vector<Mat> dh_lower;
  for (std::size_t k = 0; k < n; ++k) dh_lower.push_back(lower_metric_derivative(spec, f, k));
  std::vector<Mat> dp;
  for (std::size_t t = 0; t < d; ++t) dp.push_back(projection_derivative(spec, f, t));

  // A^{i mu} H_{t i}
  auto contract = [&](const Mat& p, std::size_t mu, std::size_t t) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += p(i, mu) * f.h_lower(t, i);
    return s;
  };

  GTensor g(d);
  for (std::size_t mu = 0; mu < d; ++mu)
    for (std::size_t nu = 0; nu < d; ++nu)
      for (std::size_t t1 = 0; t1 < d; ++t1)
        for (std::size_t t2 = 0; t2 < d; ++t2)
          for (std::size_t t3 = 0; t3 < d; ++t3) {
            double v = 0.0;
            if (nu == t1)
              for (std::size_t k = 0; k < n; ++k) v += f.phat(k, mu) * dh_lower[k](t2, t3);
            // d(P^{i mu} P^{j nu}) H_{t2 i} H_{t3 j}
            //   = (dP^{i mu} H_{t2 i})(P^{j nu} H_{t3 j}) + (P^{i mu} H_{t2 i})(dP^{j nu} H_{t3 j})
            v += contract(dp[t1], mu, t2) * contract(f.phat, nu, t3) +
                 contract(f.phat, mu, t2) * contract(dp[t1], nu, t3);
            g(mu, nu, t1, t2, t3) = v;
          }
  return g;
}

/// Scalar G for one degree of underactuation (d = 1):
///   G = dH_11/dq^k P^k + d(P^i P^j)/dx H_1i H_1j.
inline double g_scalar(const ModelSpec& spec, std::span<const double> q) {
  if (spec.dou() != 1) throw Error("g_scalar requires one degree of underactuation");
  const std::size_t n = spec.n();
  const FramePoint f = frame_at(spec, q);

  double g = 0.0;
  for (std::size_t k = 0; k < n; ++k) g += lower_metric_derivative(spec, f, k)(0, 0) * f.phat(k, 0);

  const Mat dp = projection_derivative(spec, f, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double dpp = dp(i, 0) * f.phat(j, 0) + f.phat(i, 0) * dp(j, 0);
      g += dpp * f.h_lower(0, i) * f.h_lower(0, j);
    }
  return g;
}

}  // namespace eshape
