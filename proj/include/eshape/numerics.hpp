#pragma once

// Small dense linear algebra, adaptive quadrature, finite differences and a
// Jacobi symmetric eigensolver.  Sizes are tiny (n <= ~20), so everything is
// plain row-major storage and O(n^3) loops.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eshape/error.hpp"

namespace eshape {

using Vec = std::vector<double>;

/// Row-major dense real matrix with fixed dimensions.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::initializer_list<std::initializer_list<double>> init)
      : rows_(init.size()), cols_(init.size() ? init.begin()->size() : 0) {
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_) throw Error("ragged matrix initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> data() const { return data_; }

  Mat transpose() const {
    Mat t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  friend Mat operator*(const Mat& a, const Mat& b) {
    if (a.cols_ != b.rows_) throw Error("matrix product dimension mismatch");
    Mat c(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const double aik = a(i, k);
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
      }
    return c;
  }

  friend Vec operator*(const Mat& a, std::span<const double> x) {
    if (a.cols_ != x.size()) throw Error("matrix-vector dimension mismatch");
    Vec y(a.rows_, 0.0);
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t j = 0; j < a.cols_; ++j) y[i] += a(i, j) * x[j];
    return y;
  }

  friend Mat operator+(Mat a, const Mat& b) {
    for (std::size_t k = 0; k < a.data_.size(); ++k) a.data_[k] += b.data_[k];
    return a;
  }
  friend Mat operator-(Mat a, const Mat& b) {
    for (std::size_t k = 0; k < a.data_.size(); ++k) a.data_[k] -= b.data_[k];
    return a;
  }
  friend Mat operator*(double s, Mat a) {
    for (double& v : a.data_) v *= s;
    return a;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double norm_inf(const Mat& a) {
  double best = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row(i)) s += std::fabs(v);
    best = std::max(best, s);
  }
  return best;
}

inline double norm_inf(std::span<const double> v) {
  double best = 0.0;
  for (double x : v) best = std::max(best, std::fabs(x));
  return best;
}

inline double frobenius_sq(const Mat& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return s;
}

inline Mat symmetrized(const Mat& a) { return 0.5 * (a + a.transpose()); }

inline bool is_symmetric(const Mat& a, double tol = 1e-12) {
  if (!a.square()) return false;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j)
      if (std::fabs(a(i, j) - a(j, i)) > tol * (1.0 + std::fabs(a(i, j)))) return false;
  return true;
}

// ---------------------------------------------------------------------------
// LU with partial pivoting

/// Packed LU factors of a square matrix, PA = LU.
class LU {
 public:
  explicit LU(Mat a) : lu_(std::move(a)), perm_(lu_.rows()) {
    if (!lu_.square()) throw Error("LU of a non-square matrix");
    const std::size_t n = lu_.rows();
    const double scale = norm_inf(lu_);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t p = k;
      for (std::size_t i = k + 1; i < n; ++i)
        if (std::fabs(lu_(i, k)) > std::fabs(lu_(p, k))) p = i;
      if (!(std::fabs(lu_(p, k)) >= 1e-13 * scale) || scale == 0.0)
        throw SingularMatrixError("singular matrix (pivot " + std::to_string(lu_(p, k)) +
                                  " at column " + std::to_string(k) + ")");
      if (p != k) {
        for (std::size_t j = 0; j < n; ++j) std::swap(lu_(p, j), lu_(k, j));
        std::swap(perm_[p], perm_[k]);
        sign_ = -sign_;
      }
      for (std::size_t i = k + 1; i < n; ++i) {
        const double f = lu_(i, k) / lu_(k, k);
        lu_(i, k) = f;
        for (std::size_t j = k + 1; j < n; ++j) lu_(i, j) -= f * lu_(k, j);
      }
    }
  }

  Vec solve(std::span<const double> b) const {
    const std::size_t n = lu_.rows();
    if (b.size() != n) throw Error("right-hand side dimension mismatch");
    Vec x(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = b[perm_[i]];
      for (std::size_t j = 0; j < i; ++j) s -= lu_(i, j) * x[j];
      x[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = x[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= lu_(i, j) * x[j];
      x[i] = s / lu_(i, i);
    }
    return x;
  }

  double determinant() const {
    double d = sign_;
    for (std::size_t i = 0; i < lu_.rows(); ++i) d *= lu_(i, i);
    return d;
  }

 private:
  Mat lu_;
  std::vector<std::size_t> perm_;
  double sign_ = 1.0;
};

/// Solves Ax = b by Gaussian elimination with partial pivoting.  Throws
/// SingularMatrixError when a pivot falls below 1e-13 * ||A||_inf.
inline Vec solve_linear(const Mat& a, std::span<const double> b) { return LU(a).solve(b); }

inline Mat inverse(const Mat& a) {
  LU lu(a);
  const std::size_t n = a.rows();
  Mat inv(n, n);
  Vec e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    Vec col = lu.solve(e);
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  return inv;
}

/// Determinant; 0 when the matrix is numerically singular.
inline double determinant(const Mat& a) {
  try {
    return LU(a).determinant();
  } catch (const SingularMatrixError&) {
    return 0.0;
  }
}

// ---------------------------------------------------------------------------
// Symmetric eigenvalues (cyclic Jacobi)

/// All eigenvalues of the symmetric part of `m`, ascending.
inline Vec eigenvalues_sym(const Mat& m) {
  if (!m.square()) throw Error("eigenvalues of a non-square matrix");
  Mat a = symmetrized(m);
  const std::size_t n = a.rows();
  const double scale = std::max(1.0, std::sqrt(frobenius_sq(a)));
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
    if (std::sqrt(off) <= 1e-12 * scale) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::fabs(theta) + std::hypot(1.0, theta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  Vec ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

inline double min_eigen_sym(const Mat& m) {
  if (!m.square()) throw Error("eigenvalues of a non-square matrix");
  if (m.rows() == 0) throw Error("eigenvalues of an empty matrix");
  return eigenvalues_sym(m).front();
}

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod (7/15 would do; 10/21 converges in one panel on the
// short smooth segments used here)

struct QuadSpec {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  std::size_t max_subdivisions = std::size_t{1} << 14;
};

namespace detail {

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel gauss_kronrod21(F& f, double a, double b) {
  static constexpr std::array<double, 11> xgk{
      0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
      0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
      0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
      0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
      0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
      0.000000000000000000000000000000000};
  static constexpr std::array<double, 11> wgk{
      0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
      0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
      0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
      0.123491976262065851077208980161941, 0.134709217311473325928054001771707,
      0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
      0.149445554002916905664936468389821};
  // Gauss weights for the odd-indexed Kronrod abscissae.
  static constexpr std::array<double, 5> wg{
      0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
      0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
      0.295524224714752870173892994651338};

  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  auto sample = [&](double x) {
    double v = f(x);
    if (!std::isfinite(v))
      throw QuadratureError("non-finite integrand at t = " + std::to_string(x));
    return v;
  };
  const double fc = sample(center);
  double kronrod = wgk[10] * fc;
  double gauss = 0.0;
  for (std::size_t j = 0; j < 10; ++j) {
    const double dx = half * xgk[j];
    const double s = sample(center - dx) + sample(center + dx);
    kronrod += wgk[j] * s;
    if (j % 2 == 1) gauss += wg[j / 2] * s;
  }
  return {a, b, kronrod * half, std::fabs((kronrod - gauss) * half)};
}

}  // namespace detail

/// Integral of f over [a, b] by globally adaptive Gauss-Kronrod 10/21.
/// quad(f, a, a) is exactly 0; b < a integrates in reverse.
template <class F>
double quad(F&& f, double a, double b, const QuadSpec& spec = {}) {
  if (!(spec.abs_tol > 0.0) || !(spec.rel_tol > 0.0)) throw Error("quadrature tolerances must be > 0");
  if (a == b) return 0.0;
  if (b < a) return -quad(f, b, a, spec);

  std::priority_queue<detail::Panel> panels;
  detail::Panel first = detail::gauss_kronrod21(f, a, b);
  double total = first.value;
  double error = first.error;
  panels.push(first);
  std::size_t count = 1;
  while (error > std::max(spec.abs_tol, spec.rel_tol * std::fabs(total))) {
    if (count >= spec.max_subdivisions)
      throw QuadratureError("quadrature did not converge after " + std::to_string(count) +
                            " subdivisions (error estimate " + std::to_string(error) + ")");
    detail::Panel worst = panels.top();
    panels.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    detail::Panel left = detail::gauss_kronrod21(f, worst.a, mid);
    detail::Panel right = detail::gauss_kronrod21(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    panels.push(left);
    panels.push(right);
    ++count;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Finite differences

inline double default_fd_step(double qi) { return 1e-4 * (1.0 + std::fabs(qi)); }

namespace detail {
inline double finite_sample(double v) {
  if (!std::isfinite(v)) throw Error("non-finite value on finite-difference stencil");
  return v;
}
}  // namespace detail

/// Central-difference gradient.  `step <= 0` selects 1e-4 * (1 + |q_i|).
template <class F>
Vec fd_grad(F&& f, std::span<const double> q, double step = 0.0) {
  const std::size_t n = q.size();
  Vec g(n), x(q.begin(), q.end());
  for (std::size_t i = 0; i < n; ++i) {
    const double h = step > 0.0 ? step : default_fd_step(q[i]);
    x[i] = q[i] + h;
    const double fp = detail::finite_sample(f(std::as_const(x)));
    x[i] = q[i] - h;
    const double fm = detail::finite_sample(f(std::as_const(x)));
    x[i] = q[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Hessian by nested central differences, symmetrized.
template <class F>
Mat fd_hess(F&& f, std::span<const double> q, double step = 0.0) {
  const std::size_t n = q.size();
  Mat hess(n, n);
  Vec x(q.begin(), q.end());
  auto at = [&](std::size_t i, double di, std::size_t j, double dj) {
    x[i] += di;
    x[j] += dj;
    const double v = detail::finite_sample(f(std::as_const(x)));
    x[i] = q[i];
    x[j] = q[j];
    return v;
  };
  const double f0 = detail::finite_sample(f(std::as_const(x)));
  for (std::size_t i = 0; i < n; ++i) {
    const double hi = step > 0.0 ? step : default_fd_step(q[i]);
    hess(i, i) = (at(i, 2 * hi, i, 0.0) - 2.0 * f0 + at(i, -2 * hi, i, 0.0)) / (4.0 * hi * hi);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double hj = step > 0.0 ? step : default_fd_step(q[j]);
      const double v = (at(i, hi, j, hj) - at(i, hi, j, -hj) - at(i, -hi, j, hj) +
                        at(i, -hi, j, -hj)) /
                       (4.0 * hi * hj);
      hess(i, j) = v;
      hess(j, i) = v;
    }
  }
  return hess;
}

}  // namespace eshape
